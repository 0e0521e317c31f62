#pragma once

// Relatedness structures over the output channels of a layer: a thresholded
// Pearson correlation graph and an agglomerative clustering tree.

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lassoprune {

struct PearsonResult {
  double r = 0.0;
  // False when either input has zero variance; r is then 0.
  bool defined = true;
};

PearsonResult pearson(std::span<const double> u, std::span<const double> v);

struct Edge {
  std::size_t l = 0;
  std::size_t m = 0;
  double f = 0.0;
};

struct CorrelationGraph {
  std::size_t n_nodes = 0;
  std::vector<Edge> edges;
  double threshold = 0.6;
  // Columns with zero variance; they carry no edges.
  std::vector<std::size_t> zero_variance;
};

/// Edge (l, m, f) for every pair with |pearson(y_l, y_m)| > th, l < m.
CorrelationGraph build_graph(const Eigen::MatrixXd& y_cols, double th);

enum class Linkage { Average, Complete };

enum class HeightMode {
  // h_v = clamp(merge distance / max merge distance, 0.01, 0.99)
  DataDriven,
  Constant,
};

struct TreeNode {
  std::vector<std::size_t> children;  // empty for leaves, two ids otherwise
  std::vector<std::size_t> group;     // sorted member columns
  double h = 0.0;                     // internal nodes only
  double merge_distance = 0.0;        // internal nodes only
  bool is_leaf() const { return children.empty(); }
};

/// Binary agglomerative tree; leaves are ids [0, n_leaves), internal nodes
/// follow in merge order and the root is the last node.
struct HierTree {
  std::vector<TreeNode> nodes;
  std::size_t root = 0;
  std::size_t n_leaves = 0;

  /// Parent id of each node; the root maps to itself.
  std::vector<std::size_t> parents() const;
  void validate() const;
};

struct TreeOptions {
  Linkage linkage = Linkage::Average;
  HeightMode height = HeightMode::DataDriven;
  double constant_h = 0.5;
};

/// Clusters columns under distance 1 - pearson. Ties merge the pair whose
/// smallest member indices are lexicographically lowest.
HierTree build_tree(const Eigen::MatrixXd& y_cols, const TreeOptions& options = {});

using NodeWeights = std::vector<double>;

/// Leaf: product of ancestor h. Internal: (1 - h_v) times product of ancestor h.
NodeWeights node_weights(const HierTree& tree);

std::string graph_to_json(const CorrelationGraph& graph);
std::string tree_to_json(const HierTree& tree, const NodeWeights& weights);

}  // namespace lassoprune
