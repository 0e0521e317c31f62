#include "lassoprune/structure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "lassoprune/error.hpp"

namespace lassoprune {

namespace {

// A centered vector counts as constant when its spread is negligible next to
// its magnitude; this absorbs rounding left over from Gram centering.
bool negligible_spread(double sum_sq, double scale, std::size_t n) {
  const double floor = 1e-12 * scale;
  return !(sum_sq > floor * floor * static_cast<double>(n));
}

}  // namespace

PearsonResult pearson(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error(ErrorCode::LengthMismatch, "pearson inputs differ in length");
  if (u.size() < 2) throw Error(ErrorCode::LengthMismatch, "pearson needs at least two samples");
  const auto n = static_cast<double>(u.size());
  const double mu = std::accumulate(u.begin(), u.end(), 0.0) / n;
  const double mv = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double suv = 0.0, suu = 0.0, svv = 0.0, su = 0.0, sv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double du = u[i] - mu, dv = v[i] - mv;
    suv += du * dv;
    suu += du * du;
    svv += dv * dv;
    su = std::max(su, std::abs(u[i]));
    sv = std::max(sv, std::abs(v[i]));
  }
  if (negligible_spread(suu, su, u.size()) || negligible_spread(svv, sv, v.size())) return {0.0, false};
  return {std::clamp(suv / std::sqrt(suu * svv), -1.0, 1.0), true};
}

namespace {

// Columns centered and scaled to unit norm; constant columns are left zero.
Eigen::MatrixXd standardize(const Eigen::MatrixXd& y, std::vector<std::size_t>& zero_variance) {
  Eigen::MatrixXd z = y.rowwise() - y.colwise().mean();
  for (Eigen::Index k = 0; k < z.cols(); ++k) {
    const double ss = z.col(k).squaredNorm();
    const double scale = y.col(k).cwiseAbs().maxCoeff();
    if (negligible_spread(ss, scale, static_cast<std::size_t>(z.rows()))) {
      z.col(k).setZero();
      zero_variance.push_back(static_cast<std::size_t>(k));
    } else {
      z.col(k) /= std::sqrt(ss);
    }
  }
  return z;
}

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& y, std::vector<std::size_t>& zero_variance) {
  if (y.rows() < 2) throw Error(ErrorCode::LengthMismatch, "correlation needs at least two rows");
  const Eigen::MatrixXd z = standardize(y, zero_variance);
  Eigen::MatrixXd r = z.transpose() * z;
  return r.cwiseMax(-1.0).cwiseMin(1.0);
}

}  // namespace

CorrelationGraph build_graph(const Eigen::MatrixXd& y_cols, double th) {
  if (y_cols.cols() < 1) throw Error(ErrorCode::InvalidConfig, "graph needs at least one column");
  if (!(th >= 0.0 && th < 1.0)) throw Error(ErrorCode::InvalidConfig, "threshold must lie in [0, 1)");
  CorrelationGraph g;
  g.n_nodes = static_cast<std::size_t>(y_cols.cols());
  g.threshold = th;
  if (y_cols.cols() == 1) return g;
  const Eigen::MatrixXd r = correlation_matrix(y_cols, g.zero_variance);
  std::vector<bool> dead(g.n_nodes, false);
  for (auto k : g.zero_variance) dead[k] = true;
  for (std::size_t l = 0; l < g.n_nodes; ++l) {
    if (dead[l]) continue;
    for (std::size_t m = l + 1; m < g.n_nodes; ++m) {
      if (dead[m]) continue;
      const double f = r(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m));
      if (std::abs(f) > th) g.edges.push_back({l, m, f});
    }
  }
  return g;
}

std::vector<std::size_t> HierTree::parents() const {
  std::vector<std::size_t> parent(nodes.size());
  std::iota(parent.begin(), parent.end(), 0);
  for (std::size_t v = 0; v < nodes.size(); ++v)
    for (auto c : nodes[v].children) parent[c] = v;
  return parent;
}

void HierTree::validate() const {
  if (n_leaves < 1 || nodes.size() != 2 * n_leaves - 1)
    throw Error(ErrorCode::InvalidConfig, "tree must have 2*n_leaves-1 nodes");
  if (root != nodes.size() - 1) throw Error(ErrorCode::InvalidConfig, "root must be the last node");
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    const auto& node = nodes[v];
    if (v < n_leaves) {
      if (!node.is_leaf() || node.group != std::vector<std::size_t>{v})
        throw Error(ErrorCode::InvalidConfig, "leaf groups must be singletons");
      continue;
    }
    if (node.children.size() != 2) throw Error(ErrorCode::InvalidConfig, "internal nodes must be binary");
    if (!(node.h > 0.0 && node.h < 1.0)) throw Error(ErrorCode::InvalidConfig, "h must lie in (0, 1)");
    std::vector<std::size_t> merged;
    for (auto c : node.children) {
      if (c >= v) throw Error(ErrorCode::InvalidConfig, "children must precede their parent");
      merged.insert(merged.end(), nodes[c].group.begin(), nodes[c].group.end());
    }
    std::sort(merged.begin(), merged.end());
    if (merged != node.group) throw Error(ErrorCode::InvalidConfig, "group is not the union of children");
  }
}

HierTree build_tree(const Eigen::MatrixXd& y_cols, const TreeOptions& options) {
  const auto k = static_cast<std::size_t>(y_cols.cols());
  if (k < 2) throw Error(ErrorCode::InvalidConfig, "tree needs at least two columns");
  if (options.height == HeightMode::Constant && !(options.constant_h > 0.0 && options.constant_h < 1.0))
    throw Error(ErrorCode::InvalidConfig, "constant h must lie in (0, 1)");

  std::vector<std::size_t> zero_variance;
  const Eigen::MatrixXd r = correlation_matrix(y_cols, zero_variance);
  std::vector<bool> dead(k, false);
  for (auto c : zero_variance) dead[c] = true;

  // Cluster-level distance matrix indexed by the cluster's smallest leaf.
  Eigen::MatrixXd dist(k, k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      dist(a, b) = (a == b) ? 0.0
                   : (dead[a] || dead[b])
                       ? 1.0
                       : 1.0 - r(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));

  HierTree tree;
  tree.n_leaves = k;
  tree.nodes.resize(k);
  for (std::size_t i = 0; i < k; ++i) tree.nodes[i].group = {i};

  std::vector<std::size_t> node_of(k);  // slot (min leaf) -> node id
  std::iota(node_of.begin(), node_of.end(), 0);
  std::vector<std::size_t> size(k, 1);
  std::vector<bool> active(k, true);

  for (std::size_t step = 0; step + 1 < k; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < k; ++a) {
      if (!active[a]) continue;
      for (std::size_t b = a + 1; b < k; ++b) {
        if (!active[b]) continue;
        if (dist(a, b) < best) {
          best = dist(a, b);
          ba = a;
          bb = b;
        }
      }
    }
    TreeNode node;
    node.children = {node_of[ba], node_of[bb]};
    node.merge_distance = best;
    node.group = tree.nodes[node_of[ba]].group;
    const auto& other = tree.nodes[node_of[bb]].group;
    node.group.insert(node.group.end(), other.begin(), other.end());
    std::sort(node.group.begin(), node.group.end());

    // Lance-Williams update into slot ba (it keeps the smaller min leaf).
    for (std::size_t c = 0; c < k; ++c) {
      if (!active[c] || c == ba || c == bb) continue;
      double d = 0.0;
      if (options.linkage == Linkage::Average)
        d = (static_cast<double>(size[ba]) * dist(ba, c) + static_cast<double>(size[bb]) * dist(bb, c)) /
            static_cast<double>(size[ba] + size[bb]);
      else
        d = std::max(dist(ba, c), dist(bb, c));
      dist(ba, c) = dist(c, ba) = d;
    }
    size[ba] += size[bb];
    active[bb] = false;
    node_of[ba] = tree.nodes.size();
    tree.nodes.push_back(std::move(node));
  }
  tree.root = tree.nodes.size() - 1;

  double max_merge = 0.0;
  for (std::size_t v = k; v < tree.nodes.size(); ++v)
    max_merge = std::max(max_merge, tree.nodes[v].merge_distance);
  for (std::size_t v = k; v < tree.nodes.size(); ++v) {
    auto& node = tree.nodes[v];
    if (options.height == HeightMode::Constant)
      node.h = options.constant_h;
    else
      node.h = std::clamp(max_merge > 0.0 ? node.merge_distance / max_merge : 0.0, 0.01, 0.99);
  }
  return tree;
}

NodeWeights node_weights(const HierTree& tree) {
  NodeWeights w(tree.nodes.size(), 0.0);
  // Product of ancestor h values, filled top-down (parents have larger ids).
  std::vector<double> ancestor_product(tree.nodes.size(), 1.0);
  for (std::size_t v = tree.nodes.size(); v-- > 0;) {
    const auto& node = tree.nodes[v];
    if (node.is_leaf()) {
      w[v] = ancestor_product[v];
    } else {
      w[v] = (1.0 - node.h) * ancestor_product[v];
      for (auto c : node.children) ancestor_product[c] = ancestor_product[v] * node.h;
    }
  }
  return w;
}

std::string graph_to_json(const CorrelationGraph& graph) {
  nlohmann::ordered_json doc;
  doc["n_nodes"] = graph.n_nodes;
  doc["threshold"] = graph.threshold;
  doc["edges"] = nlohmann::ordered_json::array();
  for (const auto& e : graph.edges) doc["edges"].push_back({e.l, e.m, e.f});
  doc["zero_variance"] = graph.zero_variance;
  return doc.dump(1) + "\n";
}

std::string tree_to_json(const HierTree& tree, const NodeWeights& weights) {
  nlohmann::ordered_json doc;
  doc["n_leaves"] = tree.n_leaves;
  doc["root"] = tree.root;
  doc["nodes"] = nlohmann::ordered_json::array();
  for (std::size_t v = 0; v < tree.nodes.size(); ++v) {
    const auto& node = tree.nodes[v];
    nlohmann::ordered_json jn;
    jn["id"] = v;
    jn["children"] = node.children;
    jn["group"] = node.group;
    if (!node.is_leaf()) {
      jn["h"] = node.h;
      jn["merge_distance"] = node.merge_distance;
    }
    if (v < weights.size()) jn["weight"] = weights[v];
    doc["nodes"].push_back(std::move(jn));
  }
  return doc.dump(1) + "\n";
}

}  // namespace lassoprune
