#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "lassoprune/error.hpp"
#include "lassoprune/structure.hpp"
#include "oracles.hpp"

using namespace lassoprune;
using doctest::Approx;

namespace {

// Pearson by the textbook formula, independent of the library's centered path.
double pearson_ref(const std::vector<double>& u, const std::vector<double>& v) {
  const double n = static_cast<double>(u.size());
  double su = 0, sv = 0, suu = 0, svv = 0, suv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    su += u[i];
    sv += v[i];
    suu += u[i] * u[i];
    svv += v[i] * v[i];
    suv += u[i] * v[i];
  }
  return (n * suv - su * sv) / std::sqrt((n * suu - su * su) * (n * svv - sv * sv));
}

HierTree two_leaf_tree(double h) {
  HierTree t;
  t.n_leaves = 2;
  t.nodes.resize(3);
  t.nodes[0].group = {0};
  t.nodes[1].group = {1};
  t.nodes[2].children = {0, 1};
  t.nodes[2].group = {0, 1};
  t.nodes[2].h = h;
  t.root = 2;
  return t;
}

bool laminar(const HierTree& t) {
  for (const auto& a : t.nodes) {
    for (const auto& b : t.nodes) {
      std::vector<std::size_t> common;
      std::set_intersection(a.group.begin(), a.group.end(), b.group.begin(), b.group.end(),
                            std::back_inserter(common));
      if (common.empty()) continue;
      if (common != a.group && common != b.group) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("pearson examples") {
  const std::vector<double> u{1, 2, 3}, rev{3, 2, 1};
  CHECK(pearson(u, u).r == Approx(1.0).epsilon(1e-15));
  CHECK(pearson(u, rev).r == Approx(-1.0).epsilon(1e-15));
  const std::vector<double> a{1, 2, 3, 4}, b{1, 2, 3, 5};
  CHECK(pearson(a, b).r == Approx(0.9827).epsilon(1e-3));
  // 6.5 / sqrt(5 * 8.75)
  CHECK(pearson(a, b).r == Approx(6.5 / std::sqrt(43.75)).epsilon(1e-14));
  CHECK(pearson(a, b).r == Approx(pearson_ref({1, 2, 3, 4}, {1, 2, 3, 5})).epsilon(1e-14));
}

TEST_CASE("pearson zero variance and errors") {
  const std::vector<double> c{2, 2, 2}, u{1, 2, 3};
  const auto r = pearson(c, u);
  CHECK_FALSE(r.defined);
  CHECK(r.r == 0.0);
  try {
    pearson(u, std::vector<double>{1, 2});
    FAIL("expected length-mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
}

TEST_CASE("pearson matches the textbook formula on random vectors") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> u(12), v(12);
    for (std::size_t i = 0; i < 12; ++i) {
      u[i] = n(rng);
      v[i] = 0.5 * u[i] + n(rng);
    }
    const double r = pearson(u, v).r;
    CHECK(r == Approx(pearson_ref(u, v)).epsilon(1e-12));
    CHECK(std::abs(r) <= 1.0);
  }
}

TEST_CASE("graph edges for identical and negated columns") {
  Eigen::MatrixXd y(5, 2);
  y.col(0) << 1, 4, 2, 8, 5;
  y.col(1) = y.col(0);
  auto g = build_graph(y, 0.6);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].l == 0);
  CHECK(g.edges[0].m == 1);
  CHECK(g.edges[0].f == Approx(1.0));

  y.col(1) = -y.col(0);
  g = build_graph(y, 0.6);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].f == Approx(-1.0));
}

TEST_CASE("independent columns at 16384 rows produce no edges") {
  std::mt19937_64 rng(21);
  const Eigen::MatrixXd y = testing::gaussian(rng, 16384, 12);
  const auto g = build_graph(y, 0.6);
  CHECK(g.edges.empty());
}

TEST_CASE("graph threshold is strict and edges are bounded") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd base = testing::gaussian(rng, 40, 3);
  Eigen::MatrixXd y(40, 9);
  const Eigen::MatrixXd noise = testing::gaussian(rng, 40, 9);
  for (int k = 0; k < 9; ++k) y.col(k) = base.col(k % 3) + 0.4 * noise.col(k);
  for (double th : {0.0, 0.3, 0.6, 0.9}) {
    const auto g = build_graph(y, th);
    CHECK(g.edges.size() <= 36);
    for (const auto& e : g.edges) {
      CHECK(e.l < e.m);
      CHECK(std::abs(e.f) > th);
      std::vector<double> u(y.col(static_cast<Eigen::Index>(e.l)).begin(), y.col(static_cast<Eigen::Index>(e.l)).end());
      std::vector<double> v(y.col(static_cast<Eigen::Index>(e.m)).begin(), y.col(static_cast<Eigen::Index>(e.m)).end());
      CHECK(e.f == Approx(pearson_ref(u, v)).epsilon(1e-10));
    }
  }
  CHECK_THROWS_AS(build_graph(y, 1.0), Error);
  CHECK_THROWS_AS(build_graph(y, -0.1), Error);
}

TEST_CASE("graph is invariant under positive column rescaling") {
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd base = testing::gaussian(rng, 30, 2);
  Eigen::MatrixXd y(30, 6);
  const Eigen::MatrixXd noise = testing::gaussian(rng, 30, 6);
  for (int k = 0; k < 6; ++k) y.col(k) = base.col(k % 2) + 0.3 * noise.col(k);
  const auto g = build_graph(y, 0.6);
  REQUIRE_FALSE(g.edges.empty());
  std::uniform_real_distribution<double> s(0.01, 100.0);
  for (int t = 0; t < 20; ++t) {
    Eigen::MatrixXd ys = y;
    for (int k = 0; k < 6; ++k) ys.col(k) *= s(rng);
    const auto gs = build_graph(ys, 0.6);
    REQUIRE(gs.edges.size() == g.edges.size());
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
      CHECK(gs.edges[i].l == g.edges[i].l);
      CHECK(gs.edges[i].m == g.edges[i].m);
      CHECK(std::abs(gs.edges[i].f - g.edges[i].f) <= 1e-12);
    }
  }
}

TEST_CASE("zero-variance columns carry no edges") {
  Eigen::MatrixXd y(4, 3);
  y << 1, 0, 2, 2, 0, 4, 3, 0, 6, 4, 0, 8;
  const auto g = build_graph(y, 0.6);
  CHECK(g.zero_variance == std::vector<std::size_t>{1});
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].l == 0);
  CHECK(g.edges[0].m == 2);
}

TEST_CASE("tree on two columns") {
  Eigen::MatrixXd y(4, 2);
  y << 1, 2, 3, 1, 2, 2, 5, 0;
  const auto t = build_tree(y);
  REQUIRE(t.nodes.size() == 3);
  CHECK(t.root == 2);
  CHECK(t.nodes[2].group == std::vector<std::size_t>{0, 1});
  CHECK(t.nodes[0].group == std::vector<std::size_t>{0});
  CHECK(t.nodes[1].group == std::vector<std::size_t>{1});
}

TEST_CASE("identical pairs merge first") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd base = testing::gaussian(rng, 20, 2);
  Eigen::MatrixXd y(20, 4);
  y.col(0) = base.col(0);
  y.col(1) = base.col(0);
  y.col(2) = base.col(1);
  y.col(3) = base.col(1);
  for (auto linkage : {Linkage::Average, Linkage::Complete}) {
    const auto t = build_tree(y, TreeOptions{linkage});
    CHECK(t.nodes[4].group == std::vector<std::size_t>{0, 1});
    CHECK(t.nodes[5].group == std::vector<std::size_t>{2, 3});
    CHECK(t.nodes[6].group == std::vector<std::size_t>{0, 1, 2, 3});
  }
}

TEST_CASE("ties merge the lowest index pair") {
  // All columns identical: every distance is zero.
  Eigen::MatrixXd y(5, 4);
  for (int k = 0; k < 4; ++k) y.col(k) << 1, 3, 2, 5, 4;
  const auto t = build_tree(y);
  CHECK(t.nodes[4].children == std::vector<std::size_t>{0, 1});
  CHECK(t.nodes[5].group == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("random trees are valid, laminar and deterministic") {
  std::mt19937_64 rng(44);
  for (int t = 0; t < 30; ++t) {
    const Eigen::MatrixXd y = testing::gaussian(rng, 25, 8);
    const auto tree = build_tree(y);
    CHECK(tree.nodes.size() == 15);
    CHECK_NOTHROW(tree.validate());
    CHECK(laminar(tree));
    const auto again = build_tree(y);
    for (std::size_t v = 0; v < tree.nodes.size(); ++v) {
      CHECK(again.nodes[v].group == tree.nodes[v].group);
      CHECK(again.nodes[v].h == tree.nodes[v].h);
    }
    for (std::size_t v = tree.n_leaves; v < tree.nodes.size(); ++v) {
      CHECK(tree.nodes[v].h >= 0.01);
      CHECK(tree.nodes[v].h <= 0.99);
    }
    CHECK(tree.nodes[tree.root].h == Approx(0.99));
  }
}

TEST_CASE("zero-variance column sits at distance one") {
  Eigen::MatrixXd y(4, 3);
  y << 1, 0, 1.1, 2, 0, 2.3, 3, 0, 2.9, 4, 0, 4.2;
  const auto t = build_tree(y);
  CHECK(t.nodes[3].group == std::vector<std::size_t>{0, 2});
  CHECK(t.nodes[4].merge_distance == Approx(1.0));
}

TEST_CASE("node weights by hand") {
  const auto w = node_weights(two_leaf_tree(0.5));
  CHECK(w[2] == 0.5);
  CHECK(w[0] == 0.5);
  CHECK(w[1] == 0.5);

  // Leaf 0 under ancestors h=0.5 (node 3) and h=0.5 (root).
  HierTree t;
  t.n_leaves = 3;
  t.nodes.resize(5);
  for (std::size_t k = 0; k < 3; ++k) t.nodes[k].group = {k};
  t.nodes[3] = TreeNode{{0, 1}, {0, 1}, 0.5, 0.1};
  t.nodes[4] = TreeNode{{3, 2}, {0, 1, 2}, 0.5, 0.2};
  t.root = 4;
  const auto w3 = node_weights(t);
  CHECK(w3[0] == 0.25);
  CHECK(w3[1] == 0.25);
  CHECK(w3[2] == 0.5);
  CHECK(w3[3] == 0.25);
  CHECK(w3[4] == 0.5);
}

TEST_CASE("h near one sends internal weights to zero and leaf weights to one") {
  std::mt19937_64 rng(8);
  const auto tree = build_tree(testing::gaussian(rng, 10, 6), TreeOptions{Linkage::Average, HeightMode::Constant, 1 - 1e-9});
  const auto w = node_weights(tree);
  for (std::size_t v = 0; v < tree.nodes.size(); ++v) {
    if (tree.nodes[v].is_leaf())
      CHECK(w[v] == Approx(1.0).epsilon(1e-7));
    else
      CHECK(w[v] < 1e-8);
  }
}

TEST_CASE("uniform h weights telescope to one along every leaf path") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> hd(0.05, 0.95);
  for (int t = 0; t < 20; ++t) {
    const auto tree =
        build_tree(testing::gaussian(rng, 15, 7), TreeOptions{Linkage::Complete, HeightMode::Constant, hd(rng)});
    const auto w = node_weights(tree);
    for (std::size_t leaf = 0; leaf < tree.n_leaves; ++leaf) {
      double sum = 0.0;
      for (std::size_t v = 0; v < tree.nodes.size(); ++v)
        if (std::binary_search(tree.nodes[v].group.begin(), tree.nodes[v].group.end(), leaf)) sum += w[v];
      CHECK(sum == Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("tree rejects single columns and bad constant h") {
  Eigen::MatrixXd y(4, 1);
  y << 1, 2, 3, 4;
  CHECK_THROWS_AS(build_tree(y), Error);
  Eigen::MatrixXd y2(4, 2);
  y2 << 1, 2, 3, 4, 5, 6, 7, 9;
  CHECK_THROWS_AS(build_tree(y2, TreeOptions{Linkage::Average, HeightMode::Constant, 1.0}), Error);
}

TEST_CASE("debug dumps are JSON documents") {
  Eigen::MatrixXd y(4, 3);
  y << 1, 1, 0, 2, 2, 1, 3, 3, 0, 4, 4, 1;
  const auto g = graph_to_json(build_graph(y, 0.6));
  CHECK(g.find("\"edges\"") != std::string::npos);
  const auto tree = build_tree(y);
  const auto tj = tree_to_json(tree, node_weights(tree));
  CHECK(tj.find("\"nodes\"") != std::string::npos);
}
