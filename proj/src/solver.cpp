#include "lassoprune/solver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "lassoprune/error.hpp"

namespace lassoprune {

using Eigen::Index;
using Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// QuadraticLoss

std::shared_ptr<const QuadraticLoss> QuadraticLoss::from_design(const MatrixXd& x, const MatrixXd& y) {
  if (x.rows() != y.rows())
    throw Error(ErrorCode::DimensionMismatch, "design and response differ in row count");
  if (x.cols() < 1 || y.cols() < 1) throw Error(ErrorCode::DimensionMismatch, "empty design");
  if (!x.allFinite() || !y.allFinite()) throw Error(ErrorCode::NonFiniteInput, "design is not finite");
  auto loss = std::make_shared<QuadraticLoss>();
  loss->n_ = x.rows();
  loss->xtx_.noalias() = x.transpose() * x;
  loss->xty_.noalias() = x.transpose() * y;
  loss->yty_ = y.squaredNorm();
  if (2 * x.rows() < x.cols()) loss->thin_x_ = x;
  return loss;
}

MatrixXd QuadraticLoss::gram_times(const MatrixXd& beta) const {
  if (thin_x_) {
    const MatrixXd xb = *thin_x_ * beta;
    return thin_x_->transpose() * xb;
  }
  return xtx_ * beta;
}

std::uint64_t QuadraticLoss::gram_times_cost() const {
  const auto j = static_cast<std::uint64_t>(in_dim());
  const auto k = static_cast<std::uint64_t>(out_dim());
  if (thin_x_) return 2 * static_cast<std::uint64_t>(n_) * j * k;
  return j * j * k;
}

double QuadraticLoss::value_given_gram(const MatrixXd& beta, const MatrixXd& gram_beta) const {
  return 0.5 * yty_ - (xty_.array() * beta.array()).sum() + 0.5 * (beta.array() * gram_beta.array()).sum();
}

double QuadraticLoss::value(const MatrixXd& beta) const { return value_given_gram(beta, gram_times(beta)); }

MatrixXd QuadraticLoss::gradient(const MatrixXd& beta) const { return gram_times(beta) - xty_; }

// ---------------------------------------------------------------------------
// Problem

void LassoProblem::validate() const {
  if (!loss) throw Error(ErrorCode::InvalidConfig, "problem has no loss");
  const auto k = static_cast<std::size_t>(out_dim());
  if (const auto* g = std::get_if<GraphPenalty>(&penalty)) {
    if (!(g->lambda >= 0.0) || !(g->mu >= 0.0))
      throw Error(ErrorCode::InvalidConfig, "lambda and mu must be >= 0");
    if (g->graph.n_nodes != k)
      throw Error(ErrorCode::DimensionMismatch, "graph has " + std::to_string(g->graph.n_nodes) +
                                                    " nodes for " + std::to_string(k) + " columns");
    for (const auto& e : g->graph.edges)
      if (e.l >= e.m || e.m >= k) throw Error(ErrorCode::InvalidConfig, "malformed graph edge");
  } else {
    const auto& t = std::get<TreePenalty>(penalty);
    if (!(t.lambda >= 0.0)) throw Error(ErrorCode::InvalidConfig, "lambda must be >= 0");
    if (t.tree.n_leaves != k)
      throw Error(ErrorCode::DimensionMismatch, "tree has " + std::to_string(t.tree.n_leaves) +
                                                    " leaves for " + std::to_string(k) + " columns");
    if (t.weights.size() != t.tree.nodes.size())
      throw Error(ErrorCode::DimensionMismatch, "node weight count differs from tree size");
    t.tree.validate();
  }
}

LassoProblem make_problem(const MatrixXd& x, const MatrixXd& y, Penalty penalty) {
  LassoProblem p{QuadraticLoss::from_design(x, y), std::move(penalty)};
  p.validate();
  return p;
}

namespace {

void check_shape(const LassoProblem& p, const MatrixXd& beta) {
  if (beta.rows() != p.in_dim() || beta.cols() != p.out_dim())
    throw Error(ErrorCode::DimensionMismatch,
                "beta is " + std::to_string(beta.rows()) + "x" + std::to_string(beta.cols()) + ", expected " +
                    std::to_string(p.in_dim()) + "x" + std::to_string(p.out_dim()));
}

double sign_of(double f) { return f < 0.0 ? -1.0 : 1.0; }

// Leaves in depth-first order make every group a contiguous column block.
struct TreeLayout {
  std::vector<Index> order;   // position -> column
  std::vector<Index> start;   // per node
  std::vector<Index> length;  // per node
};

TreeLayout layout_of(const HierTree& tree) {
  TreeLayout layout;
  const auto n = tree.nodes.size();
  layout.start.assign(n, 0);
  layout.length.assign(n, 0);
  std::vector<std::size_t> stack{tree.root};
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    const auto& node = tree.nodes[v];
    if (node.is_leaf()) {
      layout.start[v] = static_cast<Index>(layout.order.size());
      layout.length[v] = 1;
      layout.order.push_back(static_cast<Index>(node.group.front()));
      continue;
    }
    for (auto c = node.children.rbegin(); c != node.children.rend(); ++c) stack.push_back(*c);
  }
  // Children precede parents, so one forward sweep fills internal ranges.
  for (std::size_t v = tree.n_leaves; v < n; ++v) {
    const auto& ch = tree.nodes[v].children;
    Index lo = layout.start[ch[0]], hi = lo;
    for (auto c : ch) {
      lo = std::min(lo, layout.start[c]);
      hi = std::max(hi, layout.start[c] + layout.length[c]);
    }
    layout.start[v] = lo;
    layout.length[v] = hi - lo;
  }
  return layout;
}

MatrixXd gather_columns(const MatrixXd& m, const std::vector<Index>& order) {
  MatrixXd out(m.rows(), m.cols());
  for (std::size_t pos = 0; pos < order.size(); ++pos) out.col(static_cast<Index>(pos)) = m.col(order[pos]);
  return out;
}

MatrixXd scatter_columns(const MatrixXd& m, const std::vector<Index>& order) {
  MatrixXd out(m.rows(), m.cols());
  for (std::size_t pos = 0; pos < order.size(); ++pos) out.col(order[pos]) = m.col(static_cast<Index>(pos));
  return out;
}

// Row-wise l2 norms of a node's block in leaf order.
Eigen::VectorXd block_norms(const MatrixXd& permuted, const TreeLayout& layout, std::size_t v) {
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(permuted.rows());
  for (Index c = layout.start[v]; c < layout.start[v] + layout.length[v]; ++c) sq += permuted.col(c).cwiseAbs2();
  return sq.cwiseSqrt();
}

std::size_t internal_group_mass(const TreePenalty& t) {
  std::size_t mass = 0;
  for (std::size_t v = t.tree.n_leaves; v < t.tree.nodes.size(); ++v) mass += t.tree.nodes[v].group.size();
  return mass;
}

}  // namespace

double coupled_penalty_eval(const LassoProblem& p, const MatrixXd& beta) {
  check_shape(p, beta);
  double total = 0.0;
  if (const auto* g = std::get_if<GraphPenalty>(&p.penalty)) {
    for (const auto& e : g->graph.edges) {
      const auto l = static_cast<Index>(e.l), m = static_cast<Index>(e.m);
      total += g->mu * std::abs(e.f) * (beta.col(l) - sign_of(e.f) * beta.col(m)).cwiseAbs().sum();
    }
  } else {
    const auto& t = std::get<TreePenalty>(p.penalty);
    const auto layout = layout_of(t.tree);
    const MatrixXd permuted = gather_columns(beta, layout.order);
    for (std::size_t v = t.tree.n_leaves; v < t.tree.nodes.size(); ++v)
      total += t.lambda * t.weights[v] * block_norms(permuted, layout, v).sum();
  }
  return total;
}

namespace {

double separable_penalty_eval(const LassoProblem& p, const MatrixXd& beta) {
  if (const auto* g = std::get_if<GraphPenalty>(&p.penalty)) return g->lambda * beta.cwiseAbs().sum();
  const auto& t = std::get<TreePenalty>(p.penalty);
  double total = 0.0;
  for (Index k = 0; k < beta.cols(); ++k)
    total += t.lambda * t.weights[static_cast<std::size_t>(k)] * beta.col(k).cwiseAbs().sum();
  return total;
}

// Per-column soft-threshold levels of the separable part.
Eigen::RowVectorXd separable_levels(const LassoProblem& p) {
  Eigen::RowVectorXd levels(p.out_dim());
  if (const auto* g = std::get_if<GraphPenalty>(&p.penalty)) {
    levels.setConstant(g->lambda);
  } else {
    const auto& t = std::get<TreePenalty>(p.penalty);
    for (Index k = 0; k < levels.size(); ++k) levels(k) = t.lambda * t.weights[static_cast<std::size_t>(k)];
  }
  return levels;
}

}  // namespace

double penalty_eval(const LassoProblem& p, const MatrixXd& beta) {
  check_shape(p, beta);
  return separable_penalty_eval(p, beta) + coupled_penalty_eval(p, beta);
}

double objective_eval(const LassoProblem& p, const MatrixXd& beta) {
  check_shape(p, beta);
  return p.loss->value(beta) + penalty_eval(p, beta);
}

MatrixXd loss_gradient(const LassoProblem& p, const MatrixXd& beta) {
  check_shape(p, beta);
  return p.loss->gradient(beta);
}

double smooth_penalty_value(const LassoProblem& p, const MatrixXd& beta, double temperature) {
  check_shape(p, beta);
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be > 0");
  double total = 0.0;
  if (const auto* g = std::get_if<GraphPenalty>(&p.penalty)) {
    for (const auto& e : g->graph.edges) {
      const double scale = g->mu * std::abs(e.f);
      for (Index j = 0; j < beta.rows(); ++j) {
        const double u = scale * (beta(j, static_cast<Index>(e.l)) - sign_of(e.f) * beta(j, static_cast<Index>(e.m)));
        total += std::abs(u) <= temperature ? u * u / (2.0 * temperature) : std::abs(u) - 0.5 * temperature;
      }
    }
  } else {
    const auto& t = std::get<TreePenalty>(p.penalty);
    const auto layout = layout_of(t.tree);
    const MatrixXd permuted = gather_columns(beta, layout.order);
    for (std::size_t v = t.tree.n_leaves; v < t.tree.nodes.size(); ++v) {
      const Eigen::VectorXd u = t.lambda * t.weights[v] * block_norms(permuted, layout, v);
      for (double x : u) total += x <= temperature ? x * x / (2.0 * temperature) : x - 0.5 * temperature;
    }
  }
  return total;
}

MatrixXd smooth_penalty_grad(const LassoProblem& p, const MatrixXd& beta, double temperature,
                             std::uint64_t* ops) {
  check_shape(p, beta);
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be > 0");
  const Index rows = beta.rows();
  std::uint64_t touched = 0;
  if (const auto* g = std::get_if<GraphPenalty>(&p.penalty)) {
    MatrixXd grad = MatrixXd::Zero(rows, beta.cols());
    Eigen::VectorXd alpha(rows);
    for (const auto& e : g->graph.edges) {
      const double scale = g->mu * std::abs(e.f);
      const double s = sign_of(e.f);
      const auto l = static_cast<Index>(e.l), m = static_cast<Index>(e.m);
      alpha = ((scale / temperature) * (beta.col(l) - s * beta.col(m))).cwiseMax(-1.0).cwiseMin(1.0);
      grad.col(l) += scale * alpha;
      grad.col(m) -= (scale * s) * alpha;
      touched += static_cast<std::uint64_t>(rows);
    }
    if (ops) *ops += touched;
    return grad;
  }
  const auto& t = std::get<TreePenalty>(p.penalty);
  const auto layout = layout_of(t.tree);
  const MatrixXd permuted = gather_columns(beta, layout.order);
  MatrixXd grad = MatrixXd::Zero(rows, beta.cols());
  Eigen::VectorXd factor(rows);
  for (std::size_t v = t.tree.n_leaves; v < t.tree.nodes.size(); ++v) {
    const double scale = t.lambda * t.weights[v];
    // The projected dual of u / t onto the unit ball is u / max(t, ||u||).
    factor = (scale * scale) / (scale * block_norms(permuted, layout, v).array()).max(temperature);
    for (Index c = layout.start[v]; c < layout.start[v] + layout.length[v]; ++c)
      grad.col(c) += factor.cwiseProduct(permuted.col(c));
    touched += static_cast<std::uint64_t>(rows * layout.length[v]);
  }
  if (ops) *ops += touched;
  return scatter_columns(grad, layout.order);
}

std::uint64_t dual_dimension(const LassoProblem& p) {
  const auto j = static_cast<std::uint64_t>(p.in_dim());
  if (const auto* g = std::get_if<GraphPenalty>(&p.penalty)) return j * g->graph.edges.size();
  return j * internal_group_mass(std::get<TreePenalty>(p.penalty));
}

double smoothing_gap_bound(const LassoProblem& p, double temperature) {
  const auto j = static_cast<double>(p.in_dim());
  double blocks = 0.0;
  if (const auto* g = std::get_if<GraphPenalty>(&p.penalty))
    blocks = j * static_cast<double>(g->graph.edges.size());
  else {
    const auto& t = std::get<TreePenalty>(p.penalty);
    blocks = j * static_cast<double>(t.tree.nodes.size() - t.tree.n_leaves);
  }
  return 0.5 * temperature * blocks;
}

double coupling_norm_sq(const LassoProblem& p) {
  const auto k = static_cast<std::size_t>(p.out_dim());
  std::vector<double> load(k, 0.0);
  if (const auto* g = std::get_if<GraphPenalty>(&p.penalty)) {
    // Gershgorin bound on C^T C for the signed incidence map.
    for (const auto& e : g->graph.edges) {
      const double w = g->mu * e.f;
      load[e.l] += w * w;
      load[e.m] += w * w;
    }
    return 2.0 * *std::max_element(load.begin(), load.end());
  }
  const auto& t = std::get<TreePenalty>(p.penalty);
  // C^T C is diagonal: column k collects every internal group containing it.
  for (std::size_t v = t.tree.n_leaves; v < t.tree.nodes.size(); ++v) {
    const double w = t.lambda * t.weights[v];
    for (auto c : t.tree.nodes[v].group) load[c] += w * w;
  }
  return *std::max_element(load.begin(), load.end());
}

MatrixXd separable_prox(const LassoProblem& p, const MatrixXd& v, double step) {
  check_shape(p, v);
  const Eigen::RowVectorXd levels = separable_levels(p) * step;
  MatrixXd out(v.rows(), v.cols());
  for (Index k = 0; k < v.cols(); ++k) {
    const double thr = levels(k);
    for (Index j = 0; j < v.rows(); ++j) {
      const double x = v(j, k);
      out(j, k) = x > thr ? x - thr : (x < -thr ? x + thr : 0.0);
    }
  }
  return out;
}

MatrixXd tree_prox(const LassoProblem& p, const MatrixXd& v, double step) {
  check_shape(p, v);
  const auto* t = std::get_if<TreePenalty>(&p.penalty);
  if (!t) throw Error(ErrorCode::InvalidConfig, "tree_prox requires a tree penalty");
  const auto layout = layout_of(t->tree);
  MatrixXd out = gather_columns(v, layout.order);
  Eigen::VectorXd shrink(out.rows());
  // Node ids are already ordered children-before-parents.
  for (std::size_t node = 0; node < t->tree.nodes.size(); ++node) {
    const double thr = step * t->lambda * t->weights[node];
    const Eigen::VectorXd norms = block_norms(out, layout, node);
    for (Index j = 0; j < out.rows(); ++j) shrink(j) = norms(j) > thr ? 1.0 - thr / norms(j) : 0.0;
    for (Index c = layout.start[node]; c < layout.start[node] + layout.length[node]; ++c)
      out.col(c) = out.col(c).cwiseProduct(shrink);
  }
  return scatter_columns(out, layout.order);
}

double power_iteration(const MatrixXd& a, int max_iter, double tol) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::NonSquareInput, "power iteration needs a square matrix");
  const Index n = a.rows();
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
  Eigen::VectorXd av = a * v;
  if (av.norm() == 0.0) {
    // The all-ones start is in the null space; fall back to a fixed ramp.
    v = Eigen::VectorXd::LinSpaced(n, 1.0, 2.0);
    v.normalize();
    av = a * v;
  }
  double estimate = v.dot(av);
  for (int it = 0; it < max_iter; ++it) {
    const double norm = av.norm();
    if (norm == 0.0) return 0.0;
    v = av / norm;
    av = a * v;
    const double next = v.dot(av);
    const bool done = std::abs(next - estimate) <= tol * std::abs(next);
    estimate = next;
    if (done) break;
  }
  return std::max(estimate, 0.0);
}

void SolverConfig::validate() const {
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidConfig, "tol must be > 0");
  if (max_iter < 1) throw Error(ErrorCode::InvalidConfig, "max_iter must be >= 1");
  if (temperature && !(*temperature > 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be > 0");
  if (!(zero_eps_rel >= 0.0)) throw Error(ErrorCode::InvalidConfig, "zero_eps must be >= 0");
  if (stop_window < 1) throw Error(ErrorCode::InvalidConfig, "stop window must be >= 1");
  if (!(continuation_ratio > 0.0 && continuation_ratio <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "continuation ratio must lie in (0, 1]");
}

double resolve_zero_eps(const MatrixXd& beta, const SolverConfig& cfg) {
  return beta.size() == 0 ? 0.0 : cfg.zero_eps_rel * beta.cwiseAbs().maxCoeff();
}

ColumnSurvival nnz_columns(const MatrixXd& beta, double zero_eps) {
  ColumnSurvival s;
  s.flags.assign(static_cast<std::size_t>(beta.cols()), false);
  for (Index k = 0; k < beta.cols(); ++k) {
    if ((beta.col(k).array().abs() > zero_eps).any()) {
      s.flags[static_cast<std::size_t>(k)] = true;
      ++s.count;
    }
  }
  return s;
}

Solution solve_spg(const LassoProblem& p, const SolverConfig& cfg, const MatrixXd* initial) {
  p.validate();
  cfg.validate();
  const QuadraticLoss& loss = *p.loss;
  const Index rows = p.in_dim(), cols = p.out_dim();

  Solution sol;
  const double scale = std::max(0.5 * loss.yty(), std::numeric_limits<double>::min());
  const auto dual_dim = dual_dimension(p);
  if (cfg.temperature)
    sol.temperature = *cfg.temperature;
  else
    // Blocks bound the dual diameter: each interval or ball adds at most 1/2 to max 1/2||a||^2.
    sol.temperature = dual_dim > 0 ? cfg.tol * scale / (4.0 * smoothing_gap_bound(p, 1.0)) : 1.0;
  const double final_tau = sol.temperature;

  const double loss_lipschitz =
      cfg.lipschitz_inflation * power_iteration(loss.xtx(), cfg.power_iters, cfg.power_tol);
  const double coupling = dual_dim > 0 ? coupling_norm_sq(p) : 0.0;
  // Continuation starts where the smoothed penalty is no stiffer than the loss.
  double tau = final_tau;
  if (cfg.continuation_ratio < 1.0 && coupling > 0.0 && loss_lipschitz > 0.0)
    tau = std::max(final_tau, coupling / loss_lipschitz);

  MatrixXd beta = MatrixXd::Zero(rows, cols);
  MatrixXd gram_beta = MatrixXd::Zero(rows, cols);
  if (initial) {
    check_shape(p, *initial);
    if (!initial->allFinite()) throw Error(ErrorCode::NonFiniteInput, "initial beta is not finite");
    beta = *initial;
    gram_beta = loss.gram_times(beta);
  }
  MatrixXd best = beta;
  double best_obj = objective_eval(p, beta);

  sol.ops.loss_per_iter = loss.gram_times_cost();
  const double floor = 1e-12 * scale;
  const auto window = static_cast<std::size_t>(cfg.stop_window);
  int it = 0;

  while (true) {
    const bool last_stage = tau <= final_tau;
    double lipschitz = loss_lipschitz + coupling / tau;
    if (!(lipschitz > 0.0)) lipschitz = 1.0;
    sol.lipschitz = lipschitz;
    const double step = 1.0 / lipschitz;

    // Each stage warm-starts from the previous iterate with fresh momentum.
    MatrixXd z = beta, gram_z = gram_beta;
    double prev_obj = std::numeric_limits<double>::infinity();
    double momentum_t = 1.0;
    int increases = 0;
    const std::size_t stage_begin = sol.objective_trace.size();
    bool stage_done = false;

    while (it < cfg.max_iter) {
      ++it;
      std::uint64_t penalty_ops = 0;
      MatrixXd grad = gram_z - loss.xty();
      if (dual_dim > 0) grad += smooth_penalty_grad(p, z, tau, &penalty_ops);
      sol.ops.penalty_per_iter = penalty_ops;

      MatrixXd next = separable_prox(p, z - step * grad, step);
      MatrixXd gram_next = loss.gram_times(next);
      const double obj = loss.value_given_gram(next, gram_next) + penalty_eval(p, next);
      if (!std::isfinite(obj))
        throw Error(ErrorCode::NonFiniteEncountered, "objective became non-finite at iteration " + std::to_string(it));

      sol.objective_trace.push_back(obj);
      sol.survivor_trace.push_back(nnz_columns(next, cfg.zero_eps_rel * next.cwiseAbs().maxCoeff()).count);
      if (obj < best_obj) {
        best_obj = obj;
        best = next;
      }

      increases = obj > prev_obj ? increases + 1 : 0;
      prev_obj = obj;
      if (increases >= cfg.restart_after_increases) {
        momentum_t = 1.0;
        increases = 0;
      }
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum_t * momentum_t));
      const double c = (momentum_t - 1.0) / t_next;
      momentum_t = t_next;
      z = next + c * (next - beta);
      gram_z = gram_next + c * (gram_next - gram_beta);
      beta = std::move(next);
      gram_beta = std::move(gram_next);

      const auto& trace = sol.objective_trace;
      if (trace.size() - stage_begin > window) {
        const auto first = trace.end() - static_cast<std::ptrdiff_t>(window + 1);
        const auto [lo, hi] = std::minmax_element(first, trace.end());
        if (*hi - *lo <= cfg.tol * std::max(std::abs(obj), floor)) {
          stage_done = true;
          break;
        }
      }
    }
    if (last_stage) {
      sol.converged = stage_done;
      break;
    }
    if (it >= cfg.max_iter) break;
    tau = std::max(tau * cfg.continuation_ratio, final_tau);
  }
  sol.iterations = it;

  if (cfg.polish && std::holds_alternative<TreePenalty>(p.penalty) && loss_lipschitz > 0.0) {
    const double polish_step = 1.0 / loss_lipschitz;
    MatrixXd polished = tree_prox(p, best - polish_step * loss.gradient(best), polish_step);
    const double obj = objective_eval(p, polished);
    if (std::isfinite(obj) && obj <= best_obj + cfg.tol * std::max(std::abs(best_obj), floor)) {
      best = std::move(polished);
      best_obj = obj;
    }
  }

  sol.beta = std::move(best);
  sol.objective = best_obj;
  return sol;
}

void write_trace_csv(const Solution& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out << "iteration,objective,survivors\n";
  out.precision(17);
  for (std::size_t i = 0; i < s.objective_trace.size(); ++i)
    out << (i + 1) << ',' << s.objective_trace[i] << ',' << s.survivor_trace[i] << '\n';
}

// ---------------------------------------------------------------------------
// ProblemBuilder

ProblemBuilder::ProblemBuilder(std::shared_ptr<const QuadraticLoss> loss, CorrelationGraph graph,
                               std::optional<double> fixed_mu, double mu_ratio)
    : loss_(std::move(loss)), method_(Method::Graph), graph_(std::move(graph)), fixed_mu_(fixed_mu),
      mu_ratio_(mu_ratio) {}

ProblemBuilder::ProblemBuilder(std::shared_ptr<const QuadraticLoss> loss, HierTree tree)
    : loss_(std::move(loss)), method_(Method::Tree), tree_(std::move(tree)) {
  weights_ = node_weights(tree_);
}

LassoProblem ProblemBuilder::at(double lambda) const {
  LassoProblem p;
  p.loss = loss_;
  if (method_ == Method::Graph)
    p.penalty = GraphPenalty{graph_, lambda, fixed_mu_.value_or(mu_ratio_ * lambda)};
  else
    p.penalty = TreePenalty{tree_, weights_, lambda};
  p.validate();
  return p;
}

double ProblemBuilder::lambda_max() const {
  if (method_ == Method::Graph) return loss_->xty().cwiseAbs().maxCoeff();
  return loss_->xty().rowwise().norm().maxCoeff();
}

}  // namespace lassoprune
