#pragma once

// Structured lasso between Gram designs:
//
//   min_beta 1/2 ||Y - X beta||_F^2 + Phi(beta)
//
// with Phi either the graph-fused penalty
//   lambda ||beta||_1 + mu sum_{(l,m)} |f_lm| sum_j |beta_jl - sign(f_lm) beta_jm|
// or the tree-guided penalty
//   lambda sum_j sum_v w_v ||beta_{j, G_v}||_2.
//
// solve_spg() runs smoothing proximal gradient: the coupled part of Phi
// (graph fusion terms, internal tree groups) is written as a max over a
// bounded dual set and smoothed with a quadratic; the separable part
// (lambda ||.||_1, singleton leaf groups) is applied exactly through
// soft-thresholding.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "lassoprune/structure.hpp"

namespace lassoprune {

/// Sufficient statistics of 1/2 ||Y - X beta||^2.
class QuadraticLoss {
 public:
  static std::shared_ptr<const QuadraticLoss> from_design(const Eigen::MatrixXd& x,
                                                          const Eigen::MatrixXd& y);

  Eigen::Index rows() const { return n_; }
  Eigen::Index in_dim() const { return xtx_.rows(); }
  Eigen::Index out_dim() const { return xty_.cols(); }

  const Eigen::MatrixXd& xtx() const { return xtx_; }
  const Eigen::MatrixXd& xty() const { return xty_; }
  double yty() const { return yty_; }

  /// X^T X beta, through the thin design when that is cheaper.
  Eigen::MatrixXd gram_times(const Eigen::MatrixXd& beta) const;
  /// Scalar multiply-adds spent by one gram_times() call.
  std::uint64_t gram_times_cost() const;

  double value(const Eigen::MatrixXd& beta) const;
  double value_given_gram(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& gram_beta) const;
  Eigen::MatrixXd gradient(const Eigen::MatrixXd& beta) const;

 private:
  Eigen::Index n_ = 0;
  Eigen::MatrixXd xtx_, xty_;
  double yty_ = 0.0;
  std::optional<Eigen::MatrixXd> thin_x_;
};

struct GraphPenalty {
  CorrelationGraph graph;
  double lambda = 0.0;
  double mu = 0.0;
};

struct TreePenalty {
  HierTree tree;
  NodeWeights weights;
  double lambda = 0.0;
};

using Penalty = std::variant<GraphPenalty, TreePenalty>;

struct LassoProblem {
  std::shared_ptr<const QuadraticLoss> loss;
  Penalty penalty;

  Eigen::Index in_dim() const { return loss->in_dim(); }
  Eigen::Index out_dim() const { return loss->out_dim(); }
  void validate() const;
};

LassoProblem make_problem(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Penalty penalty);

/// Exact (unsmoothed) objective.
double objective_eval(const LassoProblem& p, const Eigen::MatrixXd& beta);
/// Exact Phi(beta).
double penalty_eval(const LassoProblem& p, const Eigen::MatrixXd& beta);
/// Exact value of the coupled part that the solver smooths.
double coupled_penalty_eval(const LassoProblem& p, const Eigen::MatrixXd& beta);
/// Smoothed coupled part: max over the dual set of <C beta, a> - t/2 ||a||^2.
double smooth_penalty_value(const LassoProblem& p, const Eigen::MatrixXd& beta, double temperature);

/// Gradient of smooth_penalty_value, i.e. C^T applied to the projected dual.
/// When `ops` is given, it is incremented by the number of scalar dual
/// coordinates touched.
Eigen::MatrixXd smooth_penalty_grad(const LassoProblem& p, const Eigen::MatrixXd& beta,
                                    double temperature, std::uint64_t* ops = nullptr);

/// X^T (X beta - Y).
Eigen::MatrixXd loss_gradient(const LassoProblem& p, const Eigen::MatrixXd& beta);

/// Number of scalar dual coordinates of the coupled part.
std::uint64_t dual_dimension(const LassoProblem& p);
/// Upper bound of smooth/exact gap: temperature * (number of dual blocks) / 2.
double smoothing_gap_bound(const LassoProblem& p, double temperature);
/// Upper bound on ||C||^2 for the coupling map of the coupled part.
double coupling_norm_sq(const LassoProblem& p);

/// Exact proximal map of the separable part with step `step`.
Eigen::MatrixXd separable_prox(const LassoProblem& p, const Eigen::MatrixXd& v, double step);

/// Exact proximal map of the full tree penalty (composition of group
/// soft-thresholds from leaves to root). Throws for graph problems.
Eigen::MatrixXd tree_prox(const LassoProblem& p, const Eigen::MatrixXd& v, double step);

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
double power_iteration(const Eigen::MatrixXd& a, int max_iter, double tol);

struct SolverConfig {
  double tol = 1e-5;
  int max_iter = 2000;
  // Unset means tol * (1/2 ||Y||^2) / (2 D), D the number of dual blocks
  // (edge-row intervals or group-row balls).
  std::optional<double> temperature;
  // Entries below zero_eps_rel * max|beta| count as zero.
  double zero_eps_rel = 1e-6;
  int power_iters = 20;
  double power_tol = 1e-6;
  double lipschitz_inflation = 1.05;
  int restart_after_increases = 3;
  int stop_window = 5;
  // Temperature shrink factor between warm-started stages, ending at the
  // target temperature. 1 runs a single stage at the target.
  double continuation_ratio = 0.1;
  // Tree problems only: finish with one exact proximal-gradient step so that
  // groups driven to zero by the smoothed penalty become exactly zero.
  bool polish = true;

  void validate() const;
};

struct OpCounts {
  std::uint64_t loss_per_iter = 0;
  std::uint64_t penalty_per_iter = 0;
};

struct Solution {
  Eigen::MatrixXd beta;
  std::vector<double> objective_trace;
  std::vector<std::size_t> survivor_trace;
  int iterations = 0;
  bool converged = false;
  double temperature = 0.0;
  double lipschitz = 0.0;
  double objective = 0.0;
  OpCounts ops;
};

/// Starts from `initial` when given, zero otherwise.
Solution solve_spg(const LassoProblem& p, const SolverConfig& cfg = {}, const Eigen::MatrixXd* initial = nullptr);

struct ColumnSurvival {
  std::size_t count = 0;
  std::vector<bool> flags;
};

double resolve_zero_eps(const Eigen::MatrixXd& beta, const SolverConfig& cfg);
ColumnSurvival nnz_columns(const Eigen::MatrixXd& beta, double zero_eps);

void write_trace_csv(const Solution& s, const std::filesystem::path& path);

enum class Method { Graph, Tree };

/// Penalty family and structure for one layer; instantiates problems for a
/// given lambda. mu follows mu_ratio * lambda unless fixed.
class ProblemBuilder {
 public:
  ProblemBuilder(std::shared_ptr<const QuadraticLoss> loss, CorrelationGraph graph,
                 std::optional<double> fixed_mu = std::nullopt, double mu_ratio = 0.5);
  ProblemBuilder(std::shared_ptr<const QuadraticLoss> loss, HierTree tree);

  Method method() const { return method_; }
  LassoProblem at(double lambda) const;
  /// A lambda at or above which beta = 0 is optimal: max|X^T Y| for the
  /// graph penalty, max_j ||(X^T Y)_j||_2 for the tree penalty.
  double lambda_max() const;
  const QuadraticLoss& loss() const { return *loss_; }

 private:
  std::shared_ptr<const QuadraticLoss> loss_;
  Method method_;
  CorrelationGraph graph_;
  std::optional<double> fixed_mu_;
  double mu_ratio_ = 0.5;
  HierTree tree_;
  NodeWeights weights_;
};

}  // namespace lassoprune
