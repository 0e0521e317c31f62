#pragma once

// Parameter and FLOPs accounting, and the per-layer lambda search that drives
// a layer's retained fraction into a target band.

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lassoprune/interchange.hpp"
#include "lassoprune/maskplan.hpp"
#include "lassoprune/solver.hpp"

namespace lassoprune {

enum class Metric { Params, Flops, Channels };

std::string_view to_string(Metric metric);
std::optional<Metric> metric_from_string(std::string_view text);

/// Conv: k_h*k_w*in*out; linear: in*out. Plus out for a bias and 2*out for a
/// normalization epilogue. Junctions have no parameters.
std::uint64_t layer_params(const LayerSpec& spec, std::int64_t kept_in, std::int64_t kept_out);

/// One multiply-accumulate counts as one FLOP. Bias, normalization (2) and
/// activation (1) add per-output-element costs. Junctions cost nothing.
std::uint64_t layer_flops(const LayerSpec& spec, std::int64_t kept_in, std::int64_t kept_out);

struct ModelTotals {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

ModelTotals model_totals(const ModelManifest& manifest, const MaskPlan* plan = nullptr);

/// Share of the layer's metric kept when `kept_out` outputs survive and the
/// declared inputs are all present.
double retained_fraction(const LayerSpec& spec, Metric metric, std::int64_t kept_out);

struct LayerBudget {
  Metric metric = Metric::Params;
  double e_l = 0.4;
  double e_u = 0.5;
  // Natural-log search bracket; unset ends default to ln(1e-6 lambda_max)
  // and ln(10 lambda_max).
  std::optional<double> lambda_l;
  std::optional<double> lambda_u;
  int max_search_iter = 60;

  void validate() const;
};

struct SearchProbe {
  double log_lambda = 0.0;
  double retained_fraction = 0.0;
  std::size_t survivors = 0;
};

struct PruneResult {
  std::string layer_id;
  double lambda_star = 0.0;
  std::vector<bool> survivors;
  double retained_fraction = 0.0;
  int solve_iterations = 0;
  bool feasible = false;
  std::vector<SearchProbe> probes;
  Eigen::MatrixXd beta;
  Solution solution;  // of the chosen probe
};

/// Bracketed search on ln(lambda). Each probe warm-starts from the solution at
/// the upper (sparser) bracket end, or zero before one exists. Stops on
/// the first fraction inside [E_l, E_u]; otherwise returns the probe closest to
/// the band (preferring ones with at least one survivor) with feasible = false.
PruneResult adaptive_search(const ProblemBuilder& builder, const LayerBudget& budget,
                            const SolverConfig& cfg, const LayerSpec& spec);

/// Columns holding an entry above zero_eps. With target_count, the top columns
/// by (nonzero count, l1 norm) instead, ties going to the lower index.
std::vector<bool> select_channels(const Eigen::MatrixXd& beta, std::optional<std::size_t> target_count,
                                  double zero_eps);

struct BandOverride {
  double e_l = 0.0;
  double e_u = 1.0;
};

struct BudgetConfig {
  Metric metric = Metric::Params;
  double global_keep = 1.0;
  double band = 0.05;
  std::map<std::string, BandOverride, std::less<>> overrides;
  // Unset means the first four conv layers in declaration order.
  std::optional<std::vector<std::string>> skip_layers;

  void validate() const;
};

BudgetConfig parse_budget_config(std::string_view text);
std::string budget_config_to_text(const BudgetConfig& config);

struct LayerTarget {
  std::string layer_id;
  LayerBudget budget;
};

/// Prunable layers that are not skipped, each with band
/// [global_keep - band, global_keep + band] clipped to (0, 1], or its override.
/// Empty when global_keep is 1.
std::vector<LayerTarget> expand_budget(const ModelManifest& manifest, const BudgetConfig& config,
                                       const LayerBudget& defaults = {});

/// Ids of the first four conv layers in declaration order.
std::vector<std::string> default_skip_layers(const ModelManifest& manifest);

}  // namespace lassoprune
