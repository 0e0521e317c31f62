#pragma once

// End-to-end operations behind the command-line tool. Feature files for a
// layer live at <dir>/<layer_id>.in.fmap and <dir>/<layer_id>.out.fmap.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lassoprune/budget.hpp"
#include "lassoprune/gram.hpp"
#include "lassoprune/maskplan.hpp"
#include "lassoprune/solver.hpp"
#include "lassoprune/structure.hpp"

namespace lassoprune {

struct RunConfig {
  Method method = Method::Tree;
  KernelConfig kernel;
  double th = 0.6;
  // Fixed graph fusion weight; unset means mu_ratio * lambda.
  std::optional<double> mu;
  double mu_ratio = 0.5;
  TreeOptions tree;
  LayerBudget budget;
  SolverConfig solver;
  std::uint64_t seed = 0;
  int jobs = 1;
};

std::filesystem::path input_feature_path(const std::filesystem::path& dir, std::string_view layer_id);
std::filesystem::path output_feature_path(const std::filesystem::path& dir, std::string_view layer_id);

/// Reads both feature files of a layer; MissingInput names an absent path.
std::pair<FeatureBatch, FeatureBatch> load_layer_features(const std::filesystem::path& dir,
                                                          std::string_view layer_id);

ProblemBuilder make_builder(const GramDesign& design, const RunConfig& cfg);

PruneResult prune_layer(const LayerSpec& spec, const GramDesign& design, const RunConfig& cfg,
                        const LayerBudget& budget);

std::string prune_result_to_text(const PruneResult& result);
/// Writes <dir>/<id>.result.json, <dir>/<id>.trace.csv and <dir>/<id>.beta.fmap.
void write_prune_result(const PruneResult& result, const std::filesystem::path& dir);

struct ReportRow {
  std::string layer_id;
  std::uint64_t orig_params = 0, kept_params = 0;
  std::uint64_t orig_flops = 0, kept_flops = 0;
  double retained_fraction = 1.0;
  std::optional<double> lambda_star;
  std::optional<int> iterations;
  std::optional<bool> feasible;
};

struct Report {
  std::string model_name;
  ModelTotals before, after;
  std::vector<ReportRow> rows;

  double params_reduction() const;
  double flops_reduction() const;
};

/// Rows for every weighted layer in manifest order; search columns are filled
/// from `results` where a layer id matches.
Report build_report(const ModelManifest& manifest, const MaskPlan& plan,
                    const std::vector<PruneResult>& results = {});
std::string report_to_csv(const Report& report);
std::string report_to_text(const Report& report);

struct ModelRun {
  MaskPlan plan;
  std::vector<PruneResult> results;  // in manifest order of searched layers
  Report report;
  bool all_feasible = true;
};

/// Searches every targeted layer (up to cfg.jobs at a time), snaps infeasible
/// layers to round(mid-band * out_channels) channels, and reconciles the
/// selections. Any layer failure aborts the run.
ModelRun prune_model(const ModelManifest& manifest, const std::filesystem::path& feature_dir,
                     const BudgetConfig& budget, const RunConfig& cfg);

/// Writes plan.json, report.csv, report.txt and layers/<id>.* under `dir`.
void write_model_run(const ModelManifest& manifest, const ModelRun& run, const std::filesystem::path& dir);

// Larger maps concentrate per-sample distances, which pushes every kernel
// column toward the same pattern.
struct SynthOptions {
  std::size_t batch = 32;
  std::size_t spatial = 1;
  std::uint64_t seed = 0;
};

/// Seeded synthetic feature maps for every searchable conv/linear layer: each
/// output channel blends a nonlinear mix of three input channels with noise, in
/// a per-channel proportion drawn uniformly from [0, 1].
void write_synthetic_features(const ModelManifest& manifest, const std::filesystem::path& dir,
                              const SynthOptions& options);

}  // namespace lassoprune
