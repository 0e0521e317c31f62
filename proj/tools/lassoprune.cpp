// lassoprune: structured-lasso channel pruning driver.
//
// Exit status: 0 success, 1 error, 2 budget band unreachable.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "lassoprune/budget.hpp"
#include "lassoprune/error.hpp"
#include "lassoprune/pipeline.hpp"
#include "lassoprune/zoo.hpp"

namespace fs = std::filesystem;
using namespace lassoprune;

namespace {

constexpr int kExitError = 1;
constexpr int kExitInfeasible = 2;

struct Knobs {
  std::string method = "stlp";
  std::string kernel = "laplacian";
  std::optional<double> sigma;
  double th = 0.6;
  std::optional<double> mu;
  std::optional<std::string> metric;
  std::optional<double> keep;
  std::optional<double> band;
  double tol = 1e-5;
  int max_iter = 2000;
  std::uint64_t seed = 0;
  int jobs = 1;
};

void add_method_flags(CLI::App* cmd, Knobs& k) {
  cmd->add_option("--method", k.method, "sglp (graph) or stlp (tree)")
      ->check(CLI::IsMember({"sglp", "stlp"}))
      ->capture_default_str();
  cmd->add_option("--kernel", k.kernel, "Gram kernel")
      ->check(CLI::IsMember({"linear", "gaussian", "sigmoid", "laplacian"}))
      ->capture_default_str();
  cmd->add_option("--sigma", k.sigma, "kernel bandwidth; median heuristic when omitted")->check(CLI::PositiveNumber);
  cmd->add_option("--th", k.th, "correlation threshold for graph edges")->check(CLI::Range(0.0, 0.999999))->capture_default_str();
}

void add_solve_flags(CLI::App* cmd, Knobs& k) {
  add_method_flags(cmd, k);
  cmd->add_option("--mu", k.mu, "fixed graph fusion weight; 0.5*lambda when omitted")->check(CLI::NonNegativeNumber);
  cmd->add_option("--metric", k.metric, "budget metric (default params)")
      ->check(CLI::IsMember({"params", "flops", "channels"}));
  cmd->add_option("--keep", k.keep, "retained fraction target")->check(CLI::Range(1e-9, 1.0));
  cmd->add_option("--band", k.band, "half-width of the accepted band")->check(CLI::Range(1e-9, 0.999999));
  cmd->add_option("--tol", k.tol, "solver tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--max-iter", k.max_iter, "solver iteration cap")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", k.seed, "seed (recorded; solves are deterministic)")->capture_default_str();
  cmd->add_option("--jobs", k.jobs, "layers searched concurrently")->check(CLI::PositiveNumber)->capture_default_str();
}

KernelConfig kernel_config(const Knobs& k) {
  KernelConfig cfg;
  cfg.kind = *kernel_kind_from_string(k.kernel);
  cfg.sigma = k.sigma;
  return cfg;
}

RunConfig run_config(const Knobs& k) {
  RunConfig cfg;
  cfg.method = k.method == "sglp" ? Method::Graph : Method::Tree;
  cfg.kernel = kernel_config(k);
  cfg.th = k.th;
  cfg.mu = k.mu;
  cfg.solver.tol = k.tol;
  cfg.solver.max_iter = k.max_iter;
  cfg.seed = k.seed;
  cfg.jobs = k.jobs;
  cfg.budget.metric = *metric_from_string(k.metric.value_or("params"));
  return cfg;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

ModelManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::MissingInput, "manifest not found: " + path.string());
  return parse_manifest(path);
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out << text;
}

TensorFile matrix_tensor(const Eigen::MatrixXd& m, const std::string& id) {
  TensorFile t;
  t.layer_id = id;
  t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  std::vector<double> values(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) values[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  t.data = std::move(values);
  return t;
}

int cmd_prune_layer(const Knobs& k, const fs::path& features, const std::string& layer_id,
                    const std::optional<fs::path>& manifest_path, const fs::path& out_dir) {
  const auto [in, out] = load_layer_features(features, layer_id);
  LayerSpec spec;
  if (manifest_path) {
    spec = load_manifest(*manifest_path).layer(layer_id);
  } else {
    // Without a manifest the layer is accounted as a 1x1 conv.
    spec.id = layer_id;
    spec.in_channels = static_cast<std::int64_t>(in.channels());
    spec.out_channels = static_cast<std::int64_t>(out.channels());
    spec.out_spatial_h = static_cast<std::int64_t>(out.h());
    spec.out_spatial_w = static_cast<std::int64_t>(out.w());
  }
  RunConfig cfg = run_config(k);
  const double keep = k.keep.value_or(0.5), band = k.band.value_or(0.05);
  cfg.budget.e_l = std::max(keep - band, 1e-6);
  cfg.budget.e_u = std::min(keep + band, 1.0);
  const auto result = prune_layer(spec, build_design(in, out, cfg.kernel), cfg, cfg.budget);
  write_prune_result(result, out_dir);
  std::cout << layer_id << ": kept " << std::count(result.survivors.begin(), result.survivors.end(), true) << "/"
            << result.survivors.size() << " retained " << result.retained_fraction
            << (result.feasible ? "" : " (band unreachable)") << "\n";
  return result.feasible ? 0 : kExitInfeasible;
}

int cmd_prune_model(const Knobs& k, const fs::path& manifest_path, const fs::path& features,
                    const std::optional<fs::path>& budget_path, const fs::path& out_dir) {
  const auto manifest = load_manifest(manifest_path);
  BudgetConfig budget;
  if (budget_path) budget = parse_budget_config(read_file(*budget_path));
  if (k.metric) budget.metric = *metric_from_string(*k.metric);
  if (k.keep) budget.global_keep = *k.keep;
  if (k.band) budget.band = *k.band;
  budget.validate();
  const auto run = prune_model(manifest, features, budget, run_config(k));
  write_model_run(manifest, run, out_dir);
  std::cout << report_to_text(run.report);
  return run.all_feasible ? 0 : kExitInfeasible;
}

int cmd_report(const fs::path& manifest_path, const fs::path& plan_path, const std::optional<fs::path>& csv) {
  const auto manifest = load_manifest(manifest_path);
  const auto plan = read_plan(plan_path);
  const auto report = build_report(manifest, plan);
  std::cout << report_to_text(report);
  if (csv) write_file(*csv, report_to_csv(report));
  return 0;
}

int cmd_gram(const Knobs& k, const fs::path& features, const std::string& layer_id, const fs::path& out_dir,
             bool structure) {
  const auto [in, out] = load_layer_features(features, layer_id);
  const auto design = build_design(in, out, kernel_config(k));
  fs::create_directories(out_dir);
  write_tensor(matrix_tensor(design.x, layer_id), out_dir / (layer_id + ".xg.fmap"));
  write_tensor(matrix_tensor(design.y, layer_id), out_dir / (layer_id + ".yg.fmap"));
  if (structure) {
    if (k.method == "sglp")
      write_file(out_dir / (layer_id + ".graph.json"), graph_to_json(build_graph(design.y, k.th)));
    else {
      const auto tree = build_tree(design.y);
      write_file(out_dir / (layer_id + ".tree.json"), tree_to_json(tree, node_weights(tree)));
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured-lasso channel pruning"};
  app.require_subcommand(1);
  Knobs knobs;

  fs::path features, out_dir, manifest_path, plan_path;
  std::optional<fs::path> opt_manifest, budget_path, csv_path, zoo_out;
  std::string layer_id, zoo_name;
  bool structure = false;
  SynthOptions synth;

  auto* prune_layer_cmd = app.add_subcommand("prune-layer", "search lambda for one layer");
  add_solve_flags(prune_layer_cmd, knobs);
  prune_layer_cmd->add_option("--features", features, "feature directory")->required();
  prune_layer_cmd->add_option("--layer", layer_id, "layer id")->required();
  prune_layer_cmd->add_option("--manifest", opt_manifest, "manifest for accounting");
  prune_layer_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* prune_model_cmd = app.add_subcommand("prune-model", "search every layer and plan masks");
  add_solve_flags(prune_model_cmd, knobs);
  prune_model_cmd->add_option("--manifest", manifest_path, "model manifest")->required();
  prune_model_cmd->add_option("--features", features, "feature directory")->required();
  prune_model_cmd->add_option("--budget", budget_path, "budget config document");
  prune_model_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* report_cmd = app.add_subcommand("report", "summarize a mask plan");
  report_cmd->add_option("--manifest", manifest_path, "model manifest")->required();
  report_cmd->add_option("--plan", plan_path, "mask plan")->required();
  report_cmd->add_option("--csv", csv_path, "also write the CSV report here");

  auto* zoo_cmd = app.add_subcommand("zoo", "emit a reference manifest");
  zoo_cmd->add_option("name", zoo_name, "model name")->required()->check(CLI::IsMember(zoo_names()));
  zoo_cmd->add_option("--out", zoo_out, "output file (stdout when omitted)");

  auto* synth_cmd = app.add_subcommand("synth", "write seeded synthetic features for a manifest");
  synth_cmd->add_option("--manifest", manifest_path, "model manifest")->required();
  synth_cmd->add_option("--out", out_dir, "feature directory")->required();
  synth_cmd->add_option("--batch", synth.batch, "batch size")->check(CLI::Range(2, 1 << 16))->capture_default_str();
  synth_cmd->add_option("--spatial", synth.spatial, "map side length")->check(CLI::Range(1, 1 << 12))->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "random seed")->capture_default_str();

  auto* gram_cmd = app.add_subcommand("gram", "write a layer's Gram design as FMAP files");
  add_method_flags(gram_cmd, knobs);
  gram_cmd->add_option("--features", features, "feature directory")->required();
  gram_cmd->add_option("--layer", layer_id, "layer id")->required();
  gram_cmd->add_option("--out", out_dir, "output directory")->required();
  gram_cmd->add_flag("--structure", structure, "also dump the graph or tree");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitError;
  }

  try {
    if (prune_layer_cmd->parsed()) return cmd_prune_layer(knobs, features, layer_id, opt_manifest, out_dir);
    if (prune_model_cmd->parsed()) return cmd_prune_model(knobs, manifest_path, features, budget_path, out_dir);
    if (report_cmd->parsed()) return cmd_report(manifest_path, plan_path, csv_path);
    if (gram_cmd->parsed()) return cmd_gram(knobs, features, layer_id, out_dir, structure);
    if (zoo_cmd->parsed()) {
      const auto text = manifest_to_text(zoo_manifest(zoo_name));
      if (zoo_out) write_file(*zoo_out, text);
      else std::cout << text;
      return 0;
    }
    if (synth_cmd->parsed()) {
      write_synthetic_features(load_manifest(manifest_path), out_dir, synth);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "lassoprune: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
