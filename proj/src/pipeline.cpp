#include "lassoprune/pipeline.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "lassoprune/error.hpp"

namespace lassoprune {

namespace fs = std::filesystem;

fs::path input_feature_path(const fs::path& dir, std::string_view layer_id) {
  return dir / (std::string(layer_id) + ".in.fmap");
}

fs::path output_feature_path(const fs::path& dir, std::string_view layer_id) {
  return dir / (std::string(layer_id) + ".out.fmap");
}

namespace {

FeatureBatch load_batch(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::MissingInput, "feature file not found: " + path.string());
  return FeatureBatch::from_tensor(read_tensor(path));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::pair<FeatureBatch, FeatureBatch> load_layer_features(const fs::path& dir, std::string_view layer_id) {
  return {load_batch(input_feature_path(dir, layer_id)), load_batch(output_feature_path(dir, layer_id))};
}

ProblemBuilder make_builder(const GramDesign& design, const RunConfig& cfg) {
  auto loss = QuadraticLoss::from_design(design.x, design.y);
  if (cfg.method == Method::Graph) return ProblemBuilder(loss, build_graph(design.y, cfg.th), cfg.mu, cfg.mu_ratio);
  return ProblemBuilder(loss, build_tree(design.y, cfg.tree));
}

PruneResult prune_layer(const LayerSpec& spec, const GramDesign& design, const RunConfig& cfg,
                        const LayerBudget& budget) {
  if (static_cast<std::int64_t>(design.x.cols()) != spec.in_channels ||
      static_cast<std::int64_t>(design.y.cols()) != spec.out_channels)
    throw Error(ErrorCode::DimensionMismatch,
                "layer '" + spec.id + "' declares " + std::to_string(spec.in_channels) + "->" +
                    std::to_string(spec.out_channels) + " channels, features have " +
                    std::to_string(design.x.cols()) + "->" + std::to_string(design.y.cols()));
  return adaptive_search(make_builder(design, cfg), budget, cfg.solver, spec);
}

std::string prune_result_to_text(const PruneResult& r) {
  nlohmann::ordered_json doc;
  doc["layer_id"] = r.layer_id;
  doc["lambda_star"] = r.lambda_star;
  auto flags = nlohmann::ordered_json::array();
  for (bool b : r.survivors) flags.push_back(b ? 1 : 0);
  doc["survivors"] = std::move(flags);
  doc["retained_fraction"] = r.retained_fraction;
  doc["solve_iterations"] = r.solve_iterations;
  doc["feasible"] = r.feasible;
  auto probes = nlohmann::ordered_json::array();
  for (const auto& p : r.probes)
    probes.push_back({{"log_lambda", p.log_lambda}, {"retained_fraction", p.retained_fraction}, {"survivors", p.survivors}});
  doc["probes"] = std::move(probes);
  return doc.dump(1) + "\n";
}

void write_prune_result(const PruneResult& r, const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / (r.layer_id + ".result.json"), prune_result_to_text(r));
  write_trace_csv(r.solution, dir / (r.layer_id + ".trace.csv"));
  TensorFile beta;
  beta.layer_id = r.layer_id;
  beta.dims = {static_cast<std::uint64_t>(r.beta.rows()), static_cast<std::uint64_t>(r.beta.cols())};
  std::vector<double> values(r.beta.size());
  for (Eigen::Index i = 0; i < r.beta.rows(); ++i)
    for (Eigen::Index j = 0; j < r.beta.cols(); ++j) values[static_cast<std::size_t>(i * r.beta.cols() + j)] = r.beta(i, j);
  beta.data = std::move(values);
  write_tensor(beta, dir / (r.layer_id + ".beta.fmap"));
}

double Report::params_reduction() const {
  return before.params == 0 ? 0.0 : 1.0 - static_cast<double>(after.params) / static_cast<double>(before.params);
}

double Report::flops_reduction() const {
  return before.flops == 0 ? 0.0 : 1.0 - static_cast<double>(after.flops) / static_cast<double>(before.flops);
}

Report build_report(const ModelManifest& manifest, const MaskPlan& plan, const std::vector<PruneResult>& results) {
  Report rep;
  rep.model_name = manifest.model_name;
  rep.before = model_totals(manifest);
  rep.after = model_totals(manifest, &plan);
  for (const auto& l : manifest.layers) {
    if (!l.is_weighted()) continue;
    ReportRow row;
    row.layer_id = l.id;
    std::int64_t kept_in = l.in_channels, kept_out = l.out_channels;
    if (const auto* mask = plan.find(l.id)) {
      kept_in = std::count(mask->in_keep.begin(), mask->in_keep.end(), true);
      kept_out = std::count(mask->out_keep.begin(), mask->out_keep.end(), true);
    }
    row.orig_params = layer_params(l, l.in_channels, l.out_channels);
    row.kept_params = layer_params(l, kept_in, kept_out);
    row.orig_flops = layer_flops(l, l.in_channels, l.out_channels);
    row.kept_flops = layer_flops(l, kept_in, kept_out);
    row.retained_fraction =
        row.orig_params == 0 ? 1.0 : static_cast<double>(row.kept_params) / static_cast<double>(row.orig_params);
    for (const auto& r : results) {
      if (r.layer_id != l.id) continue;
      row.lambda_star = r.lambda_star;
      row.iterations = r.solve_iterations;
      row.feasible = r.feasible;
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

std::string report_to_csv(const Report& rep) {
  std::ostringstream out;
  out << "layer_id,orig_params,kept_params,orig_flops,kept_flops,retained_fraction,lambda_star,iterations,feasible\n";
  for (const auto& r : rep.rows) {
    out << r.layer_id << ',' << r.orig_params << ',' << r.kept_params << ',' << r.orig_flops << ','
        << r.kept_flops << ',' << fixed(r.retained_fraction, 6) << ',' << (r.lambda_star ? general(*r.lambda_star) : "")
        << ',' << (r.iterations ? std::to_string(*r.iterations) : "") << ','
        << (r.feasible ? (*r.feasible ? "1" : "0") : "") << '\n';
  }
  return out.str();
}

std::string report_to_text(const Report& rep) {
  std::ostringstream out;
  const auto millions = [](std::uint64_t v) { return fixed(static_cast<double>(v) / 1e6, 2) + "M"; };
  out << "model: " << rep.model_name << '\n';
  out << "params: " << millions(rep.before.params) << " -> " << millions(rep.after.params) << "  Params↓ "
      << fixed(100.0 * rep.params_reduction(), 1) << "%\n";
  out << "flops:  " << millions(rep.before.flops) << " -> " << millions(rep.after.flops) << "  FLOPs↓ "
      << fixed(100.0 * rep.flops_reduction(), 1) << "%\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %12s %12s %8s %10s\n", "layer", "params", "flops", "kept", "status");
  out << line;
  for (const auto& r : rep.rows) {
    const char* status = !r.feasible ? "-" : (*r.feasible ? "ok" : "snapped");
    std::snprintf(line, sizeof line, "%-24s %12llu %12llu %7.1f%% %10s\n", r.layer_id.c_str(),
                  static_cast<unsigned long long>(r.kept_params), static_cast<unsigned long long>(r.kept_flops),
                  100.0 * r.retained_fraction, status);
    out << line;
  }
  return out.str();
}

ModelRun prune_model(const ModelManifest& manifest, const fs::path& feature_dir, const BudgetConfig& budget,
                     const RunConfig& cfg) {
  validate_manifest(manifest);
  const auto targets = expand_budget(manifest, budget, cfg.budget);
  ModelRun run;
  run.results.resize(targets.size());
  std::vector<std::exception_ptr> failures(targets.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < targets.size(); t = next++) {
      try {
        const auto& spec = manifest.layer(targets[t].layer_id);
        const auto [in, out] = load_layer_features(feature_dir, spec.id);
        run.results[t] = prune_layer(spec, build_design(in, out, cfg.kernel), cfg, targets[t].budget);
      } catch (...) {
        failures[t] = std::current_exception();
      }
    }
  };
  const auto jobs = static_cast<std::size_t>(std::max(1, cfg.jobs));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < std::min(jobs, targets.size()); ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  // The combined error carries the code of the first failing layer.
  std::string errors;
  std::optional<ErrorCode> code;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (!failures[t]) continue;
    try {
      std::rethrow_exception(failures[t]);
    } catch (const Error& e) {
      if (!code) code = e.code();
      errors += "\n  " + targets[t].layer_id + ": " + e.what();
    } catch (const std::exception& e) {
      if (!code) code = ErrorCode::InvalidConfig;
      errors += "\n  " + targets[t].layer_id + ": " + e.what();
    }
  }
  if (code) throw Error(*code, "layer searches failed:" + errors);

  Selections selections = all_keep_selections(manifest);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto& r = run.results[t];
    const auto& b = targets[t].budget;
    if (r.feasible) {
      selections[r.layer_id] = r.survivors;
      continue;
    }
    run.all_feasible = false;
    const auto width = static_cast<double>(r.survivors.size());
    const auto target = static_cast<std::size_t>(
        std::clamp(std::llround(0.5 * (b.e_l + b.e_u) * width), 1LL, static_cast<long long>(width)));
    selections[r.layer_id] = select_channels(r.beta, target, resolve_zero_eps(r.beta, cfg.solver));
  }
  run.plan = plan_masks(manifest, selections);
  for (const auto& r : run.results)
    if (!r.feasible)
      run.plan.notes.push_back("layer '" + r.layer_id + "': budget band unreachable, snapped to the band midpoint");
  run.report = build_report(manifest, run.plan, run.results);
  return run;
}

void write_model_run(const ModelManifest& manifest, const ModelRun& run, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& r : run.results) write_prune_result(r, dir / "layers");
  write_text(dir / "report.csv", report_to_csv(run.report));
  write_text(dir / "report.txt", report_to_text(run.report));
  write_plan(manifest, run.plan, dir / "plan.json");
}

void write_synthetic_features(const ModelManifest& manifest, const fs::path& dir, const SynthOptions& opt) {
  if (opt.batch < 2 || opt.spatial < 1) throw Error(ErrorCode::InvalidConfig, "synthetic batch must be >= 2");
  fs::create_directories(dir);
  const std::size_t bs = opt.batch, hw = opt.spatial * opt.spatial;
  for (std::size_t index = 0; index < manifest.layers.size(); ++index) {
    const auto& l = manifest.layers[index];
    if (!l.is_weighted() || !l.prunable) continue;
    std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                      static_cast<std::uint32_t>(index)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> share(0.0, 1.0);
    const auto in_ch = static_cast<std::size_t>(l.in_channels), out_ch = static_cast<std::size_t>(l.out_channels);

    std::vector<float> x(bs * hw * in_ch);
    for (auto& v : x) v = static_cast<float>(normal(rng));
    std::vector<float> y(bs * hw * out_ch);
    std::uniform_int_distribution<std::size_t> pick(0, in_ch - 1);
    for (std::size_t c = 0; c < out_ch; ++c) {
      std::array<std::size_t, 3> src{pick(rng), pick(rng), pick(rng)};
      std::array<double, 3> w{normal(rng), normal(rng), normal(rng)};
      const double a = share(rng);
      for (std::size_t p = 0; p < bs * hw; ++p) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += w[k] * x[p * in_ch + src[k]];
        y[p * out_ch + c] = static_cast<float>(a * std::tanh(s) + (1.0 - a) * normal(rng));
      }
    }
    TensorFile tin, tout;
    tin.layer_id = tout.layer_id = l.id;
    tin.dims = {bs, opt.spatial, opt.spatial, in_ch};
    tout.dims = {bs, opt.spatial, opt.spatial, out_ch};
    tin.data = std::move(x);
    tout.data = std::move(y);
    write_tensor(tin, input_feature_path(dir, l.id));
    write_tensor(tout, output_feature_path(dir, l.id));
  }
}

}  // namespace lassoprune
