#include "lassoprune/budget.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "json.hpp"
#include "lassoprune/error.hpp"

namespace lassoprune {

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::Params: return "params";
    case Metric::Flops: return "flops";
    case Metric::Channels: return "channels";
  }
  return "params";
}

std::optional<Metric> metric_from_string(std::string_view text) {
  if (text == "params") return Metric::Params;
  if (text == "flops") return Metric::Flops;
  if (text == "channels") return Metric::Channels;
  return std::nullopt;
}

namespace {

void check_kept(const LayerSpec& spec, std::int64_t kept_in, std::int64_t kept_out) {
  if (kept_in < 0 || kept_out < 0 || kept_in > spec.in_channels || kept_out > spec.out_channels)
    throw Error(ErrorCode::KeptExceedsDeclared,
                "layer '" + spec.id + "': kept " + std::to_string(kept_in) + "->" + std::to_string(kept_out) +
                    " of " + std::to_string(spec.in_channels) + "->" + std::to_string(spec.out_channels));
}

std::uint64_t u(std::int64_t v) { return static_cast<std::uint64_t>(v); }

std::uint64_t macs_per_position(const LayerSpec& spec, std::int64_t kept_in, std::int64_t kept_out) {
  const std::uint64_t k = spec.kind == LayerKind::Conv ? u(spec.kernel_h) * u(spec.kernel_w) : 1;
  return k * u(kept_in) * u(kept_out);
}

std::uint64_t epilogue_per_output(const LayerSpec& spec) {
  return (spec.has_bias ? 1u : 0u) + (spec.norm ? 2u : 0u) + (spec.activation ? 1u : 0u);
}

std::uint64_t output_positions(const LayerSpec& spec) {
  if (spec.kind == LayerKind::Linear) return 1;
  return u(spec.out_spatial_h) * u(spec.out_spatial_w);
}

}  // namespace

std::uint64_t layer_params(const LayerSpec& spec, std::int64_t kept_in, std::int64_t kept_out) {
  check_kept(spec, kept_in, kept_out);
  if (!spec.is_weighted()) return 0;
  std::uint64_t p = macs_per_position(spec, kept_in, kept_out);
  if (spec.has_bias) p += u(kept_out);
  if (spec.norm) p += 2 * u(kept_out);
  return p;
}

std::uint64_t layer_flops(const LayerSpec& spec, std::int64_t kept_in, std::int64_t kept_out) {
  check_kept(spec, kept_in, kept_out);
  if (!spec.is_weighted()) return 0;
  const std::uint64_t per_position = macs_per_position(spec, kept_in, kept_out) + u(kept_out) * epilogue_per_output(spec);
  return output_positions(spec) * per_position;
}

ModelTotals model_totals(const ModelManifest& manifest, const MaskPlan* plan) {
  if (plan) check_plan(manifest, *plan);
  ModelTotals t;
  for (const auto& layer : manifest.layers) {
    std::int64_t kept_in = layer.in_channels, kept_out = layer.out_channels;
    if (plan) {
      if (const auto* mask = plan->find(layer.id)) {
        kept_in = std::count(mask->in_keep.begin(), mask->in_keep.end(), true);
        kept_out = std::count(mask->out_keep.begin(), mask->out_keep.end(), true);
      }
    }
    t.params += layer_params(layer, kept_in, kept_out);
    t.flops += layer_flops(layer, kept_in, kept_out);
  }
  return t;
}

double retained_fraction(const LayerSpec& spec, Metric metric, std::int64_t kept_out) {
  if (spec.out_channels <= 0) throw Error(ErrorCode::InvalidConfig, "layer '" + spec.id + "' has no outputs");
  switch (metric) {
    case Metric::Channels:
      check_kept(spec, spec.in_channels, kept_out);
      return static_cast<double>(kept_out) / static_cast<double>(spec.out_channels);
    case Metric::Params: {
      const auto full = layer_params(spec, spec.in_channels, spec.out_channels);
      return full == 0 ? 1.0
                       : static_cast<double>(layer_params(spec, spec.in_channels, kept_out)) /
                             static_cast<double>(full);
    }
    case Metric::Flops: {
      const auto full = layer_flops(spec, spec.in_channels, spec.out_channels);
      return full == 0 ? 1.0
                       : static_cast<double>(layer_flops(spec, spec.in_channels, kept_out)) /
                             static_cast<double>(full);
    }
  }
  return 1.0;
}

void LayerBudget::validate() const {
  if (!(e_l > 0.0 && e_l < e_u && e_u <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "budget band must satisfy 0 < E_l < E_u <= 1");
  if (lambda_l && lambda_u && !(*lambda_l < *lambda_u))
    throw Error(ErrorCode::InvalidConfig, "lambda bracket must satisfy lambda_l < lambda_u");
  if (max_search_iter < 1) throw Error(ErrorCode::InvalidConfig, "max_search_iter must be >= 1");
}

namespace {

double band_distance(double f, const LayerBudget& b) { return std::max({b.e_l - f, f - b.e_u, 0.0}); }

}  // namespace

PruneResult adaptive_search(const ProblemBuilder& builder, const LayerBudget& budget, const SolverConfig& cfg,
                            const LayerSpec& spec) {
  budget.validate();
  cfg.validate();
  if (spec.out_channels != builder.loss().out_dim())
    throw Error(ErrorCode::DimensionMismatch, "layer '" + spec.id + "' declares " +
                                                  std::to_string(spec.out_channels) + " outputs, design has " +
                                                  std::to_string(builder.loss().out_dim()));
  double lmax = builder.lambda_max();
  if (!(lmax > 0.0)) lmax = 1.0;
  double lt = budget.lambda_l.value_or(std::log(1e-6 * lmax));
  double ut = budget.lambda_u.value_or(std::log(10.0 * lmax));
  if (!(lt < ut)) throw Error(ErrorCode::InvalidConfig, "lambda bracket must satisfy lambda_l < lambda_u");

  PruneResult best;
  best.layer_id = spec.id;
  bool have_best = false;
  bool best_nonempty = false;
  double best_dist = std::numeric_limits<double>::infinity();

  // The solution at the sparse end of the bracket seeds the next probe; a
  // denser start leaves near-zero columns alive under the smoothed penalty.
  std::optional<Eigen::MatrixXd> upper_beta;

  for (int probe = 0; probe < budget.max_search_iter && ut - lt >= 1e-9; ++probe) {
    // log of the arithmetic mean of the bracket ends, computed stably.
    const double log_lambda = ut + std::log(0.5 * (1.0 + std::exp(lt - ut)));
    const double lambda = std::exp(log_lambda);
    Solution sol = solve_spg(builder.at(lambda), cfg, upper_beta ? &*upper_beta : nullptr);
    auto flags = select_channels(sol.beta, std::nullopt, resolve_zero_eps(sol.beta, cfg));
    const auto kept = static_cast<std::int64_t>(std::count(flags.begin(), flags.end(), true));
    const double fraction = retained_fraction(spec, budget.metric, kept);
    best.probes.push_back({log_lambda, fraction, static_cast<std::size_t>(kept)});

    const double dist = band_distance(fraction, budget);
    const bool nonempty = kept > 0;
    const bool inside = fraction >= budget.e_l && fraction <= budget.e_u;
    if (fraction < budget.e_l) {
      ut = log_lambda;
      upper_beta = sol.beta;
    } else if (fraction > budget.e_u) {
      lt = log_lambda;
    }
    const bool better = !have_best || (nonempty && !best_nonempty) || (nonempty == best_nonempty && dist < best_dist);
    if (better) {
      have_best = true;
      best_nonempty = nonempty;
      best_dist = dist;
      best.lambda_star = lambda;
      best.survivors = std::move(flags);
      best.retained_fraction = fraction;
      best.solve_iterations = sol.iterations;
      best.beta = sol.beta;
      best.solution = std::move(sol);
    }
    if (inside) {
      best.feasible = true;
      break;
    }
  }
  if (!have_best) throw Error(ErrorCode::InvalidConfig, "lambda bracket admits no probe");
  return best;
}

std::vector<bool> select_channels(const Eigen::MatrixXd& beta, std::optional<std::size_t> target_count,
                                  double zero_eps) {
  const auto k = static_cast<std::size_t>(beta.cols());
  std::vector<Eigen::Index> nnz(k);
  std::vector<double> l1(k);
  for (std::size_t c = 0; c < k; ++c) {
    const auto col = beta.col(static_cast<Eigen::Index>(c)).array().abs();
    nnz[c] = (col > zero_eps).count();
    l1[c] = col.sum();
  }
  std::vector<bool> keep(k, false);
  if (!target_count) {
    for (std::size_t c = 0; c < k; ++c) keep[c] = nnz[c] > 0;
    return keep;
  }
  if (*target_count > k)
    throw Error(ErrorCode::TargetExceedsColumns,
                "target " + std::to_string(*target_count) + " exceeds " + std::to_string(k) + " columns");
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (nnz[a] != nnz[b]) return nnz[a] > nnz[b];
    return l1[a] > l1[b];
  });
  for (std::size_t i = 0; i < *target_count; ++i) keep[order[i]] = true;
  return keep;
}

void BudgetConfig::validate() const {
  if (!(global_keep > 0.0 && global_keep <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "global_keep must lie in (0, 1]");
  if (!(band > 0.0 && band < 1.0)) throw Error(ErrorCode::InvalidConfig, "band must lie in (0, 1)");
  for (const auto& [id, o] : overrides)
    if (!(o.e_l > 0.0 && o.e_l < o.e_u && o.e_u <= 1.0))
      throw Error(ErrorCode::InvalidConfig, "override for '" + id + "' must satisfy 0 < E_l < E_u <= 1");
}

BudgetConfig parse_budget_config(std::string_view text) {
  using nlohmann::json;
  BudgetConfig c;
  try {
    const json doc = json::parse(text);
    if (!doc.is_object()) throw Error(ErrorCode::ParseError, "budget config must be an object");
    if (doc.contains("metric")) {
      const auto m = metric_from_string(doc.at("metric").get<std::string>());
      if (!m) throw Error(ErrorCode::ParseError, "unknown metric '" + doc.at("metric").get<std::string>() + "'");
      c.metric = *m;
    }
    c.global_keep = doc.value("global_keep", c.global_keep);
    c.band = doc.value("band", c.band);
    if (doc.contains("overrides")) {
      for (const auto& [id, o] : doc.at("overrides").items())
        c.overrides[id] = {o.at("E_l").get<double>(), o.at("E_u").get<double>()};
    }
    if (doc.contains("skip_layers")) c.skip_layers = doc.at("skip_layers").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("budget config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string budget_config_to_text(const BudgetConfig& c) {
  nlohmann::ordered_json doc;
  doc["metric"] = std::string(to_string(c.metric));
  doc["global_keep"] = c.global_keep;
  doc["band"] = c.band;
  doc["overrides"] = nlohmann::ordered_json::object();
  for (const auto& [id, o] : c.overrides) doc["overrides"][id] = {{"E_l", o.e_l}, {"E_u", o.e_u}};
  if (c.skip_layers) doc["skip_layers"] = *c.skip_layers;
  return doc.dump(1) + "\n";
}

std::vector<std::string> default_skip_layers(const ModelManifest& manifest) {
  std::vector<std::string> ids;
  for (const auto& l : manifest.layers) {
    if (ids.size() == 4) break;
    if (l.kind == LayerKind::Conv) ids.push_back(l.id);
  }
  return ids;
}

std::vector<LayerTarget> expand_budget(const ModelManifest& manifest, const BudgetConfig& config,
                                       const LayerBudget& defaults) {
  config.validate();
  for (const auto& [id, o] : config.overrides)
    if (!manifest.index_of(id)) throw Error(ErrorCode::InvalidConfig, "override names unknown layer '" + id + "'");
  std::vector<LayerTarget> targets;
  if (config.global_keep >= 1.0) return targets;
  const auto skip_list = config.skip_layers.value_or(default_skip_layers(manifest));
  const std::set<std::string, std::less<>> skip(skip_list.begin(), skip_list.end());
  for (const auto& l : manifest.layers) {
    if (!l.is_weighted() || !l.prunable || skip.count(l.id)) continue;
    LayerBudget b = defaults;
    b.metric = config.metric;
    if (auto it = config.overrides.find(l.id); it != config.overrides.end()) {
      b.e_l = it->second.e_l;
      b.e_u = it->second.e_u;
    } else {
      b.e_l = std::max(config.global_keep - config.band, 1e-6);
      b.e_u = std::min(config.global_keep + config.band, 1.0);
    }
    b.validate();
    targets.push_back({l.id, b});
  }
  return targets;
}

}  // namespace lassoprune
