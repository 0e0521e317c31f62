#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lassoprune/error.hpp"
#include "lassoprune/pipeline.hpp"
#include "lassoprune/zoo.hpp"

using namespace lassoprune;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "lassoprune_pipeline" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// resnet8: stem, one basic block per stage, two projections.
const ModelManifest& small_model() {
  static const ModelManifest m = resnet_cifar(1);
  return m;
}

const fs::path& small_features() {
  static const fs::path dir = [] {
    auto d = scratch("features");
    write_synthetic_features(small_model(), d, {});
    return d;
  }();
  return dir;
}

BudgetConfig half_params() {
  BudgetConfig b;
  b.global_keep = 0.5;
  return b;
}

}  // namespace

TEST_CASE("feature paths follow the layer id") {
  CHECK(input_feature_path("d", "s1.b0.conv1") == fs::path("d") / "s1.b0.conv1.in.fmap");
  CHECK(output_feature_path("d", "fc") == fs::path("d") / "fc.out.fmap");
}

TEST_CASE("synthetic features are seeded and shaped by the manifest") {
  const auto a = scratch("synth_a"), b = scratch("synth_b"), c = scratch("synth_c");
  write_synthetic_features(small_model(), a, {.batch = 4, .spatial = 2, .seed = 7});
  write_synthetic_features(small_model(), b, {.batch = 4, .spatial = 2, .seed = 7});
  write_synthetic_features(small_model(), c, {.batch = 4, .spatial = 2, .seed = 8});
  const auto id = "s2.b0.conv2";
  CHECK(slurp(output_feature_path(a, id)) == slurp(output_feature_path(b, id)));
  CHECK(slurp(output_feature_path(a, id)) != slurp(output_feature_path(c, id)));
  const auto [in, out] = load_layer_features(a, id);
  CHECK(in.bs() == 4);
  CHECK(in.h() == 2);
  CHECK(in.channels() == 32);
  CHECK(out.channels() == 32);
  CHECK_THROWS_AS(write_synthetic_features(small_model(), a, {.batch = 1}), Error);
}

TEST_CASE("missing feature files are named") {
  const auto dir = scratch("empty");
  try {
    load_layer_features(dir, "conv1");
    FAIL("expected missing-input");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingInput);
    CHECK(std::string(e.what()).find((dir / "conv1.in.fmap").string()) != std::string::npos);
  }
  try {
    prune_model(small_model(), dir, half_params(), {});
    FAIL("expected missing-input");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingInput);
    CHECK(std::string(e.what()).find((dir / "s2.b0.conv2.in.fmap").string()) != std::string::npos);
  }
}

TEST_CASE("prune_layer rejects features that disagree with the manifest") {
  const auto [in, out] = load_layer_features(small_features(), "s3.b0.conv1");
  auto spec = small_model().layer("s3.b0.conv1");
  spec.out_channels = 63;
  CHECK_THROWS_AS(prune_layer(spec, build_design(in, out, {}), {}, {}), Error);
}

TEST_CASE("prune_model lands every layer in its band for both penalties") {
  for (const auto method : {Method::Tree, Method::Graph}) {
    CAPTURE(static_cast<int>(method));
    RunConfig cfg;
    cfg.method = method;
    const auto run = prune_model(small_model(), small_features(), half_params(), cfg);
    CHECK(run.all_feasible);
    CHECK(run.plan.notes.empty());
    CHECK_NOTHROW(check_plan(small_model(), run.plan));
    // Default skip list leaves the stem, stage-1 convs and s2.b0.conv1.
    REQUIRE(run.results.size() == 3);
    for (const auto& r : run.results) {
      CHECK(r.feasible);
      CHECK(r.retained_fraction >= 0.45);
      CHECK(r.retained_fraction <= 0.55);
      CHECK(run.plan.find(r.layer_id)->out_keep == r.survivors);
    }
    CHECK(run.report.params_reduction() > 0.0);
    CHECK(run.report.after.params == model_totals(small_model(), &run.plan).params);
  }
}

TEST_CASE("prune_model output is identical across runs and job counts") {
  RunConfig one, four;
  four.jobs = 4;
  const auto a = prune_model(small_model(), small_features(), half_params(), one);
  const auto b = prune_model(small_model(), small_features(), half_params(), one);
  const auto c = prune_model(small_model(), small_features(), half_params(), four);
  const auto text = plan_to_text(small_model(), a.plan);
  CHECK(text == plan_to_text(small_model(), b.plan));
  CHECK(text == plan_to_text(small_model(), c.plan));
  CHECK(report_to_csv(a.report) == report_to_csv(c.report));
}

TEST_CASE("unreachable bands snap to the band midpoint") {
  BudgetConfig b;
  b.metric = Metric::Channels;
  b.skip_layers = std::vector<std::string>{};
  b.overrides["s1.b0.conv1"] = {0.01, 0.02};  // 16 channels: nearest counts are 0 and 1/16
  b.global_keep = 0.999;
  b.band = 0.001;
  const auto run = prune_model(small_model(), small_features(), b, {});
  CHECK_FALSE(run.all_feasible);
  const auto* mask = run.plan.find("s1.b0.conv1");
  REQUIRE(mask);
  CHECK(std::count(mask->out_keep.begin(), mask->out_keep.end(), true) == 1);
  bool noted = false;
  for (const auto& n : run.plan.notes) noted |= n.find("s1.b0.conv1") != std::string::npos;
  CHECK(noted);
}

TEST_CASE("a keep-everything budget plans the identity") {
  BudgetConfig b;
  b.global_keep = 1.0;
  const auto run = prune_model(small_model(), fs::path("/nonexistent"), b, {});
  CHECK(run.results.empty());
  CHECK(run.plan.masks.size() == small_model().layers.size());
  for (const auto& [id, mask] : run.plan.masks) {
    CHECK(std::all_of(mask.out_keep.begin(), mask.out_keep.end(), [](bool k) { return k; }));
    CHECK(std::all_of(mask.in_keep.begin(), mask.in_keep.end(), [](bool k) { return k; }));
  }
  CHECK(run.report.params_reduction() == 0.0);
  CHECK(run.report.flops_reduction() == 0.0);
  CHECK(report_to_text(run.report).find("Params↓ 0.0%") != std::string::npos);
}

TEST_CASE("report csv columns and search fields") {
  RunConfig cfg;
  const auto run = prune_model(small_model(), small_features(), half_params(), cfg);
  const auto csv = report_to_csv(run.report);
  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  CHECK(header == "layer_id,orig_params,kept_params,orig_flops,kept_flops,retained_fraction,lambda_star,iterations,feasible");
  std::size_t rows = 0, searched = 0;
  for (std::string line; std::getline(lines, line); ++rows) {
    CHECK(std::count(line.begin(), line.end(), ',') == 8);
    searched += line.ends_with(",1");
  }
  CHECK(rows == run.report.rows.size());
  CHECK(searched == 3);
  const auto text = report_to_text(run.report);
  CHECK(text.find("Params↓") != std::string::npos);
  CHECK(text.find("FLOPs↓") != std::string::npos);
  CHECK(text.find("resnet8-cifar") != std::string::npos);
}

TEST_CASE("write_model_run lays out plan, reports and per-layer files") {
  const auto dir = scratch("run");
  const auto run = prune_model(small_model(), small_features(), half_params(), {});
  write_model_run(small_model(), run, dir);
  CHECK(read_plan(dir / "plan.json") == run.plan);
  CHECK(slurp(dir / "report.csv") == report_to_csv(run.report));
  for (const auto& r : run.results) {
    CHECK(fs::exists(dir / "layers" / (r.layer_id + ".result.json")));
    CHECK(fs::exists(dir / "layers" / (r.layer_id + ".trace.csv")));
    const auto beta = read_tensor(dir / "layers" / (r.layer_id + ".beta.fmap"));
    CHECK(beta.dims == std::vector<std::uint64_t>{static_cast<std::uint64_t>(r.beta.rows()),
                                                  static_cast<std::uint64_t>(r.beta.cols())});
  }
}

TEST_CASE("uniform keep on vgg16 reaches the reference reduction") {
  // 35% of each searched layer's outputs gives about 85% fewer parameters.
  const auto m = vgg16_cifar();
  BudgetConfig b;
  b.global_keep = 0.35;
  auto sel = all_keep_selections(m);
  for (const auto& t : expand_budget(m, b)) {
    const auto width = m.layer(t.layer_id).out_channels;
    std::vector<bool> keep(static_cast<std::size_t>(width), false);
    for (long i = 0; i < std::lround(0.35 * static_cast<double>(width)); ++i) keep[static_cast<std::size_t>(i)] = true;
    sel[t.layer_id] = keep;
  }
  const auto report = build_report(m, plan_masks(m, sel));
  CHECK(std::abs(100.0 * report.params_reduction() - 85.0) <= 1.0);
  CHECK(std::abs(100.0 * report.flops_reduction() - 61.0) <= 3.0);
}
