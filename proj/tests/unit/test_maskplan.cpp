#include <algorithm>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "lassoprune/error.hpp"
#include "lassoprune/maskplan.hpp"
#include "lassoprune/zoo.hpp"

using namespace lassoprune;

namespace {

using Keep = std::vector<bool>;

struct Toy {
  ModelManifest m;

  Toy() {
    m.model_name = "toy";
    m.input_shape = {3, 8, 8};
  }
  Toy& conv(std::string id, std::int64_t in, std::int64_t out, std::vector<std::string> preds, bool prunable = true) {
    LayerSpec l;
    l.id = std::move(id);
    l.in_channels = in;
    l.out_channels = out;
    l.kernel_h = l.kernel_w = 3;
    l.out_spatial_h = l.out_spatial_w = 8;
    l.predecessors = std::move(preds);
    l.prunable = prunable;
    m.layers.push_back(l);
    return *this;
  }
  Toy& junction(std::string id, LayerKind kind, std::int64_t ch, std::vector<std::string> preds) {
    LayerSpec l;
    l.id = std::move(id);
    l.kind = kind;
    l.in_channels = l.out_channels = ch;
    l.predecessors = std::move(preds);
    m.layers.push_back(l);
    return *this;
  }
};

Keep keep_of(std::size_t n, std::initializer_list<std::size_t> on) {
  Keep k(n, false);
  for (auto i : on) k[i] = true;
  return k;
}

Selections random_selections(const ModelManifest& m, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution coin(p);
  Selections s;
  for (const auto& l : m.layers) {
    if (!l.is_weighted() || !l.prunable) continue;
    Keep k(static_cast<std::size_t>(l.out_channels));
    for (auto&& b : k) b = coin(rng);
    k[rng() % k.size()] = true;
    s[l.id] = k;
  }
  return s;
}

void check_invariants(const ModelManifest& m, const MaskPlan& plan) {
  CHECK_NOTHROW(check_plan(m, plan));
  for (const auto& l : m.layers) {
    const auto* mask = plan.find(l.id);
    REQUIRE(mask != nullptr);
    CHECK(std::count(mask->out_keep.begin(), mask->out_keep.end(), true) > 0);
    if (l.kind == LayerKind::AddJunction) {
      for (const auto& p : l.predecessors) CHECK(plan.find(p)->out_keep == mask->out_keep);
    } else if (l.kind == LayerKind::ConcatJunction) {
      Keep cat;
      for (const auto& p : l.predecessors) {
        const auto& k = plan.find(p)->out_keep;
        cat.insert(cat.end(), k.begin(), k.end());
      }
      CHECK(cat == mask->in_keep);
      CHECK(cat == mask->out_keep);
    } else if (!l.predecessors.empty()) {
      CHECK(mask->in_keep == plan.find(l.predecessors[0])->out_keep);
    }
    if (l.is_weighted() && !l.prunable && !m.layers.empty()) {
      // Non-prunable layers only shrink when a junction forces them to.
      bool behind_add = false;
      for (const auto& o : m.layers)
        if (o.kind == LayerKind::AddJunction &&
            std::find(o.predecessors.begin(), o.predecessors.end(), l.id) != o.predecessors.end())
          behind_add = true;
      if (!behind_add) CHECK(std::count(mask->out_keep.begin(), mask->out_keep.end(), false) == 0);
    }
  }
}

}  // namespace

TEST_CASE("sequential chain passes keep sets forward") {
  Toy t;
  t.conv("A", 3, 4, {}).conv("B", 4, 6, {"A"});
  const auto plan = plan_sequential(t.m, {{"A", keep_of(4, {0, 2})}, {"B", Keep(6, true)}});
  CHECK(plan.find("B")->in_keep == keep_of(4, {0, 2}));
  CHECK(plan.find("A")->in_keep == Keep(3, true));
  CHECK(plan.notes.empty());
}

TEST_CASE("all-keep selections give the identity plan") {
  for (const auto& name : zoo_names()) {
    const auto m = zoo_manifest(name);
    const auto plan = plan_masks(m, all_keep_selections(m));
    CHECK(plan.notes.empty());
    for (const auto& [id, mask] : plan.masks) {
      CHECK(std::count(mask.out_keep.begin(), mask.out_keep.end(), false) == 0);
      CHECK(std::count(mask.in_keep.begin(), mask.in_keep.end(), false) == 0);
    }
  }
}

TEST_CASE("empty and missing selections") {
  Toy t;
  t.conv("A", 3, 4, {}).conv("B", 4, 6, {"A"});
  try {
    plan_masks(t.m, {{"A", Keep(4, false)}, {"B", Keep(6, true)}});
    FAIL("expected empty-mask");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyMask);
  }
  try {
    plan_masks(t.m, {{"A", Keep(4, true)}});
    FAIL("expected missing-selection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingSelection);
  }
  CHECK_THROWS_AS(plan_masks(t.m, {{"A", Keep(5, true)}, {"B", Keep(6, true)}}), Error);
  CHECK_THROWS_AS(plan_masks(t.m, {{"A", Keep(4, true)}, {"B", Keep(6, true)}, {"Z", Keep(1, true)}}), Error);
}

TEST_CASE("projection shortcut follows the block's final conv") {
  Toy t;
  t.conv("stem", 3, 4, {})
      .conv("c1", 4, 4, {"stem"})
      .conv("c2", 4, 4, {"c1"})
      .conv("proj", 4, 4, {"stem"}, false)
      .junction("add", LayerKind::AddJunction, 4, {"c2", "proj"})
      .conv("head", 4, 2, {"add"});
  Selections s{{"stem", Keep(4, true)}, {"c1", keep_of(4, {0, 1})}, {"c2", keep_of(4, {1, 3})}, {"head", Keep(2, true)}};
  const auto plan = plan_residual(t.m, s);
  CHECK(plan.find("proj")->out_keep == keep_of(4, {1, 3}));
  CHECK(plan.find("c2")->out_keep == keep_of(4, {1, 3}));
  CHECK(plan.find("add")->out_keep == keep_of(4, {1, 3}));
  CHECK(plan.find("head")->in_keep == keep_of(4, {1, 3}));
  check_invariants(t.m, plan);
}

TEST_CASE("identity shortcut overrides the final conv and records a note") {
  // Two blocks of width 16; the stem keeps all channels.
  Toy t;
  t.conv("stem", 3, 16, {})
      .conv("b0.c1", 16, 16, {"stem"})
      .conv("b0.c2", 16, 16, {"b0.c1"})
      .junction("b0.add", LayerKind::AddJunction, 16, {"b0.c2", "stem"})
      .conv("b1.c1", 16, 16, {"b0.add"})
      .conv("b1.c2", 16, 16, {"b1.c1"})
      .junction("b1.add", LayerKind::AddJunction, 16, {"b1.c2", "b0.add"});
  Keep half(16, false);
  for (std::size_t i = 0; i < 8; ++i) half[i * 2] = true;
  Selections s{{"stem", Keep(16, true)}, {"b0.c1", half}, {"b0.c2", half}, {"b1.c1", half}, {"b1.c2", half}};
  const auto plan = plan_residual(t.m, s);
  CHECK(plan.find("b0.c2")->out_keep == Keep(16, true));
  CHECK(plan.find("b1.c2")->out_keep == Keep(16, true));
  CHECK(plan.find("b0.c1")->out_keep == half);
  CHECK(plan.find("b1.c2")->in_keep == half);
  REQUIRE(plan.notes.size() == 2);
  CHECK(plan.notes[0].find("b0.c2") != std::string::npos);
  CHECK(plan.notes[0].find("b0.add") != std::string::npos);
  check_invariants(t.m, plan);
}

TEST_CASE("identity shortcut propagates a pruned stem through the chain") {
  Toy t;
  t.conv("stem", 3, 8, {});
  std::string prev = "stem";
  for (int b = 0; b < 3; ++b) {
    const auto p = "b" + std::to_string(b) + ".";
    t.conv(p + "c1", 8, 8, {prev}).conv(p + "c2", 8, 8, {p + "c1"}).junction(p + "add", LayerKind::AddJunction, 8, {p + "c2", prev});
    prev = p + "add";
  }
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = random_selections(t.m, rng);
    const auto plan = plan_residual(t.m, s);
    check_invariants(t.m, plan);
    for (int b = 0; b < 3; ++b) CHECK(plan.find("b" + std::to_string(b) + ".add")->out_keep == s.at("stem"));
  }
}

TEST_CASE("two-branch inception concatenates in branch order") {
  Toy t;
  t.conv("stem", 3, 8, {})
      .conv("br1", 8, 8, {"stem"})
      .conv("br2", 8, 8, {"stem"})
      .junction("cat", LayerKind::ConcatJunction, 16, {"br1", "br2"})
      .conv("head", 16, 4, {"cat"});
  const Keep k1 = keep_of(8, {0, 3, 5}), k2 = keep_of(8, {1, 2, 4, 6, 7});
  const auto plan = plan_inception(t.m, {{"stem", Keep(8, true)}, {"br1", k1}, {"br2", k2}, {"head", Keep(4, true)}});
  Keep cat = k1;
  cat.insert(cat.end(), k2.begin(), k2.end());
  CHECK(plan.find("cat")->out_keep == cat);
  CHECK(std::count(cat.begin(), cat.end(), true) == 8);
  CHECK(plan.find("head")->in_keep == cat);

  const auto all = plan_inception(t.m, {{"stem", Keep(8, true)}, {"br1", Keep(8, true)}, {"br2", k2}, {"head", Keep(4, true)}});
  const auto& out = all.find("cat")->out_keep;
  CHECK(std::all_of(out.begin(), out.begin() + 8, [](bool b) { return b; }));
}

TEST_CASE("wrappers reject junction kinds they do not handle") {
  Toy t;
  t.conv("stem", 3, 8, {}).conv("b", 8, 8, {"stem"}).junction("cat", LayerKind::ConcatJunction, 16, {"stem", "b"});
  const auto s = all_keep_selections(t.m);
  CHECK_THROWS_AS(plan_sequential(t.m, s), Error);
  CHECK_THROWS_AS(plan_residual(t.m, s), Error);
  CHECK_NOTHROW(plan_inception(t.m, s));
}

TEST_CASE("an add over a concat that must reshape is irreconcilable") {
  Toy t;
  t.conv("stem", 3, 8, {})
      .conv("a", 8, 4, {"stem"})
      .conv("b", 8, 4, {"stem"})
      .junction("cat", LayerKind::ConcatJunction, 8, {"a", "b"})
      .conv("c", 8, 8, {"cat"})
      .junction("add", LayerKind::AddJunction, 8, {"c", "cat"});
  Selections s{{"stem", Keep(8, true)}, {"a", keep_of(4, {0})}, {"b", Keep(4, true)}, {"c", Keep(8, true)}};
  // c adopts the concat's keep set; the concat itself never has to change.
  const auto plan = plan_masks(t.m, s);
  check_invariants(t.m, plan);

  Toy u;
  u.conv("stem", 3, 8, {})
      .conv("a", 8, 4, {"stem"})
      .conv("b", 8, 4, {"stem"})
      .junction("cat", LayerKind::ConcatJunction, 8, {"a", "b"})
      .conv("c", 8, 8, {"stem"})
      .conv("d", 8, 8, {"c"})
      .junction("add", LayerKind::AddJunction, 8, {"d", "cat"});
  Selections su{{"stem", Keep(8, true)}, {"a", keep_of(4, {0})}, {"b", Keep(4, true)},
                {"c", Keep(8, true)}, {"d", keep_of(8, {1})}};
  try {
    plan_masks(u.m, su);
    FAIL("expected irreconcilable shortcut");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IrreconcilableShortcut);
  }
}

TEST_CASE("random selections on zoo models satisfy every invariant") {
  std::mt19937_64 rng(11);
  for (const auto& name : zoo_names()) {
    CAPTURE(name);
    const auto m = zoo_manifest(name);
    for (int trial = 0; trial < 5; ++trial) {
      const auto s = random_selections(m, rng, 0.3);
      const auto plan = plan_masks(m, s);
      check_invariants(m, plan);
      // Idempotence.
      const auto again = plan_masks(m, selections_from_plan(m, plan));
      CHECK(again.masks == plan.masks);
      CHECK(again.notes.empty());
    }
  }
}

TEST_CASE("VGG16 random selections feed each conv from the previous one") {
  std::mt19937_64 rng(12);
  const auto m = vgg16_cifar();
  const auto s = random_selections(m, rng);
  const auto plan = plan_sequential(m, s);
  for (int i = 1; i <= 13; ++i) {
    const auto id = "conv" + std::to_string(i);
    CHECK(plan.find(id)->out_keep == s.at(id));
  }
  CHECK(plan.find("fc1")->in_keep == s.at("conv13"));
  check_invariants(m, plan);
}

TEST_CASE("check_plan catches inconsistencies") {
  Toy t;
  t.conv("A", 3, 4, {}).conv("B", 4, 6, {"A"});
  auto plan = plan_masks(t.m, all_keep_selections(t.m));
  plan.masks["B"].in_keep[1] = false;
  try {
    check_plan(t.m, plan);
    FAIL("expected inconsistent-mask");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InconsistentMask);
  }
  plan = plan_masks(t.m, all_keep_selections(t.m));
  plan.masks["A"].out_keep.pop_back();
  CHECK_THROWS_AS(check_plan(t.m, plan), Error);
}

TEST_CASE("plan text format") {
  Toy t;
  t.conv("B0", 3, 3, {}).conv("A1", 3, 2, {"B0"});
  const auto plan = plan_masks(t.m, {{"B0", keep_of(3, {0, 2})}, {"A1", Keep(2, true)}});
  const auto text = plan_to_text(t.m, plan);
  // Manifest order, compact, trailing newline.
  CHECK(text ==
        R"({"v":1,"masks":{"B0":{"out_keep":[1,0,1],"in_keep":[1,1,1]},"A1":{"out_keep":[1,1],"in_keep":[1,0,1]}},"notes":[]})"
        "\n");
  const auto parsed = parse_plan_text(text);
  CHECK(parsed == plan);
  CHECK(plan_to_text(t.m, parsed) == text);

  for (const char* bad : {"{}", R"({"v":2,"masks":{}})", R"({"v":1})", R"({"v":1,"masks":{"A":{"out_keep":[1]}}})",
                          R"({"v":1,"masks":{"A":{"out_keep":[2],"in_keep":[1]}}})",
                          R"({"v":1,"masks":{"A":{"out_keep":[true],"in_keep":[1]}}})", "not json"}) {
    CAPTURE(bad);
    try {
      parse_plan_text(bad);
      FAIL("expected parse-error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ParseError);
    }
  }
}

TEST_CASE("plan files round trip and missing files are named") {
  const auto m = zoo_manifest("resnet56-cifar");
  std::mt19937_64 rng(13);
  const auto plan = plan_masks(m, random_selections(m, rng));
  const auto path = std::filesystem::temp_directory_path() / "lassoprune_plan_test.json";
  write_plan(m, plan, path);
  CHECK(read_plan(path) == plan);
  std::filesystem::remove(path);
  try {
    read_plan(path);
    FAIL("expected missing-input");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingInput);
    CHECK(std::string(e.what()).find(path.string()) != std::string::npos);
  }
}
