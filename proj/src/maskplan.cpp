#include "lassoprune/maskplan.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "lassoprune/error.hpp"

namespace lassoprune {

const ChannelMask* MaskPlan::find(std::string_view id) const {
  auto it = masks.find(id);
  return it == masks.end() ? nullptr : &it->second;
}

namespace {

using Keep = std::vector<bool>;

std::size_t count_kept(const Keep& k) { return static_cast<std::size_t>(std::count(k.begin(), k.end(), true)); }

Keep keep_union(const Keep& a, const Keep& b) {
  Keep out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] || b[i];
  return out;
}

std::string describe(const Keep& k) {
  return std::to_string(count_kept(k)) + "/" + std::to_string(k.size());
}

// ancestors[i][j]: layer j reaches layer i through predecessor edges.
std::vector<std::vector<bool>> ancestor_table(const ModelManifest& m, const std::vector<std::size_t>& order) {
  const auto n = m.layers.size();
  std::vector<std::vector<bool>> anc(n, std::vector<bool>(n, false));
  for (auto i : order) {
    for (const auto& pid : m.layers[i].predecessors) {
      const auto p = *m.index_of(pid);
      anc[i][p] = true;
      for (std::size_t j = 0; j < n; ++j)
        if (anc[p][j]) anc[i][j] = true;
    }
  }
  return anc;
}

enum class Role { Identity, Projection, Main };

std::vector<Role> classify_add_inputs(const ModelManifest& m, std::size_t junction,
                                      const std::vector<std::vector<bool>>& anc) {
  std::vector<std::size_t> preds;
  for (const auto& pid : m.layers[junction].predecessors) preds.push_back(*m.index_of(pid));
  std::vector<Role> roles(preds.size(), Role::Main);
  for (std::size_t a = 0; a < preds.size(); ++a) {
    const auto p = preds[a];
    bool identity = false, projection = false;
    for (std::size_t b = 0; b < preds.size(); ++b) {
      if (a == b) continue;
      const auto q = preds[b];
      if (anc[q][p]) identity = true;
      const auto& lp = m.layers[p];
      if (lp.is_weighted() && lp.predecessors.size() == 1) {
        const auto src = *m.index_of(lp.predecessors[0]);
        if (src == q || anc[q][src]) projection = true;
      }
    }
    roles[a] = identity ? Role::Identity : projection ? Role::Projection : Role::Main;
  }
  return roles;
}

struct Planner {
  const ModelManifest& m;
  std::vector<std::size_t> order;
  std::vector<std::vector<bool>> anc;
  std::vector<Keep> base, out;
  std::vector<std::optional<Keep>> forced;
  std::vector<std::string> forced_by;
  bool changed = false;

  // Makes layer i produce `keep`, reaching through add-junctions.
  void impose(std::size_t i, const Keep& keep, const std::string& junction) {
    const auto& l = m.layers[i];
    if (out[i] == keep) return;
    if (l.is_weighted()) {
      forced[i] = keep;
      forced_by[i] = junction;
      out[i] = keep;
      changed = true;
    } else if (l.kind == LayerKind::AddJunction) {
      out[i] = keep;
      for (const auto& pid : l.predecessors) impose(*m.index_of(pid), keep, junction);
    } else {
      throw Error(ErrorCode::IrreconcilableShortcut,
                  "junction '" + junction + "' would need to reshape concat '" + l.id + "'");
    }
  }

  void pass() {
    for (auto i : order) {
      const auto& l = m.layers[i];
      if (l.is_weighted()) {
        out[i] = forced[i] ? *forced[i] : base[i];
        continue;
      }
      std::vector<std::size_t> preds;
      for (const auto& pid : l.predecessors) preds.push_back(*m.index_of(pid));
      if (l.kind == LayerKind::ConcatJunction) {
        Keep k;
        for (auto p : preds) k.insert(k.end(), out[p].begin(), out[p].end());
        out[i] = std::move(k);
        continue;
      }
      const auto roles = classify_add_inputs(m, i, anc);
      std::optional<Keep> identity, main;
      for (std::size_t a = 0; a < preds.size(); ++a) {
        if (roles[a] == Role::Projection) continue;
        auto& slot = roles[a] == Role::Identity ? identity : main;
        slot = slot ? keep_union(*slot, out[preds[a]]) : out[preds[a]];
      }
      Keep target;
      if (identity)
        target = *identity;
      else if (main)
        target = *main;
      else {
        target = out[preds[0]];
        for (auto p : preds) target = keep_union(target, out[p]);
      }
      for (auto p : preds) impose(p, target, l.id);
      out[i] = target;
    }
  }
};

}  // namespace

MaskPlan plan_masks(const ModelManifest& manifest, const Selections& selections) {
  Planner pl{manifest, validate_manifest(manifest), {}, {}, {}, {}, {}};
  const auto n = manifest.layers.size();
  pl.anc = ancestor_table(manifest, pl.order);
  pl.base.resize(n);
  pl.out.resize(n);
  pl.forced.resize(n);
  pl.forced_by.resize(n);

  for (const auto& [id, keep] : selections)
    if (!manifest.index_of(id)) throw Error(ErrorCode::InvalidConfig, "selection names unknown layer '" + id + "'");

  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = manifest.layers[i];
    if (!l.is_weighted()) continue;
    const auto width = static_cast<std::size_t>(l.out_channels);
    if (!l.prunable) {
      pl.base[i] = Keep(width, true);
      continue;
    }
    auto it = selections.find(l.id);
    if (it == selections.end())
      throw Error(ErrorCode::MissingSelection, "no selection for prunable layer '" + l.id + "'");
    if (it->second.size() != width)
      throw Error(ErrorCode::InconsistentMask, "selection for '" + l.id + "' has " +
                                                   std::to_string(it->second.size()) + " flags, layer has " +
                                                   std::to_string(width) + " outputs");
    if (count_kept(it->second) == 0) throw Error(ErrorCode::EmptyMask, "layer '" + l.id + "' keeps no channels");
    pl.base[i] = it->second;
  }

  // Each pass either stabilizes or pins at least one more conv output.
  bool stable = false;
  for (std::size_t round = 0; round <= n + 1; ++round) {
    pl.changed = false;
    pl.pass();
    if (!pl.changed) {
      stable = true;
      break;
    }
  }
  if (!stable) throw Error(ErrorCode::IrreconcilableShortcut, "junction constraints did not settle");

  MaskPlan plan;
  for (auto i : pl.order) {
    const auto& l = manifest.layers[i];
    ChannelMask mask;
    mask.layer_id = l.id;
    mask.out_keep = pl.out[i];
    if (count_kept(mask.out_keep) == 0) throw Error(ErrorCode::EmptyMask, "layer '" + l.id + "' keeps no channels");
    if (l.kind == LayerKind::ConcatJunction || l.kind == LayerKind::AddJunction)
      mask.in_keep = mask.out_keep;
    else if (l.predecessors.empty())
      mask.in_keep = Keep(static_cast<std::size_t>(l.in_channels), true);
    else
      mask.in_keep = pl.out[*manifest.index_of(l.predecessors[0])];
    if (l.prunable && pl.forced[i] && *pl.forced[i] != pl.base[i])
      plan.notes.push_back("layer '" + l.id + "': out_keep " + describe(pl.base[i]) + " -> " +
                           describe(*pl.forced[i]) + " to match junction '" + pl.forced_by[i] + "'");
    plan.masks.emplace(l.id, std::move(mask));
  }
  check_plan(manifest, plan);
  return plan;
}

namespace {

void require_junction_kinds(const ModelManifest& m, bool allow_add, bool allow_concat, const char* what) {
  for (const auto& l : m.layers) {
    if ((l.kind == LayerKind::AddJunction && !allow_add) || (l.kind == LayerKind::ConcatJunction && !allow_concat))
      throw Error(ErrorCode::InvalidConfig, std::string(what) + " planning does not accept junction '" + l.id + "'");
  }
}

}  // namespace

MaskPlan plan_sequential(const ModelManifest& manifest, const Selections& selections) {
  require_junction_kinds(manifest, false, false, "sequential");
  return plan_masks(manifest, selections);
}

MaskPlan plan_residual(const ModelManifest& manifest, const Selections& selections) {
  require_junction_kinds(manifest, true, false, "residual");
  return plan_masks(manifest, selections);
}

MaskPlan plan_inception(const ModelManifest& manifest, const Selections& selections) {
  require_junction_kinds(manifest, false, true, "inception");
  return plan_masks(manifest, selections);
}

Selections selections_from_plan(const ModelManifest& manifest, const MaskPlan& plan) {
  Selections s;
  for (const auto& l : manifest.layers) {
    if (!l.is_weighted() || !l.prunable) continue;
    const auto* mask = plan.find(l.id);
    s[l.id] = mask ? mask->out_keep : Keep(static_cast<std::size_t>(l.out_channels), true);
  }
  return s;
}

Selections all_keep_selections(const ModelManifest& manifest) {
  Selections s;
  for (const auto& l : manifest.layers)
    if (l.is_weighted() && l.prunable) s[l.id] = Keep(static_cast<std::size_t>(l.out_channels), true);
  return s;
}

void check_plan(const ModelManifest& manifest, const MaskPlan& plan) {
  for (const auto& [id, mask] : plan.masks)
    if (!manifest.index_of(id)) throw Error(ErrorCode::InconsistentMask, "mask for unknown layer '" + id + "'");
  auto effective_out = [&](const LayerSpec& l) {
    const auto* mask = plan.find(l.id);
    return mask ? mask->out_keep : Keep(static_cast<std::size_t>(l.out_channels), true);
  };
  for (const auto& l : manifest.layers) {
    const auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::InconsistentMask, "layer '" + l.id + "': " + why);
    };
    const auto* mask = plan.find(l.id);
    const Keep out = effective_out(l);
    const Keep in = mask ? mask->in_keep : Keep(static_cast<std::size_t>(l.in_channels), true);
    if (out.size() != static_cast<std::size_t>(l.out_channels)) fail("out_keep length differs from out_channels");
    if (in.size() != static_cast<std::size_t>(l.in_channels)) fail("in_keep length differs from in_channels");
    if (count_kept(out) == 0) fail("no output channel kept");
    if (l.is_weighted()) {
      const Keep expected = l.predecessors.empty() ? Keep(in.size(), true)
                                                   : effective_out(manifest.layer(l.predecessors[0]));
      if (in != expected) fail("in_keep differs from the predecessor's out_keep");
    } else if (l.kind == LayerKind::AddJunction) {
      for (const auto& pid : l.predecessors)
        if (effective_out(manifest.layer(pid)) != out) fail("add inputs do not share one keep set");
      if (in != out) fail("in_keep differs from out_keep");
    } else {
      Keep cat;
      for (const auto& pid : l.predecessors) {
        const Keep p = effective_out(manifest.layer(pid));
        cat.insert(cat.end(), p.begin(), p.end());
      }
      if (in != cat) fail("in_keep is not the concatenation of its inputs");
      if (out != in) fail("out_keep differs from in_keep");
    }
  }
}

namespace {

nlohmann::ordered_json flags_to_json(const Keep& k) {
  auto arr = nlohmann::ordered_json::array();
  for (bool b : k) arr.push_back(b ? 1 : 0);
  return arr;
}

Keep flags_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, where + " must be an array");
  Keep k;
  k.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1))
      throw Error(ErrorCode::ParseError, where + " entries must be 0 or 1");
    k.push_back(v.get<int>() == 1);
  }
  return k;
}

}  // namespace

std::string plan_to_text(const ModelManifest& manifest, const MaskPlan& plan) {
  nlohmann::ordered_json doc;
  doc["v"] = 1;
  doc["masks"] = nlohmann::ordered_json::object();
  for (const auto& l : manifest.layers) {
    const auto* mask = plan.find(l.id);
    if (!mask) continue;
    doc["masks"][l.id] = {{"out_keep", flags_to_json(mask->out_keep)}, {"in_keep", flags_to_json(mask->in_keep)}};
  }
  for (const auto& [id, mask] : plan.masks)
    if (!manifest.index_of(id)) throw Error(ErrorCode::InconsistentMask, "mask for unknown layer '" + id + "'");
  doc["notes"] = plan.notes;
  return doc.dump() + "\n";
}

MaskPlan parse_plan_text(std::string_view text) {
  MaskPlan plan;
  try {
    const auto doc = nlohmann::json::parse(text);
    if (!doc.is_object() || !doc.contains("v") || doc.at("v") != 1)
      throw Error(ErrorCode::ParseError, "mask plan must be an object with \"v\": 1");
    if (!doc.contains("masks") || !doc.at("masks").is_object())
      throw Error(ErrorCode::ParseError, "mask plan needs a \"masks\" object");
    for (const auto& [id, jm] : doc.at("masks").items()) {
      if (!jm.is_object() || !jm.contains("out_keep") || !jm.contains("in_keep"))
        throw Error(ErrorCode::ParseError, "mask '" + id + "' needs out_keep and in_keep");
      ChannelMask mask;
      mask.layer_id = id;
      mask.out_keep = flags_from_json(jm.at("out_keep"), "mask '" + id + "' out_keep");
      mask.in_keep = flags_from_json(jm.at("in_keep"), "mask '" + id + "' in_keep");
      plan.masks.emplace(id, std::move(mask));
    }
    if (doc.contains("notes")) plan.notes = doc.at("notes").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("mask plan: ") + e.what());
  }
  return plan;
}

MaskPlan read_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_plan_text(buffer.str());
}

void write_plan(const ModelManifest& manifest, const MaskPlan& plan, const std::filesystem::path& path) {
  const auto text = plan_to_text(manifest, plan);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out << text;
}

}  // namespace lassoprune
