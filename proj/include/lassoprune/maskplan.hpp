#pragma once

// Cross-layer reconciliation of per-layer channel selections.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lassoprune/interchange.hpp"

namespace lassoprune {

struct ChannelMask {
  std::string layer_id;
  std::vector<bool> out_keep;
  std::vector<bool> in_keep;

  bool operator==(const ChannelMask& other) const = default;
};

struct MaskPlan {
  // Keyed by layer id; serialized in manifest order.
  std::map<std::string, ChannelMask, std::less<>> masks;
  // One entry per prunable layer whose selection a junction overrode.
  std::vector<std::string> notes;

  const ChannelMask* find(std::string_view id) const;
  bool operator==(const MaskPlan& other) const = default;
};

/// Per-layer output selections from the lasso stage, keyed by layer id.
using Selections = std::map<std::string, std::vector<bool>, std::less<>>;

/// General planner: sequential chains, add-junctions and concat-junctions in
/// one topological pass. Missing selections for prunable layers throw
/// MissingSelection; any layer left with no kept output throws EmptyMask.
///
/// Add-junction rule. A predecessor of the junction that is an ancestor of
/// another predecessor is an identity shortcut; a conv whose own input is an
/// ancestor of another predecessor is a projection shortcut; the rest are main
/// paths. With an identity shortcut, every main path adopts the identity keep
/// set. Otherwise the union of the main-path selections is imposed on every
/// predecessor, projection convs included.
MaskPlan plan_masks(const ModelManifest& manifest, const Selections& selections);

/// Thin wrappers that check the manifest shape they expect before planning.
MaskPlan plan_sequential(const ModelManifest& manifest, const Selections& selections);
MaskPlan plan_residual(const ModelManifest& manifest, const Selections& selections);
MaskPlan plan_inception(const ModelManifest& manifest, const Selections& selections);

/// Selections that reproduce `plan` when planned again.
Selections selections_from_plan(const ModelManifest& manifest, const MaskPlan& plan);

/// Every layer selects all of its outputs.
Selections all_keep_selections(const ModelManifest& manifest);

/// Throws InconsistentMask when a mask has the wrong length, a weighted layer's
/// in_keep differs from its predecessor's out_keep, or a junction invariant
/// fails. Layers without a mask count as fully kept.
void check_plan(const ModelManifest& manifest, const MaskPlan& plan);

std::string plan_to_text(const ModelManifest& manifest, const MaskPlan& plan);
MaskPlan parse_plan_text(std::string_view text);
MaskPlan read_plan(const std::filesystem::path& path);
void write_plan(const ModelManifest& manifest, const MaskPlan& plan, const std::filesystem::path& path);

}  // namespace lassoprune
