#pragma once

// File formats shared with the model adapter: FMAP feature-map tensors and
// JSON model manifests.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace lassoprune {

enum class Dtype : std::uint8_t { F32 = 0, F64 = 1 };

/// A dense row-major tensor as stored in an FMAP file.
///
/// Feature maps use axis order (batch, height, width, channel).
struct TensorFile {
  std::vector<std::uint64_t> dims;
  std::variant<std::vector<float>, std::vector<double>> data;
  std::string layer_id;

  Dtype dtype() const { return data.index() == 0 ? Dtype::F32 : Dtype::F64; }
  std::size_t size() const;
  double value(std::size_t i) const;

  /// Throws InvalidTensor unless dims are non-empty, positive, and match the payload.
  void validate() const;

  bool operator==(const TensorFile& other) const;
};

inline constexpr std::string_view kFmapMagic = "FMAP1\n";
inline constexpr std::uint64_t kMaxTensorElements = std::uint64_t{1} << 48;

TensorFile read_tensor(const std::filesystem::path& path);
void write_tensor(const TensorFile& tensor, const std::filesystem::path& path);

/// In-memory variants of the FMAP codec; the file functions delegate to these.
TensorFile decode_tensor(std::string_view bytes);
std::string encode_tensor(const TensorFile& tensor);

enum class LayerKind { Conv, Linear, AddJunction, ConcatJunction };

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> layer_kind_from_string(std::string_view text);

struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::Conv;
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t stride_h = 1;
  std::int64_t stride_w = 1;
  // Zero for junctions that omit it; see output_spatial().
  std::int64_t out_spatial_h = 0;
  std::int64_t out_spatial_w = 0;
  bool has_bias = false;
  // Optional epilogue flags: a normalization layer (scale + shift per channel)
  // and an elementwise activation directly follow this layer.
  bool norm = false;
  bool activation = false;
  std::vector<std::string> predecessors;
  bool prunable = false;

  bool is_junction() const {
    return kind == LayerKind::AddJunction || kind == LayerKind::ConcatJunction;
  }
  bool is_weighted() const { return kind == LayerKind::Conv || kind == LayerKind::Linear; }
};

struct InputShape {
  std::int64_t channels = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;
};

struct ModelManifest {
  std::string model_name;
  InputShape input_shape;
  std::vector<LayerSpec> layers;

  std::optional<std::size_t> index_of(std::string_view id) const;
  const LayerSpec& layer(std::string_view id) const;
};

/// Validates every manifest invariant and returns a topological order of
/// layer indices (stable with respect to declaration order).
std::vector<std::size_t> validate_manifest(const ModelManifest& manifest);

ModelManifest parse_manifest(const std::filesystem::path& path);
ModelManifest parse_manifest_text(std::string_view text);
std::string manifest_to_text(const ModelManifest& manifest);
void write_manifest(const ModelManifest& manifest, const std::filesystem::path& path);

struct Spatial {
  std::int64_t h = 1;
  std::int64_t w = 1;
};

/// Spatial extent of a layer's output; junctions inherit it from their
/// first predecessor when not declared.
Spatial output_spatial(const ModelManifest& manifest, std::size_t layer_index);

/// Spatial extent of the tensor feeding a layer (model input for roots).
Spatial input_spatial(const ModelManifest& manifest, std::size_t layer_index);

}  // namespace lassoprune
