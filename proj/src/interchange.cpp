#include "lassoprune/interchange.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <queue>
#include <sstream>

#include "json.hpp"
#include "lassoprune/error.hpp"

namespace lassoprune {

static_assert(std::endian::native == std::endian::little,
              "FMAP codec assumes a little-endian host");

using ordered_json = nlohmann::ordered_json;

std::size_t TensorFile::size() const {
  return std::visit([](const auto& v) { return v.size(); }, data);
}

double TensorFile::value(std::size_t i) const {
  return std::visit([i](const auto& v) { return static_cast<double>(v[i]); }, data);
}

void TensorFile::validate() const {
  if (dims.empty()) throw Error(ErrorCode::InvalidTensor, "tensor has no dimensions");
  std::uint64_t count = 1;
  for (auto d : dims) {
    if (d == 0) throw Error(ErrorCode::InvalidTensor, "tensor extent must be >= 1");
    if (count > kMaxTensorElements / d)
      throw Error(ErrorCode::DimsOverflow, "element count exceeds 2^48");
    count *= d;
  }
  if (count != size())
    throw Error(ErrorCode::InvalidTensor, "dims product " + std::to_string(count) +
                                              " != payload length " + std::to_string(size()));
  if (layer_id.size() > 0xFFFF) throw Error(ErrorCode::InvalidTensor, "label longer than 65535 bytes");
}

bool TensorFile::operator==(const TensorFile& other) const {
  if (dims != other.dims || layer_id != other.layer_id || data.index() != other.data.index())
    return false;
  // Bitwise comparison so NaN payloads round-trip as equal.
  return std::visit(
      [&](const auto& lhs) {
        using Vec = std::decay_t<decltype(lhs)>;
        const auto& rhs = std::get<Vec>(other.data);
        return lhs.size() == rhs.size() &&
               (lhs.empty() ||
                std::memcmp(lhs.data(), rhs.data(), lhs.size() * sizeof(lhs[0])) == 0);
      },
      data);
}

namespace {

template <typename T>
void put(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    if (remaining() < sizeof(T))
      throw Error(ErrorCode::TruncatedData, std::string("file ends inside ") + what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n, const char* what) {
    if (remaining() < n) throw Error(ErrorCode::TruncatedData, std::string("file ends inside ") + what);
    auto view = bytes_.substr(pos_, n);
    pos_ += n;
    return view;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_tensor(const TensorFile& tensor) {
  tensor.validate();
  std::string out(kFmapMagic);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.dims.size()));
  for (auto d : tensor.dims) put<std::uint64_t>(out, d);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.dtype()));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(tensor.layer_id.size()));
  out += tensor.layer_id;
  std::visit(
      [&](const auto& v) {
        out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(v[0]));
      },
      tensor.data);
  return out;
}

TensorFile decode_tensor(std::string_view bytes) {
  if (bytes.size() < kFmapMagic.size() || bytes.substr(0, kFmapMagic.size()) != kFmapMagic)
    throw Error(ErrorCode::BadMagic, "missing FMAP1 header");
  Reader in(bytes.substr(kFmapMagic.size()));

  TensorFile t;
  const auto ndim = in.get<std::uint32_t>("ndim");
  if (ndim == 0) throw Error(ErrorCode::InvalidTensor, "ndim must be >= 1");
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const auto d = in.get<std::uint64_t>("dims");
    if (d == 0) throw Error(ErrorCode::InvalidTensor, "tensor extent must be >= 1");
    if (count > kMaxTensorElements / d) throw Error(ErrorCode::DimsOverflow, "element count exceeds 2^48");
    count *= d;
    t.dims.push_back(d);
  }
  const auto code = in.get<std::uint8_t>("dtype");
  if (code > 1) throw Error(ErrorCode::UnknownDtype, "dtype code " + std::to_string(code));
  const auto label_len = in.get<std::uint16_t>("label length");
  t.layer_id = std::string(in.take(label_len, "label"));

  const std::size_t elem = code == 0 ? sizeof(float) : sizeof(double);
  if (in.remaining() != count * elem)
    throw Error(ErrorCode::TruncatedData, "payload holds " + std::to_string(in.remaining()) +
                                              " bytes, expected " + std::to_string(count * elem));
  auto payload = in.take(count * elem, "payload");
  if (code == 0) {
    std::vector<float> v(count);
    std::memcpy(v.data(), payload.data(), payload.size());
    t.data = std::move(v);
  } else {
    std::vector<double> v(count);
    std::memcpy(v.data(), payload.data(), payload.size());
    t.data = std::move(v);
  }
  return t;
}

TensorFile read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_tensor(buffer.str());
}

void write_tensor(const TensorFile& tensor, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Manifest

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Linear: return "linear";
    case LayerKind::AddJunction: return "add-junction";
    case LayerKind::ConcatJunction: return "concat-junction";
  }
  return "conv";
}

std::optional<LayerKind> layer_kind_from_string(std::string_view text) {
  for (auto k : {LayerKind::Conv, LayerKind::Linear, LayerKind::AddJunction, LayerKind::ConcatJunction})
    if (to_string(k) == text) return k;
  return std::nullopt;
}

std::optional<std::size_t> ModelManifest::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].id == id) return i;
  return std::nullopt;
}

const LayerSpec& ModelManifest::layer(std::string_view id) const {
  auto idx = index_of(id);
  if (!idx) throw Error(ErrorCode::DanglingPredecessor, "unknown layer '" + std::string(id) + "'");
  return layers[*idx];
}

namespace {

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
  while (parent[x] != x) x = parent[x] = parent[parent[x]];
  return x;
}

}  // namespace

std::vector<std::size_t> validate_manifest(const ModelManifest& m) {
  const std::size_t n = m.layers.size();
  if (n == 0) throw Error(ErrorCode::ParseError, "manifest has no layers");
  if (m.input_shape.channels < 1 || m.input_shape.h < 1 || m.input_shape.w < 1)
    throw Error(ErrorCode::ParseError, "input_shape extents must be >= 1");

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) {
    if (m.layers[i].id.empty()) throw Error(ErrorCode::ParseError, "layer with empty id");
    if (!index.emplace(m.layers[i].id, i).second)
      throw Error(ErrorCode::ParseError, "duplicate layer id '" + m.layers[i].id + "'");
  }

  std::vector<std::vector<std::size_t>> preds(n), succs(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& p : m.layers[i].predecessors) {
      auto it = index.find(p);
      if (it == index.end())
        throw Error(ErrorCode::DanglingPredecessor,
                    "layer '" + m.layers[i].id + "' references unknown '" + p + "'");
      preds[i].push_back(it->second);
      succs[it->second].push_back(i);
    }
  }

  // Kahn's algorithm; the min-heap keeps the order stable w.r.t. declaration.
  std::vector<std::size_t> indegree(n);
  for (std::size_t i = 0; i < n; ++i) indegree[i] = preds[i].size();
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(i);
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    auto i = ready.top();
    ready.pop();
    order.push_back(i);
    for (auto s : succs[i])
      if (--indegree[s] == 0) ready.push(s);
  }
  if (order.size() != n) throw Error(ErrorCode::CycleDetected, "layer graph contains a cycle");

  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = m.layers[i];
    const auto where = "layer '" + l.id + "'";
    if (l.in_channels < 1 || l.out_channels < 1)
      throw Error(ErrorCode::ParseError, where + ": channel counts must be >= 1");
    if (l.is_weighted()) {
      if (l.kernel_h < 1 || l.kernel_w < 1 || l.stride_h < 1 || l.stride_w < 1 ||
          l.out_spatial_h < 1 || l.out_spatial_w < 1)
        throw Error(ErrorCode::ParseError, where + ": kernel, stride and out_spatial must be >= 1");
      if (preds[i].size() > 1)
        throw Error(ErrorCode::ParseError, where + ": conv/linear layers take a single predecessor");
      const auto expected =
          preds[i].empty() ? m.input_shape.channels : m.layers[preds[i][0]].out_channels;
      if (l.in_channels != expected)
        throw Error(ErrorCode::DimensionMismatch, where + ": in_channels " +
                                                      std::to_string(l.in_channels) + " but input provides " +
                                                      std::to_string(expected));
    } else {
      if (preds[i].empty()) throw Error(ErrorCode::ParseError, where + ": junction without predecessors");
      if (l.in_channels != l.out_channels)
        throw Error(ErrorCode::ChannelMismatchAtJunction, where + ": junction in/out channels differ");
      if (l.kind == LayerKind::AddJunction) {
        for (auto p : preds[i])
          if (m.layers[p].out_channels != l.out_channels)
            throw Error(ErrorCode::ChannelMismatchAtJunction,
                        where + ": predecessor '" + m.layers[p].id + "' has " +
                            std::to_string(m.layers[p].out_channels) + " channels, expected " +
                            std::to_string(l.out_channels));
      } else {
        std::int64_t sum = 0;
        for (auto p : preds[i]) sum += m.layers[p].out_channels;
        if (sum != l.out_channels)
          throw Error(ErrorCode::ChannelMismatchAtJunction,
                      where + ": concat of " + std::to_string(sum) + " channels declared as " +
                          std::to_string(l.out_channels));
      }
    }
  }

  // Exactly one input-adjacent layer per weakly connected component.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  for (std::size_t i = 0; i < n; ++i)
    for (auto p : preds[i]) parent[find_root(parent, i)] = find_root(parent, p);
  std::unordered_map<std::size_t, int> roots_per_component;
  for (std::size_t i = 0; i < n; ++i) {
    auto& count = roots_per_component[find_root(parent, i)];
    if (preds[i].empty()) ++count;
  }
  for (const auto& [component, count] : roots_per_component)
    if (count != 1)
      throw Error(ErrorCode::ParseError,
                  "component containing '" + m.layers[component].id + "' has " + std::to_string(count) +
                      " input layers, expected exactly one");

  return order;
}

namespace {

template <typename T>
T required(const ordered_json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw Error(ErrorCode::ParseError, where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, where + ": field '" + key + "': " + e.what());
  }
}

std::pair<std::int64_t, std::int64_t> pair_field(const ordered_json& j, const char* key,
                                                 const std::string& where) {
  auto v = required<std::vector<std::int64_t>>(j, key, where);
  if (v.size() != 2) throw Error(ErrorCode::ParseError, where + ": '" + key + "' must have 2 entries");
  return {v[0], v[1]};
}

}  // namespace

ModelManifest parse_manifest_text(std::string_view text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::ParseError, "manifest must be a JSON object");
  if (required<int>(doc, "v", "manifest") != 1)
    throw Error(ErrorCode::ParseError, "unsupported manifest version");

  ModelManifest m;
  m.model_name = required<std::string>(doc, "model_name", "manifest");
  auto shape = required<std::vector<std::int64_t>>(doc, "input_shape", "manifest");
  if (shape.size() != 3) throw Error(ErrorCode::ParseError, "input_shape must be [c,h,w]");
  m.input_shape = {shape[0], shape[1], shape[2]};

  if (!doc.contains("layers") || !doc["layers"].is_array())
    throw Error(ErrorCode::ParseError, "manifest: 'layers' must be an array");
  for (const auto& jl : doc["layers"]) {
    LayerSpec l;
    l.id = required<std::string>(jl, "id", "layer");
    const auto where = "layer '" + l.id + "'";
    auto kind = layer_kind_from_string(required<std::string>(jl, "kind", where));
    if (!kind) throw Error(ErrorCode::ParseError, where + ": unknown kind");
    l.kind = *kind;
    l.in_channels = required<std::int64_t>(jl, "in_channels", where);
    l.out_channels = required<std::int64_t>(jl, "out_channels", where);
    if (jl.contains("kernel")) std::tie(l.kernel_h, l.kernel_w) = pair_field(jl, "kernel", where);
    if (jl.contains("stride")) std::tie(l.stride_h, l.stride_w) = pair_field(jl, "stride", where);
    if (jl.contains("out_spatial"))
      std::tie(l.out_spatial_h, l.out_spatial_w) = pair_field(jl, "out_spatial", where);
    else if (l.kind == LayerKind::Linear)
      l.out_spatial_h = l.out_spatial_w = 1;
    else if (l.kind == LayerKind::Conv)
      throw Error(ErrorCode::ParseError, where + ": conv requires out_spatial");
    if (l.kind == LayerKind::Conv && (!jl.contains("kernel") || !jl.contains("stride")))
      throw Error(ErrorCode::ParseError, where + ": conv requires kernel and stride");
    l.has_bias = jl.value("has_bias", false);
    l.norm = jl.value("norm", false);
    l.activation = jl.value("activation", false);
    l.predecessors = jl.value("predecessors", std::vector<std::string>{});
    l.prunable = jl.value("prunable", l.kind == LayerKind::Conv);
    m.layers.push_back(std::move(l));
  }
  validate_manifest(m);
  return m;
}

ModelManifest parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_manifest_text(buffer.str());
}

std::string manifest_to_text(const ModelManifest& m) {
  ordered_json doc;
  doc["v"] = 1;
  doc["model_name"] = m.model_name;
  doc["input_shape"] = {m.input_shape.channels, m.input_shape.h, m.input_shape.w};
  doc["layers"] = ordered_json::array();
  for (const auto& l : m.layers) {
    ordered_json jl;
    jl["id"] = l.id;
    jl["kind"] = std::string(to_string(l.kind));
    jl["in_channels"] = l.in_channels;
    jl["out_channels"] = l.out_channels;
    if (l.is_weighted()) {
      jl["kernel"] = {l.kernel_h, l.kernel_w};
      jl["stride"] = {l.stride_h, l.stride_w};
    }
    if (l.out_spatial_h > 0) jl["out_spatial"] = {l.out_spatial_h, l.out_spatial_w};
    jl["has_bias"] = l.has_bias;
    if (l.norm) jl["norm"] = true;
    if (l.activation) jl["activation"] = true;
    jl["predecessors"] = l.predecessors;
    jl["prunable"] = l.prunable;
    doc["layers"].push_back(std::move(jl));
  }
  return doc.dump(1) + "\n";
}

void write_manifest(const ModelManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out << manifest_to_text(manifest);
}

Spatial output_spatial(const ModelManifest& m, std::size_t i) {
  const auto& l = m.layers.at(i);
  if (l.out_spatial_h > 0 && l.out_spatial_w > 0) return {l.out_spatial_h, l.out_spatial_w};
  if (l.predecessors.empty()) return {m.input_shape.h, m.input_shape.w};
  auto p = m.index_of(l.predecessors.front());
  if (!p) throw Error(ErrorCode::DanglingPredecessor, l.predecessors.front());
  return output_spatial(m, *p);
}

Spatial input_spatial(const ModelManifest& m, std::size_t i) {
  const auto& l = m.layers.at(i);
  if (l.predecessors.empty()) return {m.input_shape.h, m.input_shape.w};
  auto p = m.index_of(l.predecessors.front());
  if (!p) throw Error(ErrorCode::DanglingPredecessor, l.predecessors.front());
  return output_spatial(m, *p);
}

}  // namespace lassoprune
