#include "lassoprune/gram.hpp"

#include <algorithm>
#include <cmath>

#include "lassoprune/error.hpp"

namespace lassoprune {

void KernelConfig::validate() const {
  if (!std::isfinite(c) || !std::isfinite(a))
    throw Error(ErrorCode::InvalidConfig, "kernel parameters must be finite");
  if (sigma && (!std::isfinite(*sigma) || *sigma <= 0.0))
    throw Error(ErrorCode::InvalidConfig, "kernel sigma must be > 0");
}

std::optional<KernelKind> kernel_kind_from_string(std::string_view text) {
  if (text == "linear") return KernelKind::Linear;
  if (text == "gaussian") return KernelKind::Gaussian;
  if (text == "sigmoid") return KernelKind::Sigmoid;
  if (text == "laplacian") return KernelKind::Laplacian;
  return std::nullopt;
}

FeatureBatch::FeatureBatch(std::size_t bs, std::size_t h, std::size_t w, std::size_t channels,
                           std::vector<double> values)
    : bs_(bs), h_(h), w_(w), channels_(channels), values_(std::move(values)) {
  if (bs < 2) throw Error(ErrorCode::InvalidConfig, "batch size must be >= 2 for centering");
  if (h == 0 || w == 0 || channels == 0) throw Error(ErrorCode::InvalidConfig, "empty feature batch");
  if (values_.size() != bs * h * w * channels)
    throw Error(ErrorCode::DimensionMismatch, "feature batch payload size mismatch");
  if (!std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); }))
    throw Error(ErrorCode::NonFiniteInput, "feature batch contains non-finite values");
}

FeatureBatch FeatureBatch::from_tensor(const TensorFile& t) {
  t.validate();
  if (t.dims.size() != 4)
    throw Error(ErrorCode::DimensionMismatch, "feature tensor must be (batch, h, w, channel)");
  const auto bs = t.dims[0], h = t.dims[1], w = t.dims[2], ch = t.dims[3];
  const auto hw = h * w;
  std::vector<double> values(t.size());
  for (std::size_t s = 0; s < bs; ++s)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t c = 0; c < ch; ++c)
        values[(c * bs + s) * hw + p] = t.value((s * hw + p) * ch + c);
  return FeatureBatch(bs, h, w, ch, std::move(values));
}

namespace {

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double squared_distance(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

double resolve_sigma(const KernelConfig& cfg) {
  if (!cfg.sigma) throw Error(ErrorCode::InvalidConfig, "sigma required for this kernel");
  return *cfg.sigma;
}

}  // namespace

double kernel_eval(std::span<const double> x, std::span<const double> y, const KernelConfig& cfg) {
  if (x.size() != y.size()) throw Error(ErrorCode::DimensionMismatch, "kernel inputs differ in length");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw Error(ErrorCode::NonFiniteInput, "kernel input is not finite");
  cfg.validate();
  switch (cfg.kind) {
    case KernelKind::Linear: return dot(x, y) + cfg.c;
    case KernelKind::Sigmoid: return std::tanh(cfg.a * dot(x, y) + cfg.c);
    case KernelKind::Gaussian: {
      const double s = resolve_sigma(cfg);
      return std::exp(-squared_distance(x, y) / (2.0 * s * s));
    }
    case KernelKind::Laplacian:
      return std::exp(-std::sqrt(squared_distance(x, y)) / resolve_sigma(cfg));
  }
  return 0.0;
}

double median_pairwise_distance(const FeatureBatch& batch, std::size_t channel) {
  if (channel >= batch.channels()) throw Error(ErrorCode::IndexOutOfRange, "channel index");
  std::vector<double> d;
  d.reserve(batch.bs() * (batch.bs() - 1) / 2);
  for (std::size_t a = 0; a < batch.bs(); ++a)
    for (std::size_t b = a + 1; b < batch.bs(); ++b)
      d.push_back(std::sqrt(squared_distance(batch.map(a, channel), batch.map(b, channel))));
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double median = *mid;
  if (d.size() % 2 == 0) median = 0.5 * (median + *std::max_element(d.begin(), mid));
  return median;
}

Eigen::MatrixXd channel_gram(const FeatureBatch& batch, std::size_t channel, const KernelConfig& cfg) {
  if (channel >= batch.channels())
    throw Error(ErrorCode::IndexOutOfRange,
                "channel " + std::to_string(channel) + " of " + std::to_string(batch.channels()));
  KernelConfig resolved = cfg;
  const bool needs_sigma = cfg.kind == KernelKind::Gaussian || cfg.kind == KernelKind::Laplacian;
  if (needs_sigma && !resolved.sigma) {
    const double median = median_pairwise_distance(batch, channel);
    resolved.sigma = median > 0.0 ? median : 1.0;
  }
  resolved.validate();

  const auto bs = static_cast<Eigen::Index>(batch.bs());
  Eigen::MatrixXd k(bs, bs);
  for (Eigen::Index a = 0; a < bs; ++a) {
    for (Eigen::Index b = a; b < bs; ++b) {
      const auto ma = batch.map(static_cast<std::size_t>(a), channel);
      const auto mb = batch.map(static_cast<std::size_t>(b), channel);
      double v = 0.0;
      switch (resolved.kind) {
        case KernelKind::Linear: v = dot(ma, mb) + resolved.c; break;
        case KernelKind::Sigmoid: v = std::tanh(resolved.a * dot(ma, mb) + resolved.c); break;
        case KernelKind::Gaussian:
          v = std::exp(-squared_distance(ma, mb) / (2.0 * *resolved.sigma * *resolved.sigma));
          break;
        case KernelKind::Laplacian:
          v = std::exp(-std::sqrt(squared_distance(ma, mb)) / *resolved.sigma);
          break;
      }
      k(a, b) = v;
      k(b, a) = v;
    }
  }
  return k;
}

Eigen::MatrixXd center_gram(const Eigen::MatrixXd& k) {
  if (k.rows() != k.cols()) throw Error(ErrorCode::NonSquareInput, "Gram matrix must be square");
  const Eigen::VectorXd row_mean = k.rowwise().mean();
  const Eigen::RowVectorXd col_mean = k.colwise().mean();
  const double grand = k.mean();
  Eigen::MatrixXd out = k;
  out.colwise() -= row_mean;
  out.rowwise() -= col_mean;
  out.array() += grand;
  return out;
}

namespace {

Eigen::MatrixXd design_block(const FeatureBatch& batch, const KernelConfig& cfg) {
  const auto bs = static_cast<Eigen::Index>(batch.bs());
  Eigen::MatrixXd cols(bs * bs, static_cast<Eigen::Index>(batch.channels()));
  for (std::size_t c = 0; c < batch.channels(); ++c) {
    const Eigen::MatrixXd g = center_gram(channel_gram(batch, c, cfg));
    cols.col(static_cast<Eigen::Index>(c)) = g.reshaped();
  }
  return cols;
}

}  // namespace

GramDesign build_design(const FeatureBatch& x_batch, const FeatureBatch& y_batch,
                        const KernelConfig& cfg) {
  if (x_batch.bs() != y_batch.bs())
    throw Error(ErrorCode::BatchSizeMismatch, std::to_string(x_batch.bs()) + " vs " +
                                                  std::to_string(y_batch.bs()));
  cfg.validate();
  GramDesign d;
  d.bs = x_batch.bs();
  d.x = design_block(x_batch, cfg);
  d.y = design_block(y_batch, cfg);
  return d;
}

}  // namespace lassoprune
