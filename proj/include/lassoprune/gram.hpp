#pragma once

// Centered per-channel Gram matrices: each channel of a feature batch becomes
// one bs*bs-long column of the regression design.

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "lassoprune/interchange.hpp"

namespace lassoprune {

enum class KernelKind { Linear, Gaussian, Sigmoid, Laplacian };

struct KernelConfig {
  KernelKind kind = KernelKind::Laplacian;
  double c = 0.0;
  // Unset means "median heuristic": the median pairwise distance between the
  // channel's maps, or 1 when that median is zero.
  std::optional<double> sigma;
  double a = 1.0;

  void validate() const;
};

std::optional<KernelKind> kernel_kind_from_string(std::string_view text);

/// A batch of feature maps stored channel-major: for each channel, bs
/// consecutive maps of h*w values.
class FeatureBatch {
 public:
  FeatureBatch(std::size_t bs, std::size_t h, std::size_t w, std::size_t channels,
               std::vector<double> channel_major_values);

  /// Builds a batch from an FMAP tensor with axis order (batch, h, w, channel).
  static FeatureBatch from_tensor(const TensorFile& tensor);

  std::size_t bs() const { return bs_; }
  std::size_t h() const { return h_; }
  std::size_t w() const { return w_; }
  std::size_t channels() const { return channels_; }
  std::size_t map_size() const { return h_ * w_; }

  std::span<const double> map(std::size_t sample, std::size_t channel) const {
    return {values_.data() + (channel * bs_ + sample) * map_size(), map_size()};
  }

 private:
  std::size_t bs_, h_, w_, channels_;
  std::vector<double> values_;
};

struct GramDesign {
  std::size_t bs = 0;
  Eigen::MatrixXd x;  // bs^2 x in_channels
  Eigen::MatrixXd y;  // bs^2 x out_channels

  std::size_t n_rows() const { return static_cast<std::size_t>(x.rows()); }
};

double kernel_eval(std::span<const double> x, std::span<const double> y, const KernelConfig& cfg);

/// bs x bs kernel matrix of one channel's maps. A missing sigma is resolved
/// with the median heuristic on this channel.
Eigen::MatrixXd channel_gram(const FeatureBatch& batch, std::size_t channel, const KernelConfig& cfg);

/// Psi K Psi with Psi = I - 11^T / bs.
Eigen::MatrixXd center_gram(const Eigen::MatrixXd& k);

GramDesign build_design(const FeatureBatch& x_batch, const FeatureBatch& y_batch,
                        const KernelConfig& cfg);

/// Median of the pairwise Euclidean distances between a channel's maps.
double median_pairwise_distance(const FeatureBatch& batch, std::size_t channel);

}  // namespace lassoprune
