#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "geopf/rng.hpp"

namespace geopf {

// Metric-learning losses as pure scalar functions. The batch terms
// (d_pos, d_neg, S_p, S_n, S_semi) are similarity-like scores produced
// upstream; both losses reward high positive-pair scores.

double triplet_loss(double d_pos, double d_neg, double alpha);

struct TripletGrad {
  double d_pos = 0.0;
  double d_neg = 0.0;
};
TripletGrad triplet_loss_grad(double d_pos, double d_neg, double alpha);

// Slopes, margins and pair counts for the three-term loss. Defaults
// alpha=10, m=0, N=1 are library fallbacks, not published values.
struct TrinomialParams {
  double alpha_p = 10.0;
  double alpha_n = 10.0;
  double alpha_semi = 10.0;
  double m_p = 0.0;
  double m_n = 0.0;
  double m_semi = 0.0;
  int n_p = 1;
  int n_n = 1;
  int n_semi = 1;

  void validate() const;
  bool operator==(const TrinomialParams&) const = default;
};

double trinomial_loss(double s_p, double s_n, double s_semi, const TrinomialParams& params);

struct TrinomialGrad {
  double s_p = 0.0;
  double s_n = 0.0;
  double s_semi = 0.0;
};
TrinomialGrad trinomial_loss_grad(double s_p, double s_n, double s_semi,
                                  const TrinomialParams& params);

// Interleaved RGB raster with intensities in [0, 1].
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;  // 3 * width * height, rgb order

  static RgbImage filled(std::size_t width, std::size_t height, float r, float g, float b);
  std::size_t pixel_count() const { return width * height; }
  float& at(std::size_t x, std::size_t y, std::size_t channel) {
    return pixels[3 * (y * width + x) + channel];
  }
  float at(std::size_t x, std::size_t y, std::size_t channel) const {
    return pixels[3 * (y * width + x) + channel];
  }
};

// Eigen-decomposition of a symmetric 3x3 matrix, eigenvalues descending,
// vectors[k] the unit eigenvector paired with values[k].
struct SymmetricEigen3 {
  std::array<double, 3> values{};
  std::array<std::array<double, 3>, 3> vectors{};
};
SymmetricEigen3 eigen_symmetric3(const std::array<std::array<double, 3>, 3>& m);

struct ColorPca {
  SymmetricEigen3 eigen;           // of the 3x3 RGB covariance over all pixels
  std::array<double, 3> mean{};
};
ColorPca compute_color_pca(const RgbImage& image);

// Scale of the per-component Gaussian draw before the alpha multiplier.
inline constexpr double kPcaDrawStd = 0.1;

// One per-pixel RGB shift: sum_k a_k * lambda_k * e_k with
// a_k ~ N(0, (alpha_scale * kPcaDrawStd)^2), drawn in eigen-index order.
std::array<double, 3> draw_pca_shift(const ColorPca& pca, double alpha_scale, RngStream& rng);

RgbImage fancy_pca_augment(const RgbImage& image, double alpha_scale, RngStream& rng);

}  // namespace geopf
