#include "geopf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace geopf {

namespace {

// Overflow-safe log(1 + e^x).
double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be finite");
}

}  // namespace

double triplet_loss(double d_pos, double d_neg, double alpha) {
  require_finite(d_pos, "d_pos");
  require_finite(d_neg, "d_neg");
  require_finite(alpha, "alpha");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  return softplus(-alpha * (d_pos - d_neg));
}

TripletGrad triplet_loss_grad(double d_pos, double d_neg, double alpha) {
  require_finite(d_pos, "d_pos");
  require_finite(d_neg, "d_neg");
  require_finite(alpha, "alpha");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  double s = sigmoid(-alpha * (d_pos - d_neg));
  return {-alpha * s, alpha * s};
}

void TrinomialParams::validate() const {
  if (!(alpha_p > 0.0) || !(alpha_n > 0.0) || !(alpha_semi > 0.0)) {
    throw std::invalid_argument("trinomial slopes must be positive");
  }
  if (!std::isfinite(m_p) || !std::isfinite(m_n) || !std::isfinite(m_semi)) {
    throw std::invalid_argument("trinomial margins must be finite");
  }
  if (n_p < 1 || n_n < 1 || n_semi < 1) {
    throw std::invalid_argument("trinomial pair counts must be >= 1");
  }
}

double trinomial_loss(double s_p, double s_n, double s_semi, const TrinomialParams& params) {
  params.validate();
  require_finite(s_p, "s_p");
  require_finite(s_n, "s_n");
  require_finite(s_semi, "s_semi");
  double term_p = softplus(-params.alpha_p * (s_p - params.m_p)) / (params.n_p * params.alpha_p);
  double term_n = softplus(params.alpha_n * (s_n - params.m_n)) / (params.n_n * params.alpha_n);
  double term_semi =
      softplus(-params.alpha_semi * (s_semi - params.m_semi)) / (params.n_semi * params.alpha_semi);
  return term_p + term_n + term_semi;
}

TrinomialGrad trinomial_loss_grad(double s_p, double s_n, double s_semi,
                                  const TrinomialParams& params) {
  params.validate();
  require_finite(s_p, "s_p");
  require_finite(s_n, "s_n");
  require_finite(s_semi, "s_semi");
  return {-sigmoid(-params.alpha_p * (s_p - params.m_p)) / params.n_p,
          sigmoid(params.alpha_n * (s_n - params.m_n)) / params.n_n,
          -sigmoid(-params.alpha_semi * (s_semi - params.m_semi)) / params.n_semi};
}

RgbImage RgbImage::filled(std::size_t width, std::size_t height, float r, float g, float b) {
  RgbImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(3 * width * height);
  for (std::size_t i = 0; i < width * height; ++i) {
    img.pixels[3 * i] = r;
    img.pixels[3 * i + 1] = g;
    img.pixels[3 * i + 2] = b;
  }
  return img;
}

SymmetricEigen3 eigen_symmetric3(const std::array<std::array<double, 3>, 3>& m) {
  // Cyclic Jacobi rotations; v accumulates the rotations so the columns
  // stay orthonormal to machine precision.
  double a[3][3];
  double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a[i][j] = 0.5 * (m[i][j] + m[j][i]);

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
    if (off == 0.0) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (a[p][q] == 0.0) continue;
        double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (int k = 0; k < 3; ++k) {
          double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 3; ++k) {
          double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a[i][i] > a[j][j]; });

  SymmetricEigen3 out;
  for (int k = 0; k < 3; ++k) {
    int j = order[k];
    out.values[k] = a[j][j];
    std::array<double, 3> e{v[0][j], v[1][j], v[2][j]};
    // Deterministic sign: largest-magnitude component positive.
    int imax = 0;
    for (int i = 1; i < 3; ++i)
      if (std::abs(e[i]) > std::abs(e[imax])) imax = i;
    if (e[imax] < 0.0)
      for (double& x : e) x = -x;
    out.vectors[k] = e;
  }
  return out;
}

ColorPca compute_color_pca(const RgbImage& image) {
  if (image.pixel_count() == 0) throw std::invalid_argument("image must be non-empty");
  if (image.pixels.size() != 3 * image.pixel_count())
    throw std::invalid_argument("image pixel buffer does not match width * height");
  const std::size_t n = image.pixel_count();
  std::array<double, 3> mean{};
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) mean[c] += image.pixels[3 * i + c];
  for (int c = 0; c < 3; ++c) mean[c] /= static_cast<double>(n);

  std::array<std::array<double, 3>, 3> cov{};
  for (std::size_t i = 0; i < n; ++i) {
    double d[3];
    for (int c = 0; c < 3; ++c) d[c] = image.pixels[3 * i + c] - mean[c];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) cov[r][c] += d[r] * d[c];
  }
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cov[r][c] /= static_cast<double>(n);

  ColorPca pca;
  pca.mean = mean;
  pca.eigen = eigen_symmetric3(cov);
  return pca;
}

std::array<double, 3> draw_pca_shift(const ColorPca& pca, double alpha_scale, RngStream& rng) {
  std::array<double, 3> shift{};
  for (int k = 0; k < 3; ++k) {
    double a = rng.next_gaussian() * alpha_scale * kPcaDrawStd;
    for (int c = 0; c < 3; ++c) shift[c] += a * pca.eigen.values[k] * pca.eigen.vectors[k][c];
  }
  return shift;
}

RgbImage fancy_pca_augment(const RgbImage& image, double alpha_scale, RngStream& rng) {
  ColorPca pca = compute_color_pca(image);
  std::array<double, 3> shift = draw_pca_shift(pca, alpha_scale, rng);
  RgbImage out = image;
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) {
      double v = static_cast<double>(out.pixels[3 * i + c]) + shift[c];
      out.pixels[3 * i + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace geopf
