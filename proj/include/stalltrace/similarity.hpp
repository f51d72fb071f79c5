#pragma once

#include <algorithm>
#include <cmath>

#include "stalltrace/image.hpp"

namespace stalltrace {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(255^2 / MSE) in dB; identical patches give `cap`.
template <typename A, typename B>
double psnr(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b, double cap = kPsnrCap) {
  require_same_size(a, b, "psnr");
  if (a.size() == 0) throw DimensionError("psnr: empty patch");
  const double mse = (a.template cast<double>() - b.template cast<double>()).square().mean();
  if (mse <= 0.0) return cap;
  return std::min(cap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

/// Mean SSIM over all window x window sliding windows (stride 1), C1 = (0.01*255)^2, C2 = (0.03*255)^2.
template <typename A, typename B>
double ssim(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b, int window = 8) {
  require_same_size(a, b, "ssim");
  if (a.rows() < window || a.cols() < window) throw DimensionError("ssim: patch smaller than the window");
  constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  const Eigen::ArrayXXd da = a.template cast<double>();
  const Eigen::ArrayXXd db = b.template cast<double>();
  const double n = static_cast<double>(window) * window;
  double total = 0.0;
  long count = 0;
  for (Eigen::Index y = 0; y + window <= da.rows(); ++y) {
    for (Eigen::Index x = 0; x + window <= da.cols(); ++x) {
      const auto wa = da.block(y, x, window, window);
      const auto wb = db.block(y, x, window, window);
      const double ma = wa.sum() / n;
      const double mb = wb.sum() / n;
      const double va = (wa - ma).square().sum() / n;
      const double vb = (wb - mb).square().sum() / n;
      const double cov = ((wa - ma) * (wb - mb)).sum() / n;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

/// 1 - ||a - b|| / (255 sqrt(N)); 1 for identical patches, 0 for maximal distance.
template <typename A, typename B>
double euclid_similarity(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b) {
  require_same_size(a, b, "euclid_similarity");
  if (a.size() == 0) throw DimensionError("euclid_similarity: empty patch");
  const double dist = std::sqrt((a.template cast<double>() - b.template cast<double>()).square().sum());
  return std::clamp(1.0 - dist / (255.0 * std::sqrt(static_cast<double>(a.size()))), 0.0, 1.0);
}

}  // namespace stalltrace
