#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace stalltrace {

/// Dense row-major image grid, indexed (row, col) = (y, x).
template <typename Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ImageU8 = Image<std::uint8_t>;
using ImageF = Image<float>;
using ImageD = Image<double>;
using ImageI = Image<std::int32_t>;
/// Binary mask; nonzero means set.
using Mask = Image<std::uint8_t>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

template <typename A, typename B>
void require_same_size(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
  }
}

/// Integer pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  [[nodiscard]] int width() const { return std::max(0, x1 - x0); }
  [[nodiscard]] int height() const { return std::max(0, y1 - y0); }
  [[nodiscard]] bool empty() const { return width() == 0 || height() == 0; }
  [[nodiscard]] long area() const { return static_cast<long>(width()) * height(); }
};

inline PixelRect clip(PixelRect r, int width, int height) {
  r.x0 = std::clamp(r.x0, 0, width);
  r.x1 = std::clamp(r.x1, 0, width);
  r.y0 = std::clamp(r.y0, 0, height);
  r.y1 = std::clamp(r.y1, 0, height);
  return r;
}

/// Read-only view of a rectangular patch.
template <typename Derived>
auto patch(const Eigen::ArrayBase<Derived>& img, const PixelRect& r) {
  return img.derived().block(r.y0, r.x0, r.height(), r.width());
}

inline std::uint8_t saturate_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace stalltrace
