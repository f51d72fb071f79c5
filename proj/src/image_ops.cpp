#include "stalltrace/image_ops.hpp"

#include <algorithm>

namespace stalltrace {

Labeling label_components(const Mask& mask) {
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  Labeling out{ImageI::Zero(h, w), {}};
  std::vector<std::pair<int, int>> stack;
  int next = 1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask(y, x) || out.labels(y, x)) continue;
      Component c{next, 0, PixelRect{x, y, x + 1, y + 1}};
      out.labels(y, x) = next;
      stack.emplace_back(x, y);
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        ++c.area;
        c.bounds.x0 = std::min(c.bounds.x0, cx);
        c.bounds.y0 = std::min(c.bounds.y0, cy);
        c.bounds.x1 = std::max(c.bounds.x1, cx + 1);
        c.bounds.y1 = std::max(c.bounds.y1, cy + 1);
        for (int dy = -1; dy <= 1; ++dy) {
          const int ny = cy + dy;
          if (ny < 0 || ny >= h) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx;
            if (nx < 0 || nx >= w || !mask(ny, nx) || out.labels(ny, nx)) continue;
            out.labels(ny, nx) = next;
            stack.emplace_back(nx, ny);
          }
        }
      }
      out.components.push_back(c);
      ++next;
    }
  }
  return out;
}

namespace {

// One separable pass of a binary max (dilate) or min (erode) filter along rows.
// `outside` is the value assumed beyond the border.
Mask filter_rows(const Mask& in, int radius, bool dilate, bool outside) {
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  Mask out(h, w);
  for (int y = 0; y < h; ++y) {
    // Count of set pixels in the window, with out-of-range taps counted per `outside`.
    int count = 0;
    auto tap = [&](int x) -> int { return (x < 0 || x >= w) ? (outside ? 1 : 0) : (in(y, x) ? 1 : 0); };
    for (int x = -radius; x <= radius; ++x) count += tap(x);
    for (int x = 0; x < w; ++x) {
      const int span = 2 * radius + 1;
      out(y, x) = dilate ? (count > 0) : (count == span);
      count += tap(x + radius + 1) - tap(x - radius);
    }
  }
  return out;
}

Mask filter_2d(const Mask& mask, int kernel_size, bool dilate, bool outside) {
  const int radius = kernel_size / 2;
  Mask rows = filter_rows(mask, radius, dilate, outside);
  Mask t = rows.transpose();
  Mask cols = filter_rows(t, radius, dilate, outside);
  return cols.transpose();
}

}  // namespace

Mask dilate(const Mask& mask, int kernel_size, int iterations) {
  if (kernel_size < 1) throw Error("dilate: kernel_size must be >= 1");
  Mask m = (mask != 0).cast<std::uint8_t>();
  for (int i = 0; i < iterations; ++i) m = filter_2d(m, kernel_size, true, false);
  return m;
}

Mask erode(const Mask& mask, int kernel_size, int iterations) {
  if (kernel_size < 1) throw Error("erode: kernel_size must be >= 1");
  Mask m = (mask != 0).cast<std::uint8_t>();
  for (int i = 0; i < iterations; ++i) m = filter_2d(m, kernel_size, false, true);
  return m;
}

ImageD box_mean(const ImageD& img, int radius) {
  const Eigen::Index h = img.rows();
  const Eigen::Index w = img.cols();
  // Summed-area table with a zero border row/col.
  ImageD sat = ImageD::Zero(h + 1, w + 1);
  for (Eigen::Index y = 0; y < h; ++y) {
    double row_sum = 0.0;
    for (Eigen::Index x = 0; x < w; ++x) {
      row_sum += img(y, x);
      sat(y + 1, x + 1) = sat(y, x + 1) + row_sum;
    }
  }
  ImageD out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    const Eigen::Index y0 = std::max<Eigen::Index>(0, y - radius);
    const Eigen::Index y1 = std::min<Eigen::Index>(h, y + radius + 1);
    for (Eigen::Index x = 0; x < w; ++x) {
      const Eigen::Index x0 = std::max<Eigen::Index>(0, x - radius);
      const Eigen::Index x1 = std::min<Eigen::Index>(w, x + radius + 1);
      const double s = sat(y1, x1) - sat(y0, x1) - sat(y1, x0) + sat(y0, x0);
      out(y, x) = s / static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}

}  // namespace stalltrace
