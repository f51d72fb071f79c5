#include "stalltrace/optical_flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stalltrace {

namespace {

ImageF downsample(const ImageF& src) {
  const Eigen::Index h = src.rows(), w = src.cols();
  static constexpr float k[5] = {1.f / 16, 4.f / 16, 6.f / 16, 4.f / 16, 1.f / 16};
  ImageF tmp(h, (w + 1) / 2);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < tmp.cols(); ++x) {
      float s = 0.f;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * src(y, std::clamp<Eigen::Index>(2 * x + i, 0, w - 1));
      tmp(y, x) = s;
    }
  }
  ImageF out((h + 1) / 2, tmp.cols());
  for (Eigen::Index y = 0; y < out.rows(); ++y) {
    for (Eigen::Index x = 0; x < out.cols(); ++x) {
      float s = 0.f;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp(std::clamp<Eigen::Index>(2 * y + i, 0, h - 1), x);
      out(y, x) = s;
    }
  }
  return out;
}

void central_gradients(const ImageF& img, ImageF& gx, ImageF& gy) {
  const Eigen::Index h = img.rows(), w = img.cols();
  gx.resize(h, w);
  gy.resize(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    const Eigen::Index yu = std::max<Eigen::Index>(y - 1, 0), yd = std::min(y + 1, h - 1);
    for (Eigen::Index x = 0; x < w; ++x) {
      const Eigen::Index xl = std::max<Eigen::Index>(x - 1, 0), xr = std::min(x + 1, w - 1);
      gx(y, x) = 0.5f * (img(y, xr) - img(y, xl));
      gy(y, x) = 0.5f * (img(yd, x) - img(yu, x));
    }
  }
}

double min_eigenvalue(double a, double b, double c) {
  // Smaller eigenvalue of [[a, b], [b, c]].
  return 0.5 * (a + c - std::sqrt((a - c) * (a - c) + 4.0 * b * b));
}

}  // namespace

FlowPyramid::FlowPyramid(const ImageU8& frame, int levels) {
  if (levels < 1) throw Error("FlowPyramid: levels must be >= 1");
  img_.push_back(frame.cast<float>() / 255.f);
  for (int l = 1; l < levels && img_.back().rows() >= 8 && img_.back().cols() >= 8; ++l) {
    img_.push_back(downsample(img_.back()));
  }
  gx_.resize(img_.size());
  gy_.resize(img_.size());
  for (std::size_t l = 0; l < img_.size(); ++l) central_gradients(img_[l], gx_[l], gy_[l]);
}

float sample_bilinear(const ImageF& img, double x, double y) {
  const double maxx = static_cast<double>(img.cols() - 1), maxy = static_cast<double>(img.rows() - 1);
  x = std::clamp(x, 0.0, maxx);
  y = std::clamp(y, 0.0, maxy);
  const auto x0 = static_cast<Eigen::Index>(x), y0 = static_cast<Eigen::Index>(y);
  const Eigen::Index x1 = std::min<Eigen::Index>(x0 + 1, img.cols() - 1);
  const Eigen::Index y1 = std::min<Eigen::Index>(y0 + 1, img.rows() - 1);
  const float fx = static_cast<float>(x - static_cast<double>(x0)), fy = static_cast<float>(y - static_cast<double>(y0));
  const float top = img(y0, x0) + fx * (img(y0, x1) - img(y0, x0));
  const float bot = img(y1, x0) + fx * (img(y1, x1) - img(y1, x0));
  return top + fy * (bot - top);
}

std::vector<FlowPoint> lk_step(const FlowPyramid& from, const FlowPyramid& to, std::span<const FlowPoint> points,
                               const LkParams& params) {
  if (from.width() != to.width() || from.height() != to.height()) throw DimensionError("lk_step: frame size mismatch");
  if (params.window < 3 || params.window % 2 == 0) throw Error("lk_step: window must be odd and >= 3");
  const int levels = std::min(from.levels(), to.levels());
  const int half = params.window / 2;
  const auto n = static_cast<std::size_t>(params.window) * static_cast<std::size_t>(params.window);
  std::vector<float> wi(n), wx(n), wy(n);

  std::vector<FlowPoint> out(points.begin(), points.end());
  for (FlowPoint& pt : out) {
    if (!pt.tracked) continue;
    Eigen::Vector2d guess = Eigen::Vector2d::Zero();
    bool ok = true;
    for (int level = levels - 1; level >= 0; --level) {
      const double scale = std::ldexp(1.0, -level);
      const Eigen::Vector2d p = pt.pos * scale;
      const ImageF& I = from.image(level);
      const ImageF& J = to.image(level);
      double gxx = 0, gxy = 0, gyy = 0;
      std::size_t k = 0;
      for (int dy = -half; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx, ++k) {
          wi[k] = sample_bilinear(I, p.x() + dx, p.y() + dy);
          wx[k] = sample_bilinear(from.grad_x(level), p.x() + dx, p.y() + dy);
          wy[k] = sample_bilinear(from.grad_y(level), p.x() + dx, p.y() + dy);
          gxx += double(wx[k]) * wx[k];
          gxy += double(wx[k]) * wy[k];
          gyy += double(wy[k]) * wy[k];
        }
      }
      const double det = gxx * gyy - gxy * gxy;
      if (min_eigenvalue(gxx, gxy, gyy) / static_cast<double>(n) < params.min_eig || det < 1e-12) {
        if (level == 0) ok = false;
        if (level > 0) guess *= 2.0;
        continue;
      }
      Eigen::Vector2d v = Eigen::Vector2d::Zero();
      for (int it = 0; it < params.max_iters; ++it) {
        double bx = 0, by = 0;
        k = 0;
        for (int dy = -half; dy <= half; ++dy) {
          for (int dx = -half; dx <= half; ++dx, ++k) {
            const double diff = wi[k] - sample_bilinear(J, p.x() + guess.x() + v.x() + dx, p.y() + guess.y() + v.y() + dy);
            bx += diff * wx[k];
            by += diff * wy[k];
          }
        }
        const Eigen::Vector2d eta((gyy * bx - gxy * by) / det, (gxx * by - gxy * bx) / det);
        v += eta;
        if (eta.norm() < params.epsilon) break;
      }
      guess = level > 0 ? Eigen::Vector2d(2.0 * (guess + v)) : Eigen::Vector2d(guess + v);
    }
    const Eigen::Vector2d np = pt.pos + guess;
    if (!ok || !np.allFinite() || np.x() < 0 || np.y() < 0 || np.x() > from.width() - 1 ||
        np.y() > from.height() - 1) {
      pt.tracked = false;
      continue;
    }
    pt.pos = np;
  }
  return out;
}

std::vector<FlowPoint> lk_step(const ImageU8& from, const ImageU8& to, std::span<const FlowPoint> points,
                               const LkParams& params) {
  require_same_size(from, to, "lk_step");
  return lk_step(FlowPyramid(from, params.levels), FlowPyramid(to, params.levels), points, params);
}

std::vector<FlowPoint> seed_points(const BBox& box, const ImageU8& frame, const SeedParams& params) {
  const int w = static_cast<int>(frame.cols()), h = static_cast<int>(frame.rows());
  const PixelRect r = clip(box.pixels(), w, h);
  if (r.empty()) throw DimensionError("seed_points: box lies outside the frame");

  // Response needs a 2-pixel margin: one for the gradient, one for the 3x3 tensor window.
  const int x0 = std::max(r.x0, 2), x1 = std::min(r.x1, w - 2);
  const int y0 = std::max(r.y0, 2), y1 = std::min(r.y1, h - 2);
  if (x0 >= x1 || y0 >= y1) return {};
  const int ox = x0 - 2, oy = y0 - 2;
  const int rw = x1 - x0 + 4, rh = y1 - y0 + 4;
  const ImageF region = frame.block(oy, ox, rh, rw).cast<float>() / 255.f;
  ImageF gx, gy;
  central_gradients(region, gx, gy);
  const ImageD xx = (gx * gx).cast<double>(), xy = (gx * gy).cast<double>(), yy = (gy * gy).cast<double>();

  ImageD resp = ImageD::Zero(rh, rw);
  for (int y = 2; y < rh - 2; ++y) {
    for (int x = 2; x < rw - 2; ++x) {
      const double a = xx.block(y - 1, x - 1, 3, 3).sum() / 9.0;
      const double b = xy.block(y - 1, x - 1, 3, 3).sum() / 9.0;
      const double c = yy.block(y - 1, x - 1, 3, 3).sum() / 9.0;
      resp(y, x) = std::max(0.0, min_eigenvalue(a, b, c));
    }
  }
  const double floor = std::max(params.min_response, params.quality * resp.maxCoeff());

  struct Candidate {
    double response;
    int x, y;
  };
  std::vector<Candidate> cands;
  for (int y = 2; y < rh - 2; ++y) {
    for (int x = 2; x < rw - 2; ++x) {
      const double v = resp(y, x);
      if (v < floor) continue;
      if (v < resp.block(y - 1, x - 1, 3, 3).maxCoeff()) continue;
      cands.push_back({v, x + ox, y + oy});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.response > b.response; });

  std::vector<FlowPoint> out;
  const double d2 = params.min_distance * params.min_distance;
  for (const Candidate& c : cands) {
    if (static_cast<int>(out.size()) >= params.count) break;
    const Eigen::Vector2d p(c.x, c.y);
    const bool crowded =
        std::any_of(out.begin(), out.end(), [&](const FlowPoint& q) { return (q.pos - p).squaredNorm() < d2; });
    if (!crowded) out.push_back({p, true});
  }
  return out;
}

}  // namespace stalltrace
