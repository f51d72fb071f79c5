#include "stalltrace/background_model.hpp"

#include <algorithm>
#include <cmath>

namespace stalltrace {

void BackgroundParams::validate() const {
  if (max_components < 1 || max_components > 255) throw Error("background: max_components out of range");
  if (history < 1) throw Error("background: history must be >= 1");
  if (!(var_threshold > 0 && background_ratio > 0 && var_init > 0 && var_min > 0 && var_max >= var_min)) {
    throw Error("background: thresholds and variances must be positive with var_min <= var_max");
  }
  if (sample_interval < 1) throw Error("background: sample_interval must be >= 1");
}

GmmBackground::GmmBackground(int height, int width, BackgroundParams params)
    : height_(height), width_(width), params_(params) {
  params_.validate();
  if (height <= 0 || width <= 0) throw DimensionError("GmmBackground: empty grid");
  const auto n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  comps_.resize(n * static_cast<std::size_t>(params_.max_components));
  counts_.assign(n, 0);
}

std::span<const GmmComponent> GmmBackground::pixel(int y, int x) const {
  const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  return {comps_.data() + p * static_cast<std::size_t>(params_.max_components), counts_[p]};
}

// Returns true when the sample is background.
bool GmmBackground::update_pixel(std::size_t p, double x) {
  const int k_max = params_.max_components;
  GmmComponent* c = comps_.data() + p * static_cast<std::size_t>(k_max);
  int n = counts_[p];
  const double alpha = params_.learning_rate();

  int matched = -1;
  for (int m = 0; m < n; ++m) {
    const double d = x - c[m].mean;
    if (d * d < params_.var_threshold * c[m].var) {
      matched = m;
      break;
    }
  }

  bool is_background = false;
  if (matched >= 0) {
    // Background set: components ranked by weight/sigma, taken until the cumulative weight passes the ratio.
    const double key = c[matched].weight / std::sqrt(c[matched].var);
    double ahead = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == matched) continue;
      const double kj = c[j].weight / std::sqrt(c[j].var);
      if (kj > key || (kj == key && j < matched)) ahead += c[j].weight;
    }
    is_background = ahead < params_.background_ratio;
  }

  for (int m = 0; m < n; ++m) c[m].weight *= (1.0 - alpha);
  if (matched >= 0) {
    GmmComponent& mc = c[matched];
    mc.weight += alpha;
    const double rho = alpha / mc.weight;
    const double d = x - mc.mean;
    mc.mean += rho * d;
    mc.var = std::clamp(mc.var + rho * (d * d - mc.var), params_.var_min, params_.var_max);
  } else {
    const int slot = n < k_max ? n++ : n - 1;
    c[slot] = GmmComponent{alpha, x, params_.var_init};
    counts_[p] = static_cast<std::uint8_t>(n);
    matched = slot;
  }

  double sum = 0.0;
  for (int m = 0; m < n; ++m) sum += c[m].weight;
  for (int m = 0; m < n; ++m) c[m].weight /= sum;

  // Restore descending weight order; only the touched component can be out of place.
  for (int m = matched; m > 0 && c[m].weight > c[m - 1].weight; --m) std::swap(c[m], c[m - 1]);
  return is_background;
}

Mask GmmBackground::update(const ImageU8& frame) {
  if (frame.rows() != height_ || frame.cols() != width_) {
    throw DimensionError("gmm_update: frame is " + std::to_string(frame.cols()) + "x" +
                         std::to_string(frame.rows()) + ", model is " + std::to_string(width_) + "x" +
                         std::to_string(height_));
  }
  Mask fg = Mask::Zero(height_, width_);
  const std::size_t k_max = static_cast<std::size_t>(params_.max_components);
  if (frames_ == 0) {
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
        comps_[p * k_max] = GmmComponent{1.0, static_cast<double>(frame(y, x)), params_.var_init};
        counts_[p] = 1;
      }
    }
  } else {
    for (int y = 0; y < height_; ++y) {
      const std::uint8_t* row = frame.row(y).data();
      std::uint8_t* out = fg.row(y).data();
      const std::size_t base = static_cast<std::size_t>(y) * static_cast<std::size_t>(width_);
      for (int x = 0; x < width_; ++x) {
        out[x] = update_pixel(base + static_cast<std::size_t>(x), row[x]) ? 0 : 1;
      }
    }
  }
  ++frames_;
  return fg;
}

ImageU8 GmmBackground::background_image() const {
  if (!initialized()) throw Error("background_image: model has not absorbed any frame");
  ImageU8 img(height_, width_);
  const std::size_t k_max = static_cast<std::size_t>(params_.max_components);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
      img(y, x) = saturate_u8(comps_[p * k_max].mean);
    }
  }
  return img;
}

}  // namespace stalltrace
