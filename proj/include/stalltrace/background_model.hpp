#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stalltrace/image.hpp"

namespace stalltrace {

struct BackgroundParams {
  int max_components = 5;
  /// Learning rate is 1 / history.
  int history = 120;
  /// Squared Mahalanobis distance below which a sample matches a component.
  double var_threshold = 16.0;
  double background_ratio = 0.9;
  double var_init = 15.0 * 15.0;
  double var_min = 4.0;
  double var_max = 5.0 * 15.0 * 15.0;
  /// Stride, in frames, of the sampled background image stream.
  int sample_interval = 120;

  [[nodiscard]] double learning_rate() const { return 1.0 / history; }
  void validate() const;
};

struct GmmComponent {
  double weight = 0.0;
  double mean = 0.0;
  double var = 0.0;
};

/// Per-pixel adaptive Gaussian mixture over 8-bit intensity (Zivkovic-style update).
/// Components of each pixel are kept sorted by descending weight.
class GmmBackground {
 public:
  GmmBackground(int height, int width, BackgroundParams params = {});

  /// Absorbs one frame; returns the foreground mask (1 = foreground).
  Mask update(const ImageU8& frame);

  /// Mean of each pixel's highest-weight component, rounded.
  [[nodiscard]] ImageU8 background_image() const;

  [[nodiscard]] std::span<const GmmComponent> pixel(int y, int x) const;
  [[nodiscard]] bool initialized() const { return frames_ > 0; }
  [[nodiscard]] std::int64_t frames_seen() const { return frames_; }
  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] const BackgroundParams& params() const { return params_; }

 private:
  bool update_pixel(std::size_t p, double x);

  int height_;
  int width_;
  BackgroundParams params_;
  std::vector<GmmComponent> comps_;
  std::vector<std::uint8_t> counts_;
  std::int64_t frames_ = 0;
};

inline Mask gmm_update(GmmBackground& state, const ImageU8& frame) { return state.update(frame); }
inline ImageU8 background_image(const GmmBackground& state) { return state.background_image(); }

/// Whether the background image should be sampled after absorbing `frame_idx`.
inline bool is_background_sample(std::int64_t frame_idx, int interval) {
  return frame_idx > 0 && frame_idx % interval == 0;
}

}  // namespace stalltrace
