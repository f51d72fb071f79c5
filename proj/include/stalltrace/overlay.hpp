#pragma once

#include <array>
#include <filesystem>
#include <span>

#include "stalltrace/pipeline.hpp"

namespace stalltrace {

using Rgb = std::array<std::uint8_t, 3>;

/// Interleaved RGB canvas built from a grayscale frame.
class RgbCanvas {
 public:
  explicit RgbCanvas(const ImageU8& gray);
  RgbCanvas(int height, int width, Rgb fill);

  void set(int x, int y, Rgb c);
  void line(double x0, double y0, double x1, double y1, Rgb c);
  void rect(const BBox& b, Rgb c, int thickness = 1);
  [[nodiscard]] const RawImage& image() const { return img_; }
  [[nodiscard]] int width() const { return img_.width(); }
  [[nodiscard]] int height() const { return img_.height(); }

 private:
  RawImage img_;
};

struct OverlayOptions {
  std::int64_t first = 0;
  std::int64_t last = -1;  // inclusive; -1 means the final frame
  std::int64_t stride = 1;
  int trail = 30;
};

/// Draws track trails, track boxes and event boxes (from each event's start onward) into
/// overlay_NNNNNN.png files; flow-refined events also get a velocity plot.
void emit_overlays(const FrameSource& frames, std::span<const AnomalyEvent> events, std::span<const Track> tracks,
                   const std::filesystem::path& dir, const OverlayOptions& options = {},
                   std::span<const DynamicTrace> traces = {});

/// Line plot of a velocity series; `marker` is a frame to highlight, if any.
void write_velocity_plot(const std::filesystem::path& path, const VelocitySeries& series,
                         std::optional<std::int64_t> marker = std::nullopt);

}  // namespace stalltrace
