#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <unistd.h>

#include "stalltrace/image.hpp"
#include "stalltrace/ingest.hpp"

namespace fixtures {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("stalltrace_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Smooth random texture with strong gradients everywhere; wraps every `period` pixels.
inline stalltrace::ImageU8 texture(int height, int width, unsigned seed = 7) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> d(0, 255);
  stalltrace::ImageD coarse(height / 4 + 3, width / 4 + 3);
  for (Eigen::Index y = 0; y < coarse.rows(); ++y) {
    for (Eigen::Index x = 0; x < coarse.cols(); ++x) coarse(y, x) = d(rng);
  }
  stalltrace::ImageU8 out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double fy = y / 4.0, fx = x / 4.0;
      const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
      const double ay = fy - y0, ax = fx - x0;
      const double v = (1 - ay) * ((1 - ax) * coarse(y0, x0) + ax * coarse(y0, x0 + 1)) +
                       ay * ((1 - ax) * coarse(y0 + 1, x0) + ax * coarse(y0 + 1, x0 + 1));
      out(y, x) = stalltrace::saturate_u8(v);
    }
  }
  return out;
}

/// Frames produced on demand by a function of the frame index.
class FunctionFrameSource : public stalltrace::FrameSource {
 public:
  FunctionFrameSource(int height, int width, std::int64_t count, double fps,
                      std::function<stalltrace::ImageU8(std::int64_t)> render)
      : render_(std::move(render)) {
    m_.video_id = "fixture";
    m_.height = height;
    m_.width = width;
    m_.frame_count = count;
    m_.fps = fps;
  }
  [[nodiscard]] const stalltrace::VideoManifest& manifest() const override { return m_; }
  [[nodiscard]] stalltrace::ImageU8 gray(std::int64_t idx) const override { return render_(idx); }

 private:
  stalltrace::VideoManifest m_;
  std::function<stalltrace::ImageU8(std::int64_t)> render_;
};

/// Pastes `sprite` with its top-left corner at (x, y), clipped to the canvas.
inline void paste(stalltrace::ImageU8& canvas, const stalltrace::ImageU8& sprite, int x, int y) {
  for (Eigen::Index r = 0; r < sprite.rows(); ++r) {
    for (Eigen::Index c = 0; c < sprite.cols(); ++c) {
      const Eigen::Index yy = y + r, xx = x + c;
      if (yy >= 0 && xx >= 0 && yy < canvas.rows() && xx < canvas.cols()) canvas(yy, xx) = sprite(r, c);
    }
  }
}

}  // namespace fixtures
