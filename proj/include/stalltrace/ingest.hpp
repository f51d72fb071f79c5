#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stalltrace/core.hpp"
#include "stalltrace/image_io.hpp"
#include "stalltrace/text.hpp"

namespace stalltrace {

class LoadError : public Error {
 public:
  using Error::Error;
};

struct VideoManifest {
  std::string video_id;
  std::filesystem::path frame_dir;
  double fps = 30.0;
  int width = 0;
  int height = 0;
  std::int64_t frame_count = 0;
  /// printf-style pattern with one integer conversion, e.g. "frame_%06d.pgm".
  std::string frame_pattern = "frame_%06d.pgm";

  [[nodiscard]] std::filesystem::path frame_path(std::int64_t idx) const;
  [[nodiscard]] double duration_seconds() const { return static_cast<double>(frame_count) / fps; }
};

/// Parses and validates a manifest; frame files are resolved relative to the manifest's directory.
VideoManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const VideoManifest& m);

struct Frame {
  std::int64_t idx = 0;
  RawImage image;

  [[nodiscard]] int width() const { return image.width(); }
  [[nodiscard]] int height() const { return image.height(); }
  [[nodiscard]] int channels() const { return image.channels; }
};

Frame read_frame(const VideoManifest& m, std::int64_t idx);

/// Rec.601 luma, rounded; grayscale input is returned unchanged.
Frame to_grayscale(const Frame& frame);

enum class DetectionSource { original, background };

class DetectionSet {
 public:
  DetectionSet() = default;
  explicit DetectionSet(DetectionSource source) : source_(source) {}

  void add(const Detection& d);
  [[nodiscard]] std::span<const Detection> at(std::int64_t frame_idx) const;
  /// Frames that carry at least one detection, ascending.
  [[nodiscard]] std::vector<std::int64_t> frames() const;
  [[nodiscard]] std::size_t size() const { return count_; }
  [[nodiscard]] DetectionSource source() const { return source_; }
  [[nodiscard]] std::int64_t max_frame() const { return by_frame_.empty() ? -1 : by_frame_.rbegin()->first; }

  friend bool operator==(const DetectionSet& a, const DetectionSet& b) { return a.by_frame_ == b.by_frame_; }

 private:
  DetectionSource source_ = DetectionSource::original;
  std::map<std::int64_t, std::vector<Detection>> by_frame_;
  std::size_t count_ = 0;
};

/// One record per line: `frame_idx x1 y1 x2 y2 score` (tab-separated on write, any whitespace on read).
/// frame_limit < 0 disables the frame-range check.
DetectionSet load_detections(const std::filesystem::path& path, DetectionSource source,
                             std::int64_t frame_limit = -1);
void write_detections(const std::filesystem::path& path, const DetectionSet& set);

struct GroundTruth {
  std::string video_id;
  double start_seconds = 0.0;
};

std::vector<GroundTruth> load_ground_truth(const std::filesystem::path& path);
void write_ground_truth(const std::filesystem::path& path, std::span<const GroundTruth> truths);

/// Random-access grayscale frame stream for one video.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  [[nodiscard]] virtual const VideoManifest& manifest() const = 0;
  [[nodiscard]] virtual ImageU8 gray(std::int64_t idx) const = 0;
};

class ManifestFrameSource : public FrameSource {
 public:
  explicit ManifestFrameSource(VideoManifest m) : manifest_(std::move(m)) {}
  [[nodiscard]] const VideoManifest& manifest() const override { return manifest_; }
  [[nodiscard]] ImageU8 gray(std::int64_t idx) const override;

 private:
  VideoManifest manifest_;
};

}  // namespace stalltrace
