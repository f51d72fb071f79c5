#include "stalltrace/ingest.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stalltrace/text.hpp"

namespace stalltrace {

std::filesystem::path VideoManifest::frame_path(std::int64_t idx) const {
  char buf[512];
  const int n = std::snprintf(buf, sizeof(buf), frame_pattern.c_str(), static_cast<long long>(idx));
  if (n < 0 || n >= static_cast<int>(sizeof(buf))) throw LoadError("bad frame_pattern '" + frame_pattern + "'");
  return frame_dir / buf;
}

namespace {

// Accepts exactly one integer conversion (%d, %0Nd, %lld...) so snprintf stays well-defined.
bool valid_pattern(const std::string& p) {
  int conversions = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] != '%') continue;
    if (i + 1 < p.size() && p[i + 1] == '%') {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < p.size() && (std::isdigit(static_cast<unsigned char>(p[j])) || p[j] == 'l')) ++j;
    if (j >= p.size() || p[j] != 'd') return false;
    ++conversions;
    i = j;
  }
  return conversions == 1;
}

}  // namespace

VideoManifest load_manifest(const std::filesystem::path& path) {
  const auto kv = read_key_values(path);
  VideoManifest m;
  m.frame_dir = path.parent_path();
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw LoadError(path.string() + ": missing key '" + key + "'");
    return it->second;
  };
  try {
    m.video_id = get("video_id");
    m.fps = kv.contains("fps") ? parse_double(kv.at("fps")) : 30.0;
    m.width = static_cast<int>(parse_int(get("width")));
    m.height = static_cast<int>(parse_int(get("height")));
    m.frame_count = parse_int(get("frame_count"));
    m.frame_pattern = get("frame_pattern");
  } catch (const LoadError&) {
    throw;
  } catch (const Error& e) {
    throw LoadError(path.string() + ": malformed field: " + e.what());
  }
  if (kv.contains("frame_dir")) {
    const std::filesystem::path d = kv.at("frame_dir");
    m.frame_dir = d.is_absolute() ? d : path.parent_path() / d;
  }
  if (!(m.fps > 0.0) || !std::isfinite(m.fps)) throw LoadError(path.string() + ": fps must be positive");
  if (m.width <= 0 || m.height <= 0) throw LoadError(path.string() + ": width/height must be positive");
  if (m.frame_count <= 0) throw LoadError(path.string() + ": frame_count must be positive");
  if (m.video_id.empty()) throw LoadError(path.string() + ": empty video_id");
  if (!valid_pattern(m.frame_pattern)) {
    throw LoadError(path.string() + ": frame_pattern needs exactly one integer conversion");
  }
  for (std::int64_t i = 0; i < m.frame_count; ++i) {
    if (!std::filesystem::exists(m.frame_path(i))) {
      throw LoadError(path.string() + ": frame " + std::to_string(i) + " missing (" + m.frame_path(i).string() + ")");
    }
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const VideoManifest& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << "video_id = " << m.video_id << "\n"
      << "fps = " << format_double(m.fps) << "\n"
      << "width = " << m.width << "\n"
      << "height = " << m.height << "\n"
      << "frame_count = " << m.frame_count << "\n"
      << "frame_pattern = " << m.frame_pattern << "\n";
  if (!m.frame_dir.empty() && m.frame_dir != path.parent_path()) {
    out << "frame_dir = " << m.frame_dir.string() << "\n";
  }
}

Frame read_frame(const VideoManifest& m, std::int64_t idx) {
  if (idx < 0 || idx >= m.frame_count) {
    throw LoadError("read_frame: index " + std::to_string(idx) + " out of range [0, " +
                    std::to_string(m.frame_count) + ")");
  }
  Frame f{idx, read_image(m.frame_path(idx))};
  if (f.width() != m.width || f.height() != m.height) {
    throw LoadError("frame " + std::to_string(idx) + " is " + std::to_string(f.width()) + "x" +
                    std::to_string(f.height()) + ", manifest says " + std::to_string(m.width) + "x" +
                    std::to_string(m.height));
  }
  return f;
}

Frame to_grayscale(const Frame& frame) {
  if (frame.channels() == 1) return frame;
  const int h = frame.height();
  const int w = frame.width();
  Frame out{frame.idx, RawImage{1, ImageU8(h, w)}};
  for (int y = 0; y < h; ++y) {
    const auto row = frame.image.pixels.row(y);
    for (int x = 0; x < w; ++x) {
      const double luma = 0.299 * row(3 * x) + 0.587 * row(3 * x + 1) + 0.114 * row(3 * x + 2);
      out.image.pixels(y, x) = saturate_u8(luma);
    }
  }
  return out;
}

void DetectionSet::add(const Detection& d) {
  by_frame_[d.frame_idx].push_back(d);
  ++count_;
}

std::span<const Detection> DetectionSet::at(std::int64_t frame_idx) const {
  auto it = by_frame_.find(frame_idx);
  if (it == by_frame_.end()) return {};
  return it->second;
}

std::vector<std::int64_t> DetectionSet::frames() const {
  std::vector<std::int64_t> out;
  out.reserve(by_frame_.size());
  for (const auto& [f, _] : by_frame_) out.push_back(f);
  return out;
}

DetectionSet load_detections(const std::filesystem::path& path, DetectionSource source, std::int64_t frame_limit) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open detections " + path.string());
  DetectionSet set(source);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty() || fields[0].starts_with('#')) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 6) throw LoadError(where + ": expected 6 fields, got " + std::to_string(fields.size()));
    Detection d;
    try {
      d.frame_idx = parse_int(fields[0]);
      d.bbox = BBox{parse_double(fields[1]), parse_double(fields[2]), parse_double(fields[3]),
                    parse_double(fields[4])};
      d.score = parse_double(fields[5]);
    } catch (const Error& e) {
      throw LoadError(where + ": " + e.what());
    }
    if (d.frame_idx < 0) throw LoadError(where + ": negative frame index");
    if (frame_limit >= 0 && d.frame_idx >= frame_limit) {
      throw LoadError(where + ": frame index " + std::to_string(d.frame_idx) + " >= frame_count " +
                      std::to_string(frame_limit));
    }
    if (!d.bbox.valid()) throw LoadError(where + ": invalid box (need x1<=x2, y1<=y2, finite)");
    if (!(d.score >= 0.0 && d.score <= 1.0)) throw LoadError(where + ": score outside [0,1]");
    set.add(d);
  }
  return set;
}

void write_detections(const std::filesystem::path& path, const DetectionSet& set) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write detections " + path.string());
  for (std::int64_t f : set.frames()) {
    for (const Detection& d : set.at(f)) {
      out << d.frame_idx << '\t' << format_double(d.bbox.x1) << '\t' << format_double(d.bbox.y1) << '\t'
          << format_double(d.bbox.x2) << '\t' << format_double(d.bbox.y2) << '\t' << format_double(d.score)
          << '\n';
    }
  }
}

std::vector<GroundTruth> load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open ground truth " + path.string());
  std::vector<GroundTruth> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty() || fields[0].starts_with('#')) continue;
    if (fields.size() != 2) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": expected `video_id start_time_seconds`");
    }
    try {
      out.push_back({fields[0], parse_double(fields[1])});
    } catch (const Error& e) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_ground_truth(const std::filesystem::path& path, std::span<const GroundTruth> truths) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write ground truth " + path.string());
  for (const auto& t : truths) out << t.video_id << ' ' << format_seconds(t.start_seconds) << '\n';
}

ImageU8 ManifestFrameSource::gray(std::int64_t idx) const {
  return to_grayscale(read_frame(manifest_, idx)).image.pixels;
}

}  // namespace stalltrace
