#include <doctest.h>

#include <fstream>

#include "fixtures.hpp"
#include "stalltrace/image_io.hpp"
#include "stalltrace/ingest.hpp"

using namespace stalltrace;

namespace {

VideoManifest write_scene(const fixtures::TempDir& dir, int frames, int w = 16, int h = 12) {
  VideoManifest m;
  m.video_id = "scene";
  m.fps = 30;
  m.width = w;
  m.height = h;
  m.frame_count = frames;
  m.frame_dir = dir.path();
  for (int i = 0; i < frames; ++i) write_gray(m.frame_path(i), ImageU8::Constant(h, w, static_cast<std::uint8_t>(i)));
  write_manifest(dir / "manifest.txt", m);
  return m;
}

}  // namespace

TEST_CASE("manifest round trip") {
  fixtures::TempDir dir;
  write_scene(dir, 10);
  const VideoManifest m = load_manifest(dir / "manifest.txt");
  CHECK(m.frame_count == 10);
  CHECK(m.fps == 30.0);
  CHECK(m.video_id == "scene");
}

TEST_CASE("manifest with a missing frame names it") {
  fixtures::TempDir dir;
  const VideoManifest m = write_scene(dir, 10);
  std::filesystem::remove(m.frame_path(7));
  try {
    load_manifest(dir / "manifest.txt");
    FAIL("expected a load error");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("frame 7") != std::string::npos);
  }
}

TEST_CASE("manifest duration") {
  VideoManifest m;
  m.fps = 30;
  m.frame_count = 27000;
  CHECK(m.duration_seconds() == doctest::Approx(900.0));
}

TEST_CASE("manifest rejects malformed fields") {
  fixtures::TempDir dir;
  std::ofstream(dir / "m.txt") << "video_id = a\nwidth = ten\nheight = 2\nframe_count = 1\nframe_pattern = f%d.pgm\n";
  CHECK_THROWS_AS(load_manifest(dir / "m.txt"), LoadError);
  std::ofstream(dir / "n.txt") << "video_id = a\nwidth = 2\nheight = 2\nframe_count = 1\nframe_pattern = f.pgm\n";
  CHECK_THROWS_AS(load_manifest(dir / "n.txt"), LoadError);
}

TEST_CASE("frames read deterministically with the manifest size") {
  fixtures::TempDir dir;
  VideoManifest m;
  m.video_id = "big";
  m.width = 800;
  m.height = 410;
  m.frame_count = 1;
  m.frame_dir = dir.path();
  write_gray(m.frame_path(0), ImageU8::Zero(410, 800));
  const Frame a = read_frame(m, 0);
  const Frame b = read_frame(m, 0);
  CHECK(a.height() == 410);
  CHECK(a.width() == 800);
  CHECK((a.image.pixels == b.image.pixels).all());
  CHECK((a.image.pixels == 0).all());
  CHECK_THROWS_AS(read_frame(m, 1), LoadError);
}

TEST_CASE("grayscale conversion") {
  RawImage rgb{3, ImageU8(1, 6)};
  rgb.pixels << 255, 255, 255, 255, 0, 0;
  const Frame g = to_grayscale(Frame{0, rgb});
  CHECK(g.channels() == 1);
  CHECK(g.image.pixels(0, 0) == 255);
  CHECK(g.image.pixels(0, 1) == 76);
  const Frame again = to_grayscale(g);
  CHECK((again.image.pixels == g.image.pixels).all());
}

TEST_CASE("png and ppm round trip") {
  fixtures::TempDir dir;
  RawImage rgb{3, ImageU8(5, 12)};
  for (Eigen::Index i = 0; i < rgb.pixels.size(); ++i) rgb.pixels.data()[i] = static_cast<std::uint8_t>(i * 7);
  for (const char* name : {"a.png", "a.ppm"}) {
    write_image(dir / name, rgb);
    const RawImage back = read_image(dir / name);
    CHECK(back.channels == 3);
    CHECK((back.pixels == rgb.pixels).all());
  }
  const ImageU8 g = fixtures::texture(9, 13);
  for (const char* name : {"g.png", "g.pgm"}) {
    write_gray(dir / name, g);
    CHECK((read_image(dir / name).pixels == g).all());
  }
}

TEST_CASE("detections") {
  fixtures::TempDir dir;
  SUBCASE("empty file") {
    std::ofstream(dir / "d.txt");
    CHECK(load_detections(dir / "d.txt", DetectionSource::original).size() == 0);
  }
  SUBCASE("round trip") {
    DetectionSet set;
    set.add({5, {1, 2, 3, 4}, 0.9});
    write_detections(dir / "d.txt", set);
    const DetectionSet back = load_detections(dir / "d.txt", DetectionSource::original);
    REQUIRE(back.at(5).size() == 1);
    CHECK(back.at(5)[0] == Detection{5, {1, 2, 3, 4}, 0.9});
    CHECK(back == set);
    CHECK(back.at(4).empty());
  }
  SUBCASE("score out of range names the line") {
    std::ofstream(dir / "d.txt") << "1 0 0 2 2 0.5\n2 0 0 2 2 1.5\n";
    try {
      load_detections(dir / "d.txt", DetectionSource::original);
      FAIL("expected a load error");
    } catch (const LoadError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }
  SUBCASE("frame beyond the video") {
    std::ofstream(dir / "d.txt") << "10 0 0 2 2 0.5\n";
    CHECK_THROWS_AS(load_detections(dir / "d.txt", DetectionSource::original, 10), LoadError);
  }
}

TEST_CASE("ground truth round trip") {
  fixtures::TempDir dir;
  const std::vector<GroundTruth> gt{{"synth01", 100.0}, {"synth02", 12.5}};
  write_ground_truth(dir / "gt.txt", gt);
  std::ifstream in(dir / "gt.txt");
  std::string first;
  std::getline(in, first);
  CHECK(first == "synth01 100.0");
  const auto back = load_ground_truth(dir / "gt.txt");
  REQUIRE(back.size() == 2);
  CHECK(back[1].video_id == "synth02");
  CHECK(back[1].start_seconds == 12.5);
}
