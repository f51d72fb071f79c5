#include <doctest.h>

#include "stalltrace/pixel_tracker.hpp"
#include "stalltrace/road_mask.hpp"

using namespace stalltrace;

namespace {

constexpr double kFps = 30.0;
constexpr int kStride = 120;  // background stream sampling

// Feeds `seconds` of background samples, the box present while `present(frame)` holds.
template <typename Present>
void feed(PixelStateGrid& g, const BBox& box, std::int64_t from, std::int64_t to, Present present,
          const PixelTrackerParams& p = {}) {
  for (std::int64_t f = from; f <= to; f += kStride) {
    std::vector<Detection> dets;
    if (present(f)) dets.push_back({f, box, 0.9});
    pixel_update(g, dets, f, p, kFps);
  }
}

}  // namespace

TEST_CASE("no detections keep every pixel normal") {
  PixelStateGrid g(20, 30);
  feed(g, {}, 0, 3000, [](std::int64_t) { return false; });
  CHECK((g.state == 0).all());
  CHECK((g.start == -1).all());
}

TEST_CASE("a 70 s static box becomes anomalous") {
  PixelStateGrid g(100, 150);
  const BBox box{40, 30, 100, 58};
  const std::int64_t first = 1200;
  feed(g, box, first, first + 70 * 30, [](std::int64_t) { return true; });
  CHECK((g.state.block(30, 40, 28, 60) == static_cast<std::uint8_t>(PixelState::anomalous)).all());
  CHECK(g.state.cast<int>().sum() == 2 * 28 * 60);
  CHECK(g.start(40, 60) == first);
  CHECK(g.score(40, 60) == doctest::Approx(0.9));

  const auto ev = extract_pixel_anomalies(g, RoadMask::everywhere(100, 150), std::vector<Detection>{{0, box, 0.9}}, kFps, "v");
  REQUIRE(ev.size() == 1);
  CHECK(iou(ev[0].bbox, box) >= 0.5);
  CHECK(ev[0].start_time.seconds == doctest::Approx(40.0));
  CHECK(ev[0].branch == Branch::pixel);
}

TEST_CASE("a 45 s box reaches suspicious only, then resets") {
  PixelStateGrid g(60, 80);
  const BBox box{10, 10, 40, 30};
  bool saw_suspicious = false, saw_anomalous = false;
  for (std::int64_t f = 0; f <= 90 * 30; f += kStride) {
    std::vector<Detection> dets;
    if (f <= 45 * 30) dets.push_back({f, box, 0.9});
    pixel_update(g, dets, f, {}, kFps);
    saw_suspicious = saw_suspicious || g.state(20, 20) == static_cast<std::uint8_t>(PixelState::suspicious);
    saw_anomalous = saw_anomalous || g.state(20, 20) == static_cast<std::uint8_t>(PixelState::anomalous);
  }
  CHECK(saw_suspicious);
  CHECK_FALSE(saw_anomalous);
  CHECK(g.state(20, 20) == static_cast<std::uint8_t>(PixelState::normal));
  CHECK(g.start(20, 20) == -1);
}

TEST_CASE("a gap within the miss tolerance keeps the run alive") {
  PixelTrackerParams p;
  p.miss_tolerance_s = 5.0;
  PixelStateGrid g(30, 30);
  feed(g, {5, 5, 20, 20}, 0, 70 * 30, [](std::int64_t f) { return f != 1200; }, p);
  CHECK(g.start(10, 10) == 0);
  CHECK(g.state(10, 10) == static_cast<std::uint8_t>(PixelState::anomalous));
}

TEST_CASE("low-score detections do not count") {
  PixelStateGrid g(30, 30);
  pixel_update(g, std::vector<Detection>{{0, {0, 0, 10, 10}, 0.1}}, 0, {}, kFps);
  CHECK((g.detected == 0).all());
}

TEST_CASE("pixel anomalies off the road are ignored") {
  PixelStateGrid g(60, 80);
  feed(g, {10, 10, 40, 30}, 0, 70 * 30, [](std::int64_t) { return true; });
  Mask m = Mask::Zero(60, 80);
  m.bottomRows(20).setOnes();
  CHECK(extract_pixel_anomalies(g, RoadMask(m, ImageI(), ImageI()), {}, kFps, "v").empty());
}

TEST_CASE("two disjoint static vehicles give two events") {
  PixelStateGrid g(100, 200);
  const BBox a{10, 10, 70, 38}, b{120, 50, 180, 78};
  for (std::int64_t f = 0; f <= 70 * 30; f += kStride) {
    pixel_update(g, std::vector<Detection>{{f, a, 0.9}, {f, b, 0.8}}, f, {}, kFps);
  }
  const auto ev = extract_pixel_anomalies(g, RoadMask::everywhere(100, 200),
                                          std::vector<Detection>{{0, a, 0.9}, {0, b, 0.8}}, kFps, "v");
  REQUIRE(ev.size() == 2);
  CHECK(ev[0].bbox != ev[1].bbox);
  CHECK((iou(ev[0].bbox, a) == 1.0 || iou(ev[0].bbox, b) == 1.0));
}

TEST_CASE("pixel parameters are validated") {
  PixelTrackerParams p;
  p.suspicious_duration_s = 70;
  CHECK_THROWS_AS(p.validate(), Error);
}
