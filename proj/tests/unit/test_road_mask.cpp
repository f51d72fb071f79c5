#include <doctest.h>

#include "stalltrace/box_tracker.hpp"
#include "stalltrace/road_mask.hpp"
#include "stalltrace/scenario.hpp"

using namespace stalltrace;

TEST_CASE("identical frames leave the accumulator unchanged") {
  ImageI acc = ImageI::Zero(30, 40);
  const ImageU8 f = ImageU8::Constant(30, 40, 70);
  CHECK(motion_mask_update(acc, f, f, {}) == MotionUpdate::accumulated);
  CHECK((acc == 0).all());
}

TEST_CASE("a moved block accumulates at both positions") {
  ImageU8 a = ImageU8::Constant(40, 60, 50), b = a;
  a.block(10, 10, 10, 10).setConstant(200);
  b.block(10, 15, 10, 10).setConstant(200);
  ImageI acc = ImageI::Zero(40, 60);
  MotionMaskParams p;
  p.t2 = 20;
  CHECK(motion_mask_update(acc, b, a, p) == MotionUpdate::accumulated);
  // Changed columns: 10..14 (old only) and 20..24 (new only).
  CHECK(acc.sum() == 100);
  CHECK((acc.block(10, 10, 10, 5) == 1).all());
  CHECK((acc.block(10, 20, 10, 5) == 1).all());
  CHECK((acc.block(10, 15, 10, 5) == 0).all());
}

TEST_CASE("small regions are dropped by T2") {
  ImageU8 a = ImageU8::Constant(40, 60, 50), b = a;
  b.block(5, 5, 3, 3).setConstant(200);
  ImageI acc = ImageI::Zero(40, 60);
  motion_mask_update(acc, b, a, {});
  CHECK((acc == 0).all());
}

TEST_CASE("a global brightness jump is treated as shaking") {
  ImageU8 a = ImageU8::Constant(40, 60, 50), b = a;
  b.block(0, 0, 36, 60).setConstant(120);
  ImageI acc = ImageI::Zero(40, 60);
  CHECK(motion_mask_update(acc, b, a, {}) == MotionUpdate::skipped_shake);
  CHECK((acc == 0).all());
}

TEST_CASE("large but local change trips the area filter") {
  ImageU8 a = ImageU8::Constant(200, 200, 50), b = a;
  b.block(0, 0, 80, 80).setConstant(120);
  ImageI acc = ImageI::Zero(200, 200);
  CHECK(motion_mask_update(acc, b, a, {}) == MotionUpdate::skipped_area);
}

TEST_CASE("trajectory accumulator") {
  SUBCASE("no tracks") {
    ImageI acc = ImageI::Zero(20, 20);
    trajectory_mask_update(acc, {});
    CHECK((acc == 0).all());
  }
  SUBCASE("a left-to-right crossing covers its corridor") {
    Track t;
    for (int f = 0; f < 100; ++f) t.history.push_back({f, BBox{f * 2.0, 100, f * 2.0 + 20, 130}, 0.9});
    ImageI acc = ImageI::Zero(200, 240);
    trajectory_mask_update(acc, std::vector<Track>{t});
    CHECK((acc.block(100, 0, 30, 218) > 0).all());
    CHECK((acc.topRows(100) == 0).all());
    CHECK((acc.bottomRows(70) == 0).all());
  }
  SUBCASE("a parked track only covers its footprint") {
    Track t;
    for (int f = 0; f < 10; ++f) t.history.push_back({f, BBox{5, 6, 15, 12}, 0.9});
    ImageI acc = ImageI::Zero(20, 20);
    trajectory_mask_update(acc, std::vector<Track>{t});
    CHECK((acc.block(6, 5, 6, 10) == 10).all());
    CHECK(acc.sum() == 600);
  }
}

TEST_CASE("fusion is an intersection") {
  RoadMaskParams p;
  p.dilate_iters = 0;
  p.erode_iters = 0;
  ImageI motion = ImageI::Zero(30, 30), traj = ImageI::Zero(30, 30);
  motion.block(10, 0, 10, 30).setConstant(9);  // road
  motion.block(0, 0, 5, 30).setConstant(9);    // trees in the wind
  traj.block(10, 0, 10, 30).setConstant(9);
  const RoadMask m = fuse_masks(motion, traj, p);
  CHECK(m.area() == 300);
  CHECK(m.contains({3, 15}));
  CHECK_FALSE(m.contains({3, 2}));
  CHECK_FALSE(m.contains({-1, 15}));

  ImageI other = ImageI::Zero(30, 30);
  other.block(25, 0, 5, 30).setConstant(9);
  CHECK(fuse_masks(motion, other, p).area() == 0);
}

TEST_CASE("repair of an empty mask") {
  CHECK(morph_repair(Mask::Zero(10, 10), 2, 2, 5).cast<int>().sum() == 0);
}

TEST_CASE("two-lane scene yields a mask close to the rendered road") {
  // Short excerpt of the two-lane preset; the road is visited by many vehicles within 40 s.
  Scenario s = make_preset("two-lane");
  s.frame_count = 40 * 30;
  const RoadMaskParams p;
  ImageI motion = ImageI::Zero(s.height, s.width);
  std::vector<ImageU8> ring(static_cast<std::size_t>(p.motion.k + 1));
  BoxTracker tracker;
  const DetectionSet dets = original_detections(s);
  for (std::int64_t f = 0; f < s.frame_count; ++f) {
    const ImageU8 g = render_frame(s, f);
    if (f >= p.motion.k) motion_mask_update(motion, g, ring[static_cast<std::size_t>((f - p.motion.k) % (p.motion.k + 1))], p.motion);
    ring[static_cast<std::size_t>(f % (p.motion.k + 1))] = g;
    tracker.step(dets.at(f), f);
  }
  ImageI traj = ImageI::Zero(s.height, s.width);
  trajectory_mask_update(traj, tracker.tracks());
  const RoadMask m = fuse_masks(motion, traj, p);
  const double truth = static_cast<double>((s.road != 0).count());
  const double inter = static_cast<double>(((m.mask() != 0) && (s.road != 0)).count());
  CHECK(std::abs(static_cast<double>(m.area()) - truth) / truth <= 0.05);
  CHECK(inter / truth >= 0.9);
}
