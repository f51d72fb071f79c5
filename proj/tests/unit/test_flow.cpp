#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "stalltrace/flow_tracer.hpp"

using namespace stalltrace;

TEST_CASE("lucas-kanade recovers an integer translation") {
  const ImageU8 a = fixtures::texture(120, 160, 3);
  const ImageU8 b = oracles::shifted(a, 2, 0);
  const auto seeds = seed_points({40, 30, 120, 90}, a, {});
  REQUIRE(seeds.size() == 50);
  const auto out = lk_step(a, b, seeds, {});
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    REQUIRE(out[i].tracked);
    CHECK(out[i].pos.x() - seeds[i].pos.x() == doctest::Approx(2.0).epsilon(0.1));
    CHECK(std::abs(out[i].pos.y() - seeds[i].pos.y()) <= 0.2);
  }
  const ImageU8 c = oracles::shifted(a, -3, 4);
  const auto moved = lk_step(a, c, seeds, {});
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    CHECK(std::abs(moved[i].pos.x() - seeds[i].pos.x() + 3.0) <= 0.2);
    CHECK(std::abs(moved[i].pos.y() - seeds[i].pos.y() - 4.0) <= 0.2);
  }
}

TEST_CASE("static frames give zero flow") {
  const ImageU8 a = fixtures::texture(80, 80, 4);
  const auto seeds = seed_points({10, 10, 70, 70}, a, {});
  const auto out = lk_step(a, a, seeds, {});
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    CHECK((out[i].pos - seeds[i].pos).norm() <= 0.05);
  }
}

TEST_CASE("featureless regions are not tracked") {
  const ImageU8 flat = ImageU8::Constant(60, 60, 100);
  const std::vector<FlowPoint> p{{Eigen::Vector2d(30, 30), true}};
  CHECK_FALSE(lk_step(flat, flat, p, {})[0].tracked);
}

TEST_CASE("seed points") {
  SUBCASE("textured box") {
    const ImageU8 a = fixtures::texture(100, 100, 5);
    const BBox box{20, 30, 80, 58};
    const auto pts = seed_points(box, a, {});
    CHECK(pts.size() == 50);
    for (const FlowPoint& p : pts) {
      CHECK(p.pos.x() >= box.x1);
      CHECK(p.pos.x() < box.x2);
      CHECK(p.pos.y() >= box.y1);
      CHECK(p.pos.y() < box.y2);
    }
  }
  SUBCASE("constant box") {
    CHECK(seed_points({10, 10, 50, 50}, ImageU8::Constant(60, 60, 50), {}).empty());
  }
  SUBCASE("checkerboard") {
    ImageU8 a(96, 96);
    for (int y = 0; y < 96; ++y) {
      for (int x = 0; x < 96; ++x) a(y, x) = ((x / 12 + y / 12) % 2) ? 220 : 30;
    }
    const auto pts = seed_points({18, 18, 78, 78}, a, {});
    REQUIRE_FALSE(pts.empty());
    for (const FlowPoint& p : pts) {
      const double gx = std::round(p.pos.x() / 12.0) * 12.0, gy = std::round(p.pos.y() / 12.0) * 12.0;
      CHECK(std::hypot(p.pos.x() - gx, p.pos.y() - gy) <= 2.0);
    }
  }
  SUBCASE("box outside the frame") {
    CHECK_THROWS_AS(seed_points({200, 200, 260, 228}, ImageU8::Zero(50, 50), {}), DimensionError);
  }
}

TEST_CASE("knn filter examples") {
  SUBCASE("identical displacements") {
    const Eigen::MatrixX2d p = Eigen::MatrixX2d::Constant(20, 2, 3.0);
    const auto r = knn_outlier_filter(p, 6, 6.6);
    CHECK(std::all_of(r.inlier.begin(), r.inlier.end(), [](char c) { return c == 1; }));
  }
  SUBCASE("one far point") {
    std::mt19937 rng(1);
    std::normal_distribution<double> n(0.0, 0.5);
    Eigen::MatrixX2d p(50, 2);
    for (int i = 0; i < 49; ++i) p.row(i) << 3 + n(rng), n(rng);
    p.row(49) << 103, 0;
    const auto r = knn_outlier_filter(p, 6, 6.6);
    CHECK(r.inlier[49] == 0);
    CHECK(std::count(r.inlier.begin(), r.inlier.end(), 1) == 49);
  }
  SUBCASE("two clusters three apart") {
    Eigen::MatrixX2d p(14, 2);
    for (int i = 0; i < 7; ++i) {
      p.row(i) << 0, 0;
      p.row(7 + i) << 3, 0;
    }
    const auto r = knn_outlier_filter(p, 6, 6.6);
    CHECK(std::all_of(r.inlier.begin(), r.inlier.end(), [](char c) { return c == 1; }));
  }
  SUBCASE("too few points pass unfiltered") {
    const Eigen::MatrixX2d p = Eigen::MatrixX2d::Random(5, 2) * 100;
    const auto r = knn_outlier_filter(p, 6, 6.6);
    CHECK_FALSE(r.filtered);
    CHECK(std::all_of(r.inlier.begin(), r.inlier.end(), [](char c) { return c == 1; }));
  }
}

TEST_CASE("knn filter matches brute force on random sets") {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> u(-12, 12);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 7 + trial % 60;
    Eigen::MatrixX2d p(n, 2);
    for (int i = 0; i < n; ++i) p.row(i) << u(rng), u(rng);
    CHECK(knn_outlier_filter(p, 6, 6.6).inlier == oracles::brute_knn(p, 6, 6.6));
  }
}

TEST_CASE("peak suppression") {
  const std::vector<int> ranks{0, 2, 4, 6};
  SUBCASE("constant series") {
    const std::vector<double> s(50, 3.0);
    CHECK(peak_suppress(s, 5, ranks) == s);
  }
  SUBCASE("isolated impulse") {
    std::vector<double> s(50, 3.0);
    s[20] = 15;
    const auto out = peak_suppress(s, 5, ranks);
    CHECK(out[20] == 0.0);
    CHECK(out[21] == 3.0);
  }
  SUBCASE("wide spike survives") {
    std::vector<double> s(60, 3.0);
    for (int i = 20; i <= 30; ++i) s[static_cast<std::size_t>(i)] = 12.0;
    CHECK(peak_suppress(s, 5, ranks) == s);
  }
}

TEST_CASE("moving window detection") {
  SUBCASE("constant series") {
    const std::vector<double> s(200, 3.0);
    CHECK_FALSE(moving_window_detect(s, 60, 2.5).has_value());
  }
  SUBCASE("one-frame spike") {
    std::vector<double> s(200, 3.0);
    s[123] = 12.0;
    CHECK(moving_window_detect(s, 60, 2.5) == 123);
  }
  SUBCASE("slow ramp") {
    std::vector<double> s(390);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = 3.0 * static_cast<double>(i) / 389.0;
    CHECK_FALSE(moving_window_detect(s, 60, 2.5).has_value());
  }
  SUBCASE("the stop itself is not drastic") {
    std::vector<double> s(300, 0.0);
    for (std::size_t i = 0; i < 200; ++i) s[i] = 3.0;
    CHECK_FALSE(moving_window_detect(s, 60, 2.5).has_value());
  }
  SUBCASE("too short") {
    const std::vector<double> s(10, 1.0);
    CHECK_THROWS_AS(moving_window_detect(s, 60, 2.5), Error);
  }
}

namespace {

// Textured vehicle on a plain road: constant 3 px/frame, stopping at frame `stop`; an optional
// lateral 8 px/frame jerk for 5 frames starting at `jerk`.
struct TraceScene {
  std::int64_t stop = 500;
  std::int64_t jerk = -1;
  ImageU8 sprite = fixtures::texture(28, 60, 23);

  [[nodiscard]] Eigen::Vector2d pos(std::int64_t f) const {
    const double x = 1250.0 - 3.0 * static_cast<double>(std::max<std::int64_t>(stop - f, 0));
    double y = 60;
    if (jerk >= 0) y += 8.0 * std::clamp<double>(static_cast<double>(f - jerk), 0.0, 5.0) - 40.0;
    return {x, y};
  }
  [[nodiscard]] ImageU8 render(std::int64_t f) const {
    ImageU8 img = ImageU8::Constant(160, 1400, 90);
    const Eigen::Vector2d p = pos(f);
    fixtures::paste(img, sprite, static_cast<int>(p.x()), static_cast<int>(p.y()));
    return img;
  }
  [[nodiscard]] BBox box() const {
    const Eigen::Vector2d p = pos(stop);
    return {p.x(), p.y(), p.x() + 60, p.y() + 28};
  }
};

}  // namespace

TEST_CASE("backward trace of a static vehicle") {
  TraceScene scene;
  scene.stop = 0;  // parked from the start
  const fixtures::FunctionFrameSource frames(160, 1400, 500, 30.0, [&](std::int64_t f) { return scene.render(f); });
  const VelocitySeries s = backward_trace(scene.box(), 450, frames, {});
  REQUIRE(s.size() == 390);
  CHECK(s.frame.front() == 450 - 389);
  CHECK(s.frame.back() == 450);
  CHECK(*std::max_element(s.m.begin(), s.m.end()) < 0.1);
}

TEST_CASE("backward trace of a vehicle that stops") {
  TraceScene scene;
  const fixtures::FunctionFrameSource frames(160, 1400, 700, 30.0, [&](std::int64_t f) { return scene.render(f); });
  const VelocitySeries s = backward_trace(scene.box(), 600, frames, {});
  REQUIRE(s.size() == 390);
  std::size_t drop = s.size();
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.frame[i] < scene.stop - 5 && s.frame[i] > scene.stop - 90) CHECK(s.m[i] == doctest::Approx(3.0).epsilon(0.1));
    if (s.frame[i] > scene.stop + 5) CHECK(s.m[i] < 0.2);
    if (drop == s.size() && s.frame[i] > 400 && s.m[i] < 1.5) drop = i;
  }
  REQUIRE(drop < s.size());
  CHECK(std::abs(s.frame[drop] - scene.stop) <= 3);
  CHECK(s.u[s.size() - 200] > 0);  // forward motion is +x
  CHECK_FALSE(locate_crash_frame(s, {}).has_value());
}

TEST_CASE("backward trace shows the crash jerk") {
  TraceScene scene;
  scene.jerk = 420;
  const fixtures::FunctionFrameSource frames(160, 1400, 700, 30.0, [&](std::int64_t f) { return scene.render(f); });
  const VelocitySeries s = backward_trace(scene.box(), 600, frames, {});
  REQUIRE(s.size() == 390);
  double spike = 0;
  std::int64_t at = -1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.m[i] > spike) {
      spike = s.m[i];
      at = s.frame[i];
    }
  }
  CHECK(spike >= 2 * 3.0);
  CHECK(std::abs(at - scene.jerk) <= 5);
  const auto crash = locate_crash_frame(s, {});
  REQUIRE(crash.has_value());
  CHECK(std::abs(*crash - scene.jerk) <= 5);
}

TEST_CASE("the active point set never grows while tracing back") {
  TraceScene scene;
  scene.jerk = 420;
  const fixtures::FunctionFrameSource frames(160, 1400, 700, 30.0, [&](std::int64_t f) { return scene.render(f); });
  const VelocitySeries s = backward_trace(scene.box(), 600, frames, {});
  REQUIRE(s.size() > 1);
  // Chronological order, so counts can only rise toward the stop frame where tracing began.
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s.active[i - 1] <= s.active[i]);
}

TEST_CASE("tracing a 90 degree rotated scene swaps the flow components") {
  TraceScene scene;
  const int h = 160, w = 1400;
  const fixtures::FunctionFrameSource frames(h, w, 700, 30.0, [&](std::int64_t f) { return scene.render(f); });
  // (x, y) -> (h - 1 - y, x): a motion (u, v) becomes (-v, u).
  const fixtures::FunctionFrameSource turned(w, h, 700, 30.0, [&](std::int64_t f) {
    const ImageU8 img = scene.render(f);
    ImageU8 out(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out(x, h - 1 - y) = img(y, x);
    }
    return out;
  });
  const BBox b = scene.box();
  const BBox rb{h - b.y2, b.x1, h - b.y1, b.x2};
  const VelocitySeries s = backward_trace(b, 600, frames, {});
  const VelocitySeries r = backward_trace(rb, 600, turned, {});
  REQUIRE(s.size() == r.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(r.m[i] == doctest::Approx(s.m[i]).epsilon(0.02).scale(1.0));
    CHECK(r.u[i] == doctest::Approx(-s.v[i]).epsilon(0.02).scale(1.0));
    CHECK(r.v[i] == doctest::Approx(s.u[i]).epsilon(0.02).scale(1.0));
  }
}

TEST_CASE("tracking forward then back returns to the seed") {
  const ImageU8 a = fixtures::texture(120, 160, 5);
  const ImageU8 b = oracles::shifted(a, -2, 1);
  const auto seeds = seed_points({40, 30, 120, 90}, a, {});
  const auto there = lk_step(a, b, seeds, {});
  const auto back = lk_step(b, a, there, {});
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    REQUIRE(back[i].tracked);
    CHECK((back[i].pos - seeds[i].pos).norm() <= 0.5);
  }
}

TEST_CASE("backward trace abstains without texture") {
  const fixtures::FunctionFrameSource frames(60, 60, 10, 30.0, [](std::int64_t) { return ImageU8::Constant(60, 60, 9); });
  CHECK(backward_trace({10, 10, 40, 30}, 9, frames, {}).empty());
}

TEST_CASE("velocity series dump") {
  fixtures::TempDir dir;
  VelocitySeries s;
  s.frame = {4, 5};
  s.u = {1, 2};
  s.v = {0, 0};
  s.m = {1, 2};
  s.active = {50, 49};
  write_velocity_series(dir / "v.tsv", s);
  std::ifstream in(dir / "v.tsv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "frame\tu\tv\tm\tactive");
  CHECK(row == "4\t1\t0\t1\t50");
}
