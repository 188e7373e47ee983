#include <doctest.h>

#include <cmath>
#include <numbers>

#include "posefield/error.hpp"
#include "posefield/scene.hpp"

using namespace posefield;

namespace {

ToyScene plain_room() {
  ToyScene s;
  s.wall_colors = {Color{0.9, 0.3, 0.6}, Color{0.2, 0.8, 0.1}, Color{0.5, 0.5, 0.9}, Color{0.7, 0.1, 0.3}};
  s.floor = {0.2, 0.2, 0.2};
  s.ceiling = {0.8, 0.8, 0.8};
  return s;
}

Pose toy_pose(double x, double y, double alpha) {
  Pose p;
  p[Dof::x] = x;
  p[Dof::y] = y;
  p[Dof::alpha] = alpha;
  return p;
}

Pose turn_pose(double theta, double phi) {
  Pose p;
  p[Dof::alpha] = theta;
  p[Dof::beta] = phi;
  return p;
}

double mean_abs_diff(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) s += std::abs(a.pixels[i] - b.pixels[i]);
  return s / static_cast<double>(a.pixels.size());
}

}  // namespace

TEST_CASE("toyroom center pixel facing north is the north wall at distance 1") {
  const ToyScene s = plain_room();
  const Image img = render_toyroom(s, toy_pose(1.0, 1.0, std::numbers::pi / 2), 25, 25);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    CHECK(img.at(12, 12, ch) == doctest::Approx(s.wall_colors[0][ch] / 1.5).epsilon(1e-6));
  }
}

TEST_CASE("toyroom columns above and below the wall band are ceiling and floor") {
  const ToyScene s = plain_room();
  const Image img = render_toyroom(s, toy_pose(1.0, 1.0, 0.0), 9, 31);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    CHECK(img.at(0, 4, ch) == doctest::Approx(s.ceiling[ch]).epsilon(1e-6));
    CHECK(img.at(30, 4, ch) == doctest::Approx(s.floor[ch]).epsilon(1e-6));
  }
}

TEST_CASE("toyroom rendering is deterministic and 2π periodic") {
  Rng rng = make_rng(11);
  const ToyScene s = random_toy_scene(rng);
  const Pose p = toy_pose(0.7, 1.3, 2.1);
  CHECK(render_toyroom(s, p, 24, 24) == render_toyroom(s, p, 24, 24));
  CHECK(render_toyroom(s, p, 24, 24) == render_toyroom(s, toy_pose(0.7, 1.3, 2.1 + kTwoPi), 24, 24));
}

TEST_CASE("toyroom rejects poses closer than the margin") {
  const ToyScene s = plain_room();
  CHECK_THROWS_AS(render_toyroom(s, toy_pose(0.05, 1.0, 0.0), 8, 8), RangeError);
  CHECK_THROWS_AS(render_toyroom(s, toy_pose(1.0, 1.95, 0.0), 8, 8), RangeError);
  CHECK_NOTHROW(render_toyroom(s, toy_pose(0.1, 1.9, 0.0), 8, 8));
}

TEST_CASE("toyroom poses are identifiable") {
  // Two poses ≥ 0.2 m or ≥ 10° apart differ by > 0.01 mean abs pixel on ≥ 95% of pairs.
  Rng rng = make_rng(5);
  const ToyScene s = random_toy_scene(rng);
  int distinct = 0;
  const int pairs = 200;
  for (int i = 0; i < pairs; ++i) {
    const Pose a = sample_pose(SceneKind::toyroom, rng);
    Pose b = a;
    if (i % 2 == 0) {
      const double ang = uniform(rng, 0.0, kTwoPi);
      b[Dof::x] = std::clamp(a[Dof::x] + 0.2 * std::cos(ang), 0.1, 1.9);
      b[Dof::y] = std::clamp(a[Dof::y] + 0.2 * std::sin(ang), 0.1, 1.9);
      if (std::hypot(b[Dof::x] - a[Dof::x], b[Dof::y] - a[Dof::y]) < 0.2) {
        b[Dof::x] = a[Dof::x] < 1.0 ? a[Dof::x] + 0.2 : a[Dof::x] - 0.2;
      }
    } else {
      b[Dof::alpha] = wrap_angle(a[Dof::alpha] + (rng() % 2 ? 1 : -1) * radians(10.0));
    }
    if (mean_abs_diff(render_toyroom(s, a, 24, 24), render_toyroom(s, b, 24, 24)) > 0.01) ++distinct;
  }
  CHECK(distinct >= 190);
}

TEST_CASE("turntable single point at the origin stays centered") {
  TurntableScene s;
  s.blobs.push_back({{0.0, 0.0, 0.0}, 0.15, {1.0, 1.0, 1.0}});
  for (double theta : {0.0, 1.0, 2.5, 4.0}) {
    const Image img = render_turntable(s, turn_pose(theta, 0.0), 24, 24);
    double wx = 0.0, wy = 0.0, w = 0.0;
    for (std::size_t r = 0; r < 24; ++r) {
      for (std::size_t c = 0; c < 24; ++c) {
        const double v = img.at(r, c, 0);
        wx += v * (static_cast<double>(c) + 0.5);
        wy += v * (static_cast<double>(r) + 0.5);
        w += v;
      }
    }
    REQUIRE(w > 0.0);
    CHECK(wx / w == doctest::Approx(12.0).epsilon(1e-9));
    CHECK(wy / w == doctest::Approx(12.0).epsilon(1e-9));
  }
}

TEST_CASE("turntable is deterministic, 2π periodic and rejects steep elevation") {
  Rng rng = make_rng(3);
  const TurntableScene s = random_turntable_scene(rng);
  CHECK(s.blobs.size() == 20);
  for (const auto& b : s.blobs) {
    CHECK(std::hypot(b.position[0], b.position[1], b.position[2]) <= 1.0);
    CHECK(b.radius >= 0.05);
    CHECK(b.radius <= 0.15);
  }
  CHECK(render_turntable(s, turn_pose(0.0, 0.0), 24, 24) == render_turntable(s, turn_pose(0.0, 0.0), 24, 24));
  CHECK(render_turntable(s, turn_pose(1.3, 0.4), 24, 24) ==
        render_turntable(s, turn_pose(1.3 + kTwoPi, 0.4), 24, 24));
  CHECK_THROWS_AS(render_turntable(s, turn_pose(0.0, 1.1), 8, 8), RangeError);
}

TEST_CASE("every rendered value lies in [0, 1]") {
  Rng rng = make_rng(21);
  for (int i = 0; i < 20; ++i) {
    const ToyScene toy = random_toy_scene(rng);
    const TurntableScene turn = random_turntable_scene(rng);
    for (float v : render_toyroom(toy, sample_pose(SceneKind::toyroom, rng), 16, 16).pixels) {
      CHECK((v >= 0.0f && v <= 1.0f));
    }
    for (float v : render_turntable(turn, sample_pose(SceneKind::turntable, rng), 16, 16).pixels) {
      CHECK((v >= 0.0f && v <= 1.0f));
    }
  }
}

TEST_CASE("kind names round-trip and unknown kinds name the field") {
  CHECK(parse_kind(kind_name(SceneKind::toyroom)) == SceneKind::toyroom);
  CHECK(parse_kind(kind_name(SceneKind::turntable)) == SceneKind::turntable);
  try {
    parse_kind("garage");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("kind") != std::string::npos);
  }
}
