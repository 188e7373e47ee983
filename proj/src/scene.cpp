#include "posefield/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "posefield/error.hpp"

namespace posefield {

std::string_view kind_name(SceneKind kind) {
  return kind == SceneKind::toyroom ? "toyroom" : "turntable";
}

SceneKind parse_kind(std::string_view name) {
  if (name == "toyroom") return SceneKind::toyroom;
  if (name == "turntable") return SceneKind::turntable;
  throw ConfigError("kind: unknown dataset kind '" + std::string(name) +
                    "' (expected toyroom or turntable)");
}

std::vector<Dof> active_dofs(SceneKind kind) {
  if (kind == SceneKind::toyroom) return {Dof::x, Dof::y, Dof::alpha};
  return {Dof::alpha, Dof::beta};
}

std::vector<std::string> dof_columns(SceneKind kind) {
  if (kind == SceneKind::toyroom) return {"x", "y", "alpha"};
  return {"theta", "phi"};
}

std::vector<std::array<double, 2>> pose_ranges(SceneKind kind) {
  if (kind == SceneKind::toyroom) {
    return {{kRoomMargin, kRoomSize - kRoomMargin},
            {kRoomMargin, kRoomSize - kRoomMargin},
            {0.0, kTwoPi}};
  }
  return {{0.0, kTwoPi}, {-kElevationLimit, kElevationLimit}};
}

namespace {

Color random_color(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

}  // namespace

ToyScene random_toy_scene(Rng& rng) {
  ToyScene s;
  std::uniform_int_distribution<int> stripes(0, 4);
  std::uniform_int_distribution<int> pillar_count(0, 3);
  for (std::size_t w = 0; w < 4; ++w) {
    s.wall_colors[w] = random_color(rng);
    s.stripe_counts[w] = stripes(rng);
    s.stripe_colors[w] = random_color(rng);
  }
  const int n = pillar_count(rng);
  for (int i = 0; i < n; ++i) {
    Pillar p;
    p.half_width = uniform(rng, 0.05, 0.15);
    p.cx = uniform(rng, 0.3, kRoomSize - 0.3);
    p.cy = uniform(rng, 0.3, kRoomSize - 0.3);
    p.height_fraction = uniform(rng, 0.3, 0.9);
    p.color = random_color(rng);
    s.pillars.push_back(p);
  }
  s.floor = random_color(rng, 0.0, 0.6);
  s.ceiling = random_color(rng, 0.4, 1.0);
  return s;
}

namespace {

struct WallHit {
  double t = std::numeric_limits<double>::infinity();
  int wall = 0;
  double u = 0.0;  // coordinate along the wall
};

WallHit hit_walls(double x, double y, double dx, double dy) {
  WallHit hit;
  auto consider = [&](double t, int wall) {
    if (t > 0.0 && t < hit.t) {
      hit.t = t;
      hit.wall = wall;
    }
  };
  if (dy > 0.0) consider((kRoomSize - y) / dy, 0);
  if (dx > 0.0) consider((kRoomSize - x) / dx, 1);
  if (dy < 0.0) consider(-y / dy, 2);
  if (dx < 0.0) consider(-x / dx, 3);
  const double hx = x + hit.t * dx, hy = y + hit.t * dy;
  hit.u = std::clamp((hit.wall == 0 || hit.wall == 2) ? hx : hy, 0.0, kRoomSize);
  return hit;
}

// Entry distance of a ray into an axis-aligned square; infinity on a miss or
// when the ray starts inside.
double hit_pillar(const Pillar& p, double x, double y, double dx, double dy) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  const double lo[2] = {p.cx - p.half_width, p.cy - p.half_width};
  const double hi[2] = {p.cx + p.half_width, p.cy + p.half_width};
  const double o[2] = {x, y};
  const double d[2] = {dx, dy};
  for (int a = 0; a < 2; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t0 = (lo[a] - o[a]) / d[a];
    double t1 = (hi[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_near <= 0.0) return std::numeric_limits<double>::infinity();
  return t_near;
}

bool in_stripe(int count, double u) {
  if (count <= 0) return false;
  const double w = kRoomSize / (2.0 * count + 1.0);
  const auto k = static_cast<long>(std::floor(u / w));
  return k % 2 == 1 && k <= 2L * count - 1;
}

void paint(Image& img, std::size_t row, std::size_t col, const Color& c, double shade) {
  for (std::size_t ch = 0; ch < 3; ++ch) {
    img.at(row, col, ch) = static_cast<float>(std::clamp(c[ch] * shade, 0.0, 1.0));
  }
}

}  // namespace

Image render_toyroom(const ToyScene& scene, const Pose& pose, std::size_t width,
                     std::size_t height) {
  const double x = pose[Dof::x], y = pose[Dof::y];
  const double lo = kRoomMargin, hi = kRoomSize - kRoomMargin;
  if (!(x >= lo && x <= hi && y >= lo && y <= hi)) {
    throw RangeError("toyroom camera (" + std::to_string(x) + ", " + std::to_string(y) +
                     ") outside the room interior [0.1, 1.9]^2");
  }
  Image img(width, height);
  const double w = static_cast<double>(width), h = static_cast<double>(height);
  const double horizon = 0.5 * h;
  for (std::size_t c = 0; c < width; ++c) {
    const double offset = 1.0 - 2.0 * (static_cast<double>(c) + 0.5) / w;
    const double heading = pose[Dof::alpha] + std::atan(offset);
    const double dx = std::cos(heading), dy = std::sin(heading);
    const double perp = 1.0 / std::sqrt(1.0 + offset * offset);

    const WallHit wall = hit_walls(x, y, dx, dy);
    const double wall_dist = wall.t * perp;
    const double wall_half = 0.5 * h * 0.5 / wall_dist;
    const Color& wall_color = in_stripe(scene.stripe_counts[wall.wall], wall.u)
                                  ? scene.stripe_colors[wall.wall]
                                  : scene.wall_colors[wall.wall];
    const double wall_shade = 1.0 / (1.0 + 0.5 * wall_dist);

    const Pillar* pillar = nullptr;
    double pillar_t = wall.t;
    for (const auto& p : scene.pillars) {
      const double t = hit_pillar(p, x, y, dx, dy);
      if (t < pillar_t) {
        pillar_t = t;
        pillar = &p;
      }
    }
    double pillar_top = 0.0, pillar_bottom = -1.0, pillar_shade = 0.0;
    if (pillar) {
      const double d = pillar_t * perp;
      const double half = 0.5 * h * 0.5 / d;
      pillar_bottom = horizon + half;
      pillar_top = pillar_bottom - pillar->height_fraction * 2.0 * half;
      pillar_shade = 1.0 / (1.0 + 0.5 * d);
    }

    for (std::size_t r = 0; r < height; ++r) {
      const double yr = static_cast<double>(r) + 0.5;
      if (pillar && yr >= pillar_top && yr <= pillar_bottom) {
        paint(img, r, c, pillar->color, pillar_shade);
      } else if (std::abs(yr - horizon) <= wall_half) {
        paint(img, r, c, wall_color, wall_shade);
      } else if (yr < horizon) {
        paint(img, r, c, scene.ceiling, 1.0);
      } else {
        paint(img, r, c, scene.floor, 1.0);
      }
    }
  }
  return img;
}

TurntableScene random_turntable_scene(Rng& rng, std::size_t count) {
  TurntableScene s;
  for (std::size_t i = 0; i < count; ++i) {
    Blob b;
    // Uniform in the unit ball by rejection.
    do {
      for (auto& c : b.position) c = uniform(rng, -1.0, 1.0);
    } while (b.position[0] * b.position[0] + b.position[1] * b.position[1] +
                 b.position[2] * b.position[2] >
             1.0);
    b.radius = uniform(rng, 0.05, 0.15);
    b.color = random_color(rng, 0.2, 1.0);
    s.blobs.push_back(b);
  }
  return s;
}

Image render_turntable(const TurntableScene& scene, const Pose& pose, std::size_t width,
                       std::size_t height) {
  const double phi = pose[Dof::beta];
  if (!(std::abs(phi) <= kElevationLimit)) {
    throw RangeError("turntable elevation " + std::to_string(phi) + " outside [-pi/3, pi/3]");
  }
  const double theta = pose[Dof::alpha];
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cp = std::cos(phi), sp = std::sin(phi);

  struct Projected {
    double u, v, depth, radius;
    Color color;
  };
  std::vector<Projected> items;
  items.reserve(scene.blobs.size());
  for (const auto& b : scene.blobs) {
    const auto& p = b.position;
    // R_x(φ) then R_z(θ).
    const double x1 = p[0];
    const double y1 = cp * p[1] - sp * p[2];
    const double z1 = sp * p[1] + cp * p[2];
    const double x2 = ct * x1 - st * y1;
    const double y2 = st * x1 + ct * y1;
    items.push_back({x2, z1, y2, b.radius, b.color});
  }
  // Far (large y') first; stable so equal depths keep scene order.
  std::stable_sort(items.begin(), items.end(),
                   [](const Projected& a, const Projected& b) { return a.depth > b.depth; });

  constexpr std::size_t kSub = 4;
  const std::size_t sw = width * kSub, sh = height * kSub;
  std::vector<double> buffer(sw * sh * 3, 0.0);
  const double sx = static_cast<double>(sw) / (2.0 * kTurntableExtent);
  const double sy = static_cast<double>(sh) / (2.0 * kTurntableExtent);
  for (const auto& it : items) {
    const double cx = (it.u + kTurntableExtent) * sx;
    const double cy = (kTurntableExtent - it.v) * sy;
    const double rx = it.radius * sx, ry = it.radius * sy;
    const double shade = 0.6 + 0.4 * (1.0 - it.depth) / 2.0;
    const long c0 = std::max(0L, static_cast<long>(std::floor(cx - rx)));
    const long c1 = std::min(static_cast<long>(sw) - 1, static_cast<long>(std::ceil(cx + rx)));
    const long r0 = std::max(0L, static_cast<long>(std::floor(cy - ry)));
    const long r1 = std::min(static_cast<long>(sh) - 1, static_cast<long>(std::ceil(cy + ry)));
    for (long r = r0; r <= r1; ++r) {
      const double py = (static_cast<double>(r) + 0.5 - cy) / ry;
      for (long c = c0; c <= c1; ++c) {
        const double px = (static_cast<double>(c) + 0.5 - cx) / rx;
        if (px * px + py * py > 1.0) continue;
        double* dst = &buffer[(static_cast<std::size_t>(r) * sw + static_cast<std::size_t>(c)) * 3];
        for (std::size_t ch = 0; ch < 3; ++ch) dst[ch] = std::clamp(it.color[ch] * shade, 0.0, 1.0);
      }
    }
  }

  Image img(width, height);
  const double inv = 1.0 / static_cast<double>(kSub * kSub);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (std::size_t i = 0; i < kSub; ++i)
          for (std::size_t j = 0; j < kSub; ++j)
            acc += buffer[((r * kSub + i) * sw + c * kSub + j) * 3 + ch];
        img.at(r, c, ch) = static_cast<float>(acc * inv);
      }
    }
  }
  return img;
}

Image render(const SceneSpec& scene, const Pose& pose, std::size_t width, std::size_t height) {
  if (const auto* toy = std::get_if<ToyScene>(&scene)) {
    return render_toyroom(*toy, pose, width, height);
  }
  return render_turntable(std::get<TurntableScene>(scene), pose, width, height);
}

Pose sample_pose(SceneKind kind, Rng& rng) {
  Pose p;
  const auto dofs = active_dofs(kind);
  const auto ranges = pose_ranges(kind);
  for (std::size_t i = 0; i < dofs.size(); ++i) {
    p[dofs[i]] = uniform(rng, ranges[i][0], ranges[i][1]);
  }
  return p;
}

}  // namespace posefield
