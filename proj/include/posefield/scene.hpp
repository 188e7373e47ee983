#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "posefield/pose.hpp"
#include "posefield/rng.hpp"

namespace posefield {

enum class SceneKind { toyroom, turntable };

std::string_view kind_name(SceneKind kind);
/// Throws ConfigError naming the field on an unknown kind.
SceneKind parse_kind(std::string_view name);

/// DOFs a dataset kind varies, in concatenation order. Turntable azimuth θ is
/// carried in Dof::alpha and elevation φ in Dof::beta.
std::vector<Dof> active_dofs(SceneKind kind);
/// File column names of the active DOFs: x, y, alpha or theta, phi.
std::vector<std::string> dof_columns(SceneKind kind);

using Color = std::array<double, 3>;

/// RGB, row-major, channel-interleaved, values in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0.0f) {}
  float& at(std::size_t row, std::size_t col, std::size_t ch) {
    return pixels[(row * width + col) * 3 + ch];
  }
  float at(std::size_t row, std::size_t col, std::size_t ch) const {
    return pixels[(row * width + col) * 3 + ch];
  }
  bool operator==(const Image&) const = default;
};

// ---- toyroom ---------------------------------------------------------------

inline constexpr double kRoomSize = 2.0;
inline constexpr double kRoomMargin = 0.1;

struct Pillar {
  double cx = 1.0;
  double cy = 1.0;
  double half_width = 0.1;
  double height_fraction = 0.5;  // of the wall height at the same distance
  Color color{};
};

/// Walls in order north (y = 2), east (x = 2), south (y = 0), west (x = 0).
struct ToyScene {
  std::array<Color, 4> wall_colors{};
  std::array<int, 4> stripe_counts{};
  std::array<Color, 4> stripe_colors{};
  std::vector<Pillar> pillars;
  Color floor{};
  Color ceiling{};
};

ToyScene random_toy_scene(Rng& rng);

/// Pinhole camera at (x, y) with heading alpha (0 faces +x, counter-clockwise),
/// 90° horizontal field of view, one ray per column. Throws RangeError when the
/// camera is closer than 0.1 m to a wall.
///
/// Shading is 1/(1 + 0.5·d) with d the perpendicular distance; the wall band
/// spans H/2 ± (H/2)·0.5/d rows. A wall with n stripes has stripe k covering
/// [(2k+1)w, (2k+2)w] along the wall, w = 2/(2n+1). Pillars stand on the floor
/// and reach height_fraction of the wall band at their own distance.
Image render_toyroom(const ToyScene& scene, const Pose& pose, std::size_t width,
                     std::size_t height);

// ---- turntable -------------------------------------------------------------

inline constexpr double kElevationLimit = 1.0471975511965976;  // π/3
inline constexpr double kTurntableExtent = 1.2;                 // frame half-width

struct Blob {
  std::array<double, 3> position{};
  double radius = 0.1;
  Color color{};
};

struct TurntableScene {
  std::vector<Blob> blobs;
};

TurntableScene random_turntable_scene(Rng& rng, std::size_t count = 20);

/// Orthographic view of R_z(θ)·R_x(φ)·p onto (x', z'), with +z' up and the
/// frame spanning [-1.2, 1.2]². The viewer sits at y' = -∞. Discs are painted
/// far to near and shaded by 0.6 + 0.4·(1 - y')/2; each pixel averages a 4×4
/// subsample grid over a black background. θ is pose[alpha], φ is pose[beta];
/// throws RangeError when |φ| > π/3.
Image render_turntable(const TurntableScene& scene, const Pose& pose, std::size_t width,
                       std::size_t height);

using SceneSpec = std::variant<ToyScene, TurntableScene>;

Image render(const SceneSpec& scene, const Pose& pose, std::size_t width, std::size_t height);

/// Uniform pose over the kind's valid range.
Pose sample_pose(SceneKind kind, Rng& rng);

/// Per-DOF sampling range [lo, hi] for a kind, in active_dofs order.
std::vector<std::array<double, 2>> pose_ranges(SceneKind kind);

}  // namespace posefield
