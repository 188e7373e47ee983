#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace posefield {

/// Camera degrees of freedom in the fixed concatenation order.
enum class Dof : std::uint8_t { x = 0, y, z, alpha, beta, gamma };

inline constexpr std::size_t kDofCount = 6;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string_view dof_name(Dof dof);
/// Accepts "x", "y", "z", "alpha", "beta", "gamma".
Dof parse_dof(std::string_view name);
bool is_angle(Dof dof);

/// Full 6-DOF pose; a dataset kind decides which entries are meaningful.
/// Positions in meters, angles in radians.
struct Pose {
  std::array<double, kDofCount> value{};

  double& operator[](Dof d) { return value[static_cast<std::size_t>(d)]; }
  double operator[](Dof d) const { return value[static_cast<std::size_t>(d)]; }
  bool operator==(const Pose&) const = default;
};

/// Wraps an angle into [0, 2π).
double wrap_angle(double radians);
/// Shortest distance between two angles on the circle, in [0, π].
double angle_distance(double a, double b);

inline double degrees(double radians) { return radians * 180.0 / std::numbers::pi; }
inline double radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

}  // namespace posefield
