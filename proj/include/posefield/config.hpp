#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "posefield/dataset.hpp"
#include "posefield/regression.hpp"
#include "posefield/synthesis.hpp"

namespace posefield {

inline constexpr int kConfigFormatVersion = 1;

struct EvalConfig {
  std::vector<double> noise_alphas{0.0, 0.25, 0.5, 1.0};
  std::size_t dump_images = 8;  // side-by-side PPMs written by eval-synthesis
};

/// Everything a command needs. One global seed feeds every module.
struct RunConfig {
  int format_version = kConfigFormatVersion;
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  SynthesisConfig synthesis;
  RegressionConfig regression;
  EvalConfig eval;

  void set_seed(std::uint64_t value);
};

/// INI text: top-level `format_version` and `seed`, then sections
/// [scene-synth], [pose-rep], [polar-rep], [synthesis-model], [regression]
/// and [cli]. Missing keys keep their defaults; unknown sections or keys and
/// malformed values throw ConfigError naming `section.key`.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Full config with every key, parseable by parse_config.
std::string render_config(const RunConfig& cfg);

}  // namespace posefield
