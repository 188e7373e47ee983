#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "posefield/regression.hpp"
#include "posefield/synthesis.hpp"

namespace posefield {

/// Container layout: "PFCK", u32 version, u64 header length, JSON header, then
/// the float32 little-endian blob. The header lists every tensor with its
/// shape and offset, plus the SHA-256 of the blob.
///
/// Values are stored as float32 while training runs in float64, so a loaded
/// model reproduces the saved one only after rounding; train_synthesis rounds
/// its live state at every checkpoint boundary for that reason.
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Model shape and training state. The config fields that fix tensor shapes
/// are stored too, so loading needs no config.
void save_synthesis(const std::filesystem::path& path, const SynthesisConfig& cfg,
                    const TrainState& state);

struct LoadedSynthesis {
  SynthesisConfig config;  // shape fields only; training fields keep defaults
  TrainState state;
};

/// Throws FormatError (bad magic/version/header), CorruptionError (hash or
/// size mismatch) or IncompatibleError (wrong checkpoint type).
LoadedSynthesis load_synthesis(const std::filesystem::path& path);

/// Throws IncompatibleError when the shape fields of `cfg` disagree with the
/// checkpoint's, naming the first differing field.
void check_same_shape(const SynthesisConfig& cfg, const SynthesisConfig& stored);

/// Stores the regressor together with a frozen copy of the pose system it
/// targets, when there is one.
void save_regressor(const std::filesystem::path& path, const RegressionConfig& cfg,
                    const PoseRegressor& reg, const PoseRepresentation* representation);

struct LoadedRegressor {
  RegressionConfig config;
  PoseRegressor regressor;
  std::optional<PoseRepresentation> representation;
};

LoadedRegressor load_regressor(const std::filesystem::path& path);

}  // namespace posefield
