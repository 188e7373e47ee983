#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "posefield/scene.hpp"

namespace posefield {

inline constexpr int kDatasetFormatVersion = 1;

struct DatasetSpec {
  SceneKind kind = SceneKind::turntable;
  std::size_t width = 24;
  std::size_t height = 24;
  std::size_t scenes = 50;
  std::size_t views = 60;  // per scene
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct View {
  Pose pose;
  Image image;
  bool train = true;
};

struct SceneRecord {
  SceneSpec scene;
  std::vector<View> views;
};

struct ViewRef {
  std::size_t scene = 0;
  std::size_t view = 0;
};

struct SceneDataset {
  DatasetSpec spec;
  std::vector<SceneRecord> scenes;

  std::size_t view_count() const;
  std::vector<ViewRef> split(bool train) const;
  const View& at(const ViewRef& ref) const { return scenes[ref.scene].views[ref.view]; }
};

/// Throws ConfigError naming the offending field.
void validate(const DatasetSpec& spec);

/// Scene s draws its layout from stream (seed, scene, s), view v its pose from
/// (seed, view, s, v) and its split from (seed, split, s, v). Poses are
/// rounded to 9 significant digits before rendering, so the CSV on disk
/// reproduces them exactly.
SceneDataset build_dataset(const DatasetSpec& spec);

/// Writes manifest.json plus scene_NNNN/{poses.csv, images.f32}.
void save_dataset(const SceneDataset& dataset, const std::filesystem::path& dir);

/// Throws FormatError on a version mismatch or malformed manifest and
/// CorruptionError naming the file when a checksum or size disagrees.
SceneDataset load_dataset(const std::filesystem::path& dir);

/// Rounds through the 9-significant-digit text form used by poses.csv.
double round_sig9(double value);

}  // namespace posefield
