#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "posefield/dataset.hpp"
#include "posefield/mlp.hpp"
#include "posefield/representation.hpp"

namespace posefield {

enum class TargetKind { learned, euler, sincos };

std::string_view target_name(TargetKind kind);
/// Throws ConfigError on an unknown name.
TargetKind parse_target(std::string_view name);

struct RegressionConfig {
  TargetKind target = TargetKind::learned;
  std::vector<std::size_t> trunk{512, 256};
  double leaky_slope = ad::kDefaultLeakySlope;
  std::size_t iterations = 3000;
  std::size_t batch_views = 64;
  double lr = 1e-3;
  double position_weight = 1.0;
  /// Per-DOF width of the learned representation; sizes baseline heads when
  /// no pose system is at hand.
  std::size_t learned_dim = 96;
  std::uint64_t seed = 0;
};

void validate(const RegressionConfig& cfg);

/// One output group of the regressor.
struct HeadSpec {
  std::vector<Dof> dofs;    // DOFs decoded from this head
  std::size_t width = 0;    // output size
  bool position = false;    // weighted by position_weight
};

/// Head layout for a target kind. Learned targets follow the pose
/// representation's column order, or learned_dim per group without one.
std::vector<HeadSpec> head_layout(TargetKind target, SceneKind kind,
                                  const PoseRepresentation* representation,
                                  std::size_t learned_dim = 96);

/// Image → pose regressor: a shared trunk on the flattened image and one head
/// per output group. Learned-target heads are single linear layers; the
/// baseline heads get one hidden layer sized so the total head parameter
/// count matches the learned layout within 5%.
class PoseRegressor {
 public:
  PoseRegressor() = default;
  /// `representation` is required for learned targets and is only read.
  PoseRegressor(const RegressionConfig& cfg, SceneKind kind, std::size_t width, std::size_t height,
                const PoseRepresentation* representation);

  TargetKind target() const { return target_; }
  SceneKind kind() const { return kind_; }
  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  const Mlp& trunk() const { return trunk_; }
  const std::vector<Mlp>& heads() const { return heads_; }
  const std::vector<HeadSpec>& layout() const { return layout_; }
  std::size_t head_param_count() const;

  /// Per-head outputs for a batch of flattened images (rows × W·H·3).
  std::vector<ad::Tensor> forward(const ad::Tensor& images) const;
  /// Head outputs concatenated in layout order.
  ad::Tensor predict(const ad::Tensor& images) const;

  std::vector<ad::Tensor> parameters() const;

  /// For checkpoint loading.
  Mlp& trunk_mut() { return trunk_; }
  std::vector<Mlp>& heads_mut() { return heads_; }

 private:
  TargetKind target_ = TargetKind::learned;
  SceneKind kind_ = SceneKind::toyroom;
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<HeadSpec> layout_;
  Mlp trunk_;
  std::vector<Mlp> heads_;
};

/// Concatenated regression targets for `poses`, in layout order.
ad::Tensor regression_targets(TargetKind target, SceneKind kind,
                              const PoseRepresentation* representation, std::span<const Pose> poses);

/// Σ over heads of weight · mean squared error.
ad::Tensor regression_loss(const PoseRegressor& reg, double position_weight, const ad::Tensor& images,
                           const ad::Tensor& targets);

/// Trains on the dataset's training split. Step t draws its batch from
/// stream (seed, train step, t). Throws ConfigError when a learned target has
/// no representation.
PoseRegressor train_regressor(const RegressionConfig& cfg, const SceneDataset& data,
                              const PoseRepresentation* representation,
                              std::vector<double>* losses = nullptr);

/// Decodes one row of concatenated head outputs.
Pose decode_prediction(TargetKind target, SceneKind kind, const PoseRepresentation* representation,
                       std::span<const double> outputs);

Pose infer_pose(const PoseRegressor& reg, const PoseRepresentation* representation,
                const Image& image);

struct DofError {
  Dof dof = Dof::x;
  double mean_abs = 0.0;
  double median_abs = 0.0;
  std::string unit;  // "m" or "deg"
};

struct Prediction {
  ViewRef ref;
  Pose truth;
  Pose predicted;
};

struct RegressionReport {
  TargetKind target = TargetKind::learned;
  std::uint64_t seed = 0;
  std::vector<DofError> errors;
  std::vector<Prediction> predictions;
};

/// Per-DOF mean and median absolute error; angles on the circle, in degrees.
std::vector<DofError> pose_errors(SceneKind kind, std::span<const Prediction> predictions);

/// Absolute error on the held-out split; angles on the circle, in degrees.
RegressionReport eval_regression(const PoseRegressor& reg, const PoseRepresentation* representation,
                                 const SceneDataset& data, std::uint64_t seed = 0);

/// Writes report.csv and pred_<dof>.csv into `dir`.
void write_report(const RegressionReport& report, const SceneDataset& data,
                  const std::filesystem::path& dir);

}  // namespace posefield
