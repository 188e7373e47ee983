#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "posefield/adam.hpp"
#include "posefield/dataset.hpp"
#include "posefield/mlp.hpp"
#include "posefield/representation.hpp"

namespace posefield {

/// What the decoder sees in place of the pose.
enum class PoseInput { learned, coordinates };

struct SynthesisConfig {
  PoseInput input = PoseInput::learned;
  RepresentationSpec representation;  // kind is taken from the dataset
  std::size_t scene_dim = 128;
  std::vector<std::size_t> hidden{256, 512};
  double leaky_slope = ad::kDefaultLeakySlope;

  double lambda_rec = 0.05;
  double lambda_rot = 100.0;
  double lambda_rot_x = 100.0;
  double lambda_rot_theta = 0.8;
  double lr_pose = 0.01;
  double lr_decoder = 1e-4;
  std::size_t pose_updates_per_decoder_update = 3;

  std::size_t iterations = 3000;
  std::size_t batch_views = 64;
  std::size_t rotation_pairs = 64;
  double pair_max_cells = 2.0;
  std::size_t log_every = 10;
  std::size_t checkpoint_every = 500;
  std::optional<std::uint64_t> inject_nan_at_step;
  std::uint64_t seed = 0;
};

/// Throws ConfigError naming the field.
void validate(const SynthesisConfig& cfg);

struct SynthesisModel {
  SceneKind kind = SceneKind::turntable;
  PoseInput input = PoseInput::learned;
  std::size_t width = 0;
  std::size_t height = 0;
  std::optional<PoseRepresentation> representation;
  ad::Tensor scene_vectors;  // scenes × scene_dim, unit rows
  Mlp decoder;               // sigmoid output of width·height·3

  std::size_t scene_count() const { return scene_vectors.rows(); }
  std::size_t pose_dim() const;
  /// Learned pose vectors or normalized coordinates, one row per pose.
  ad::Tensor pose_rows(std::span<const Pose> poses) const;
  std::vector<ad::Tensor> pose_parameters();
  std::vector<ad::Tensor> decoder_parameters();
};

SynthesisModel make_model(const SynthesisConfig& cfg, SceneKind kind, std::size_t scenes,
                          std::size_t width, std::size_t height);

/// G(u_scene, pose vector) for a batch; rows are images.
ad::Tensor decode_rows(const SynthesisModel& model, std::span<const std::size_t> scenes,
                       const ad::Tensor& pose_vectors);
ad::Tensor decode_views(const SynthesisModel& model, std::span<const std::size_t> scenes,
                        std::span<const Pose> poses);
Image decode_view(const SynthesisModel& model, std::size_t scene, const Pose& pose);

struct TrainState {
  SynthesisModel model;
  AdamState pose_opt;
  AdamState decoder_opt;
  std::uint64_t step = 0;  // completed steps
};

TrainState make_train_state(const SynthesisConfig& cfg, const SceneDataset& data);

struct MetricsRow {
  std::uint64_t step = 0;
  double total = 0.0;
  double rec = 0.0;
  double rot_sum = 0.0;
  double rot_x = 0.0;
  double rot_theta = 0.0;
};

struct StepLosses {
  ad::Tensor total;
  ad::Tensor rec;
  ad::Tensor rot_sum;
  ad::Tensor rot_x;
  ad::Tensor rot_theta;
};

/// L = λ1·L_rec + λ2·ΣL_rot + λ3·L_rot,x + λ4·L_rot,θ for one step's batch.
/// L_rec is the per-image squared error norm averaged over the batch.
StepLosses synthesis_losses(const SynthesisModel& model, const SynthesisConfig& cfg,
                            const SceneDataset& data, std::span<const ViewRef> batch,
                            Rng& pair_rng);

struct TrainHooks {
  std::function<void(const MetricsRow&)> log;
  /// Called at every checkpoint_every boundary and after the last step.
  std::function<void(const TrainState&)> checkpoint;
};

/// Continues from state.step to cfg.iterations. Step t draws everything from
/// streams derived from (seed, t), and the live state is rounded to float32
/// at each checkpoint boundary, so a run resumed from a checkpoint retraces
/// the uninterrupted one bit for bit.
///
/// On a non-finite loss the checkpoint hook receives the last good state and
/// NonFiniteLossError is thrown.
void train_synthesis(TrainState& state, const SynthesisConfig& cfg, const SceneDataset& data,
                     const TrainHooks& hooks = {});

/// Rounds parameters and optimizer moments to float32. Scene vectors become
/// the projection of float32 rows that store back to themselves, so a loaded
/// checkpoint followed by normalize_scene_vectors matches the live state.
void quantize_to_float(TrainState& state);

/// Projects every scene vector to unit norm.
void normalize_scene_vectors(SynthesisModel& model);

/// 10·log10(1/mse), capped at 99 dB when mse < 1e-10.
double psnr(std::span<const float> a, std::span<const double> b);
double psnr(std::span<const float> a, std::span<const float> b);

struct ViewScore {
  ViewRef ref;
  double psnr = 0.0;
};

/// Held-out views of the training scenes.
std::vector<ViewScore> eval_synthesis(const SynthesisModel& model, const SceneDataset& data);
double mean_psnr(std::span<const ViewScore> scores);

/// PSNR of each scene's mean training image against its held-out views.
std::vector<ViewScore> mean_image_baseline(const SceneDataset& data);

struct NoiseRow {
  double alpha = 0.0;
  double mean_psnr = 0.0;
  double std_psnr = 0.0;
  std::size_t n = 0;
};

/// β_i = per-element std of the pose input over the training views. For each
/// α, held-out pose inputs get elementwise N(0, (α·β_i)²) noise drawn from
/// stream (seed, noise, α index, view index) before decoding.
std::vector<NoiseRow> noise_eval(const SynthesisModel& model, const SceneDataset& data,
                                 std::span<const double> alphas, std::uint64_t seed);

}  // namespace posefield
