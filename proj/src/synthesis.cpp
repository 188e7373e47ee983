#include "posefield/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "posefield/error.hpp"
#include "posefield/parallel.hpp"

namespace posefield {

namespace {

constexpr std::size_t kEvalChunk = 64;

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

void normalize_span(std::span<double> row) {
  double norm = 0.0;
  for (double x : row) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) return;
  for (double& x : row) x /= norm;
}

void normalize_rows(ad::Tensor& t) {
  auto v = t.values();
  const std::size_t cols = t.cols();
  for (std::size_t r = 0; r < t.rows(); ++r) normalize_span(v.subspan(r * cols, cols));
}

ad::Tensor target_rows(const SceneDataset& data, std::span<const ViewRef> refs) {
  const std::size_t n = data.spec.width * data.spec.height * 3;
  std::vector<double> values;
  values.reserve(refs.size() * n);
  for (const auto& ref : refs) {
    const auto& px = data.at(ref).image.pixels;
    values.insert(values.end(), px.begin(), px.end());
  }
  return ad::Tensor::from({refs.size(), n}, std::move(values));
}

void round_to_float(std::span<double> values) {
  for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
}

void round_to_float(std::vector<std::vector<double>>& moments) {
  for (auto& m : moments) round_to_float(std::span<double>(m));
}

// Rounds each unit row to a float32 vector q with float(normalize(q)) == q and
// keeps normalize(q) live, so the stored floats reload to the same unit rows.
void snap_unit_rows(ad::Tensor& t) {
  const std::size_t cols = t.cols();
  auto v = t.values();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto row = v.subspan(r * cols, cols);
    std::vector<double> q(row.begin(), row.end());
    round_to_float(q);
    for (int iter = 0; iter < 16; ++iter) {
      std::copy(q.begin(), q.end(), row.begin());
      normalize_span(row);
      std::vector<double> next(row.begin(), row.end());
      round_to_float(next);
      if (next == q) break;
      q = std::move(next);
    }
  }
}

void check_compatible(const SynthesisModel& model, const SceneDataset& data) {
  if (model.kind != data.spec.kind || model.width != data.spec.width ||
      model.height != data.spec.height || model.scene_count() != data.scenes.size()) {
    throw IncompatibleError("model (" + std::string(kind_name(model.kind)) + ", " + std::to_string(model.width) +
                            "x" + std::to_string(model.height) + ", " +
                            std::to_string(model.scene_count()) + " scenes) does not match dataset (" +
                            std::string(kind_name(data.spec.kind)) + ", " + std::to_string(data.spec.width) + "x" +
                            std::to_string(data.spec.height) + ", " +
                            std::to_string(data.scenes.size()) + " scenes)");
  }
}

/// Decodes `refs` in fixed chunks and scores each against its render. `perturb`
/// may edit a chunk's pose inputs in place before decoding.
template <class Perturb>
std::vector<ViewScore> score_views(const SynthesisModel& model, const SceneDataset& data,
                                   const std::vector<ViewRef>& refs, Perturb&& perturb) {
  std::vector<ViewScore> out(refs.size());
  const std::size_t chunks = (refs.size() + kEvalChunk - 1) / kEvalChunk;
  parallel_for(chunks, [&](std::size_t c) {
    ad::NoGradGuard guard;
    const std::size_t begin = c * kEvalChunk, end = std::min(refs.size(), begin + kEvalChunk);
    std::vector<std::size_t> scenes;
    std::vector<Pose> poses;
    for (std::size_t i = begin; i < end; ++i) {
      scenes.push_back(refs[i].scene);
      poses.push_back(data.at(refs[i]).pose);
    }
    ad::Tensor inputs = model.pose_rows(poses);
    perturb(inputs, begin);
    const ad::Tensor pred = decode_rows(model, scenes, inputs);
    const std::size_t n = pred.cols();
    for (std::size_t i = begin; i < end; ++i) {
      const auto& px = data.at(refs[i]).image.pixels;
      out[i] = {refs[i], psnr(px, pred.values().subspan((i - begin) * n, n))};
    }
  });
  return out;
}

}  // namespace

void validate(const SynthesisConfig& cfg) {
  require(cfg.lambda_rec >= 0.0, "synthesis-model.lambda_rec", "must be >= 0");
  require(cfg.lambda_rot >= 0.0, "synthesis-model.lambda_rot", "must be >= 0");
  require(cfg.lambda_rot_x >= 0.0, "synthesis-model.lambda_rot_x", "must be >= 0");
  require(cfg.lambda_rot_theta >= 0.0, "synthesis-model.lambda_rot_theta", "must be >= 0");
  require(cfg.lr_pose > 0.0, "synthesis-model.lr_pose", "must be > 0");
  require(cfg.lr_decoder > 0.0, "synthesis-model.lr_decoder", "must be > 0");
  require(cfg.pose_updates_per_decoder_update >= 1, "synthesis-model.pose_updates_per_decoder_update",
          "must be >= 1");
  require(cfg.batch_views >= 1, "synthesis-model.batch_views", "must be >= 1");
  require(cfg.rotation_pairs >= 1, "synthesis-model.rotation_pairs", "must be >= 1");
  require(cfg.pair_max_cells > 0.0, "synthesis-model.pair_max_cells", "must be > 0");
  require(cfg.log_every >= 1, "cli.log_every", "must be >= 1");
  require(cfg.checkpoint_every >= 1, "cli.checkpoint_every", "must be >= 1");
  require(cfg.scene_dim >= 1, "synthesis-model.scene_dim", "must be >= 1");
  for (auto h : cfg.hidden) require(h >= 1, "synthesis-model.hidden", "sizes must be >= 1");
  const auto& r = cfg.representation;
  require(r.block >= 1 && r.dim % r.block == 0, "pose-rep.dim",
          "must be a positive multiple of pose-rep.block");
  require(r.angle_grid >= 2, "pose-rep.angle_grid", "must be >= 2");
  require(r.elevation_grid >= 2, "pose-rep.elevation_grid", "must be >= 2");
  require(r.position_grid >= 2, "polar-rep.position_grid", "must be >= 2");
  require(r.theta_bank >= 2, "polar-rep.theta_bank", "must be >= 2");
  require(r.generator_stddev >= 0.0, "pose-rep.generator_stddev", "must be >= 0");
}

std::size_t SynthesisModel::pose_dim() const {
  return input == PoseInput::learned ? representation->total_dim() : active_dofs(kind).size();
}

ad::Tensor SynthesisModel::pose_rows(std::span<const Pose> poses) const {
  if (input == PoseInput::learned) return representation->encode(poses);
  return coordinate_rows(kind, poses);
}

std::vector<ad::Tensor> SynthesisModel::pose_parameters() {
  if (input == PoseInput::learned) return representation->parameters();
  return {};
}

std::vector<ad::Tensor> SynthesisModel::decoder_parameters() {
  std::vector<ad::Tensor> out{scene_vectors};
  for (auto& t : decoder.parameters()) out.push_back(t);
  return out;
}

SynthesisModel make_model(const SynthesisConfig& cfg, SceneKind kind, std::size_t scenes,
                          std::size_t width, std::size_t height) {
  validate(cfg);
  if (scenes == 0) throw ConfigError("dataset.scenes: must be >= 1");
  SynthesisModel m;
  m.kind = kind;
  m.input = cfg.input;
  m.width = width;
  m.height = height;
  if (cfg.input == PoseInput::learned) {
    RepresentationSpec spec = cfg.representation;
    spec.kind = kind;
    Rng rng = make_rng(cfg.seed, {streams::kInit, 0});
    m.representation.emplace(spec, rng);
  }
  Rng u_rng = make_rng(cfg.seed, {streams::kInit, 1});
  m.scene_vectors = ad::Tensor::zeros({scenes, cfg.scene_dim}, true);
  for (auto& v : m.scene_vectors.values()) v = gaussian(u_rng);
  normalize_rows(m.scene_vectors);

  std::vector<std::size_t> sizes{cfg.scene_dim + m.pose_dim()};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(width * height * 3);
  Rng d_rng = make_rng(cfg.seed, {streams::kDecoder});
  m.decoder = Mlp(sizes, d_rng, OutputActivation::sigmoid, cfg.leaky_slope);
  return m;
}

ad::Tensor decode_rows(const SynthesisModel& model, std::span<const std::size_t> scenes,
                       const ad::Tensor& pose_vectors) {
  if (pose_vectors.rows() != scenes.size() || pose_vectors.cols() != model.pose_dim()) {
    throw ShapeError("decode_rows: pose input " + ad::to_string(pose_vectors.shape()) + " for " +
                     std::to_string(scenes.size()) + " scenes of pose dim " +
                     std::to_string(model.pose_dim()));
  }
  for (auto s : scenes) {
    if (s >= model.scene_count()) {
      throw RangeError("scene index " + std::to_string(s) + " out of range [0, " +
                       std::to_string(model.scene_count()) + ")");
    }
  }
  const ad::Tensor u = ad::gather_rows(model.scene_vectors, scenes);
  return model.decoder.forward(ad::concat_cols({u, pose_vectors}));
}

ad::Tensor decode_views(const SynthesisModel& model, std::span<const std::size_t> scenes,
                        std::span<const Pose> poses) {
  return decode_rows(model, scenes, model.pose_rows(poses));
}

Image decode_view(const SynthesisModel& model, std::size_t scene, const Pose& pose) {
  ad::NoGradGuard guard;
  const std::size_t s[] = {scene};
  const Pose p[] = {pose};
  const ad::Tensor out = decode_views(model, s, p);
  Image img;
  img.width = model.width;
  img.height = model.height;
  img.pixels.assign(out.values().begin(), out.values().end());
  return img;
}

TrainState make_train_state(const SynthesisConfig& cfg, const SceneDataset& data) {
  TrainState st;
  st.model = make_model(cfg, data.spec.kind, data.scenes.size(), data.spec.width, data.spec.height);
  return st;
}

StepLosses synthesis_losses(const SynthesisModel& model, const SynthesisConfig& cfg,
                            const SceneDataset& data, std::span<const ViewRef> batch,
                            Rng& pair_rng) {
  if (batch.empty()) throw ContractError("synthesis_losses: empty batch");
  std::vector<std::size_t> scenes;
  std::vector<Pose> poses;
  for (const auto& ref : batch) {
    scenes.push_back(ref.scene);
    poses.push_back(data.at(ref).pose);
  }
  StepLosses l;
  const ad::Tensor pred = decode_views(model, scenes, poses);
  l.rec = ad::scale(ad::sum_squares(ad::sub(pred, target_rows(data, batch))),
                    1.0 / static_cast<double>(batch.size()));
  if (model.input == PoseInput::learned) {
    auto rot = model.representation->rotation_losses(pair_rng, cfg.rotation_pairs,
                                                     cfg.pair_max_cells);
    l.rot_sum = rot.rot_sum;
    l.rot_x = rot.rot_x;
    l.rot_theta = rot.rot_theta;
  } else {
    l.rot_sum = l.rot_x = l.rot_theta = ad::Tensor::scalar(0.0);
  }
  l.total = ad::add(ad::add(ad::add(ad::scale(l.rec, cfg.lambda_rec),
                                    ad::scale(l.rot_sum, cfg.lambda_rot)),
                            ad::scale(l.rot_x, cfg.lambda_rot_x)),
                    ad::scale(l.rot_theta, cfg.lambda_rot_theta));
  return l;
}

void normalize_scene_vectors(SynthesisModel& model) { normalize_rows(model.scene_vectors); }

void quantize_to_float(TrainState& state) {
  auto& m = state.model;
  for (auto& t : m.pose_parameters()) round_to_float(t.values());
  for (auto& t : m.decoder_parameters()) round_to_float(t.values());
  snap_unit_rows(m.scene_vectors);
  for (auto* opt : {&state.pose_opt, &state.decoder_opt}) {
    round_to_float(opt->first_moment);
    round_to_float(opt->second_moment);
  }
}

void train_synthesis(TrainState& state, const SynthesisConfig& cfg, const SceneDataset& data,
                     const TrainHooks& hooks) {
  validate(cfg);
  auto& model = state.model;
  check_compatible(model, data);
  const auto train = data.split(true);
  if (train.empty()) throw ContractError("train_synthesis: dataset has no training views");

  auto pose_params = model.pose_parameters();
  auto dec_params = model.decoder_parameters();
  const bool learned = model.input == PoseInput::learned;
  const std::size_t k = cfg.pose_updates_per_decoder_update;
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);

  auto boundary = [&] {
    if (state.step % cfg.checkpoint_every == 0 || state.step == cfg.iterations) {
      quantize_to_float(state);
      if (hooks.checkpoint) hooks.checkpoint(state);
    }
  };

  while (state.step < cfg.iterations) {
    const std::uint64_t t = state.step;
    const bool decoder_step = t % k == 0;
    // Nothing but the decoder learns in the coordinate baseline.
    if (!learned && !decoder_step) {
      ++state.step;
      boundary();
      continue;
    }
    Rng rng = make_rng(cfg.seed, {streams::kTrainStep, t});
    std::vector<ViewRef> batch(cfg.batch_views);
    for (auto& ref : batch) ref = train[pick(rng)];

    for (auto& p : dec_params) p.set_requires_grad(decoder_step);
    StepLosses l = synthesis_losses(model, cfg, data, batch, rng);
    double total = l.total.item();
    if (cfg.inject_nan_at_step && *cfg.inject_nan_at_step == t) {
      total = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(total)) {
      for (auto& p : dec_params) p.set_requires_grad(true);
      if (hooks.checkpoint) hooks.checkpoint(state);
      throw NonFiniteLossError("non-finite loss at step " + std::to_string(t));
    }
    zero_grads(pose_params);
    zero_grads(dec_params);
    l.total.backward();
    if (learned) adam_step(pose_params, state.pose_opt, cfg.lr_pose);
    if (decoder_step) adam_step(dec_params, state.decoder_opt, cfg.lr_decoder);
    for (auto& p : dec_params) p.set_requires_grad(true);

    normalize_rows(model.scene_vectors);
    if (learned) {
      Rng renorm = make_rng(cfg.seed, {streams::kRenormalize, t});
      model.representation->renormalize(renorm);
    }
    ++state.step;

    if (hooks.log && (t % cfg.log_every == 0 || state.step == cfg.iterations)) {
      hooks.log({t, total, l.rec.item(), l.rot_sum.item(), l.rot_x.item(), l.rot_theta.item()});
    }
    boundary();
  }
}

double psnr(std::span<const float> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw ShapeError("psnr: sizes " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse < 1e-10) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double psnr(std::span<const float> a, std::span<const float> b) {
  std::vector<double> wide(b.begin(), b.end());
  return psnr(a, std::span<const double>(wide));
}

std::vector<ViewScore> eval_synthesis(const SynthesisModel& model, const SceneDataset& data) {
  check_compatible(model, data);
  return score_views(model, data, data.split(false), [](ad::Tensor&, std::size_t) {});
}

double mean_psnr(std::span<const ViewScore> scores) {
  if (scores.empty()) return 0.0;
  double s = 0.0;
  for (const auto& v : scores) s += v.psnr;
  return s / static_cast<double>(scores.size());
}

std::vector<ViewScore> mean_image_baseline(const SceneDataset& data) {
  std::vector<ViewScore> out;
  const std::size_t n = data.spec.width * data.spec.height * 3;
  for (std::size_t s = 0; s < data.scenes.size(); ++s) {
    std::vector<double> mean(n, 0.0);
    std::size_t count = 0;
    for (const auto& v : data.scenes[s].views) {
      if (!v.train) continue;
      for (std::size_t i = 0; i < n; ++i) mean[i] += v.image.pixels[i];
      ++count;
    }
    if (count > 0) {
      for (auto& m : mean) m /= static_cast<double>(count);
    }
    for (std::size_t v = 0; v < data.scenes[s].views.size(); ++v) {
      const auto& view = data.scenes[s].views[v];
      if (view.train) continue;
      out.push_back({{s, v}, psnr(view.image.pixels, mean)});
    }
  }
  return out;
}

std::vector<NoiseRow> noise_eval(const SynthesisModel& model, const SceneDataset& data,
                                 std::span<const double> alphas, std::uint64_t seed) {
  check_compatible(model, data);
  const auto train = data.split(true);
  const auto test = data.split(false);
  const std::size_t dim = model.pose_dim();

  std::vector<double> beta(dim, 0.0);
  if (!train.empty()) {
    std::vector<Pose> poses;
    for (const auto& ref : train) poses.push_back(data.at(ref).pose);
    ad::NoGradGuard guard;
    const ad::Tensor enc = model.pose_rows(poses);
    const auto v = enc.values();
    const double n = static_cast<double>(poses.size());
    for (std::size_t j = 0; j < dim; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < poses.size(); ++i) mean += v[i * dim + j];
      mean /= n;
      double var = 0.0;
      for (std::size_t i = 0; i < poses.size(); ++i) {
        const double d = v[i * dim + j] - mean;
        var += d * d;
      }
      beta[j] = std::sqrt(var / n);
    }
  }

  std::vector<NoiseRow> rows;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    const double alpha = alphas[a];
    if (!(alpha >= 0.0)) throw RangeError("noise magnitude must be >= 0, got " + std::to_string(alpha));
    const auto scores = score_views(model, data, test, [&](ad::Tensor& inputs, std::size_t begin) {
      if (alpha == 0.0) return;
      auto v = inputs.values();
      for (std::size_t r = 0; r < inputs.rows(); ++r) {
        const ViewRef& ref = test[begin + r];
        Rng rng = make_rng(seed, {streams::kNoise, a, ref.scene, ref.view});
        for (std::size_t j = 0; j < dim; ++j) v[r * dim + j] += alpha * beta[j] * gaussian(rng);
      }
    });
    NoiseRow row;
    row.alpha = alpha;
    row.n = scores.size();
    row.mean_psnr = mean_psnr(scores);
    double var = 0.0;
    for (const auto& s : scores) var += (s.psnr - row.mean_psnr) * (s.psnr - row.mean_psnr);
    row.std_psnr = scores.empty() ? 0.0 : std::sqrt(var / static_cast<double>(scores.size()));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace posefield
