#include "posefield/regression.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "posefield/adam.hpp"
#include "posefield/error.hpp"
#include "posefield/parallel.hpp"

namespace posefield {

namespace {

constexpr std::size_t kEvalChunk = 64;

ad::Tensor image_rows(const SceneDataset& data, std::span<const ViewRef> refs) {
  const std::size_t n = data.spec.width * data.spec.height * 3;
  std::vector<double> values;
  values.reserve(refs.size() * n);
  for (const auto& ref : refs) {
    const auto& px = data.at(ref).image.pixels;
    values.insert(values.end(), px.begin(), px.end());
  }
  return ad::Tensor::from({refs.size(), n}, std::move(values));
}

const PoseRepresentation& require_representation(const PoseRepresentation* rep, SceneKind kind) {
  if (rep == nullptr) throw ConfigError("regression.target: learned targets need a trained pose system");
  if (rep->kind() != kind) {
    throw IncompatibleError("pose system is for " + std::string(kind_name(rep->kind())) +
                            " but the data is " + std::string(kind_name(kind)));
  }
  return *rep;
}

std::size_t layout_width(const std::vector<HeadSpec>& layout) {
  std::size_t w = 0;
  for (const auto& h : layout) w += h.width;
  return w;
}

/// Learned-target heads for a representation of per-DOF dimension `dim`.
std::vector<HeadSpec> learned_layout(SceneKind kind, std::size_t polar_dim,
                                     const std::vector<std::pair<Dof, std::size_t>>& grids) {
  std::vector<HeadSpec> out;
  if (kind == SceneKind::toyroom) out.push_back({{Dof::x, Dof::y}, polar_dim, true});
  for (const auto& [dof, dim] : grids) out.push_back({{dof}, dim, false});
  return out;
}

}  // namespace

std::string_view target_name(TargetKind kind) {
  switch (kind) {
    case TargetKind::learned: return "learned";
    case TargetKind::euler: return "euler";
    case TargetKind::sincos: return "sincos";
  }
  return "unknown";
}

TargetKind parse_target(std::string_view name) {
  if (name == "learned") return TargetKind::learned;
  if (name == "euler") return TargetKind::euler;
  if (name == "sincos") return TargetKind::sincos;
  throw ConfigError("regression.target: unknown target kind '" + std::string(name) +
                    "' (expected learned, euler or sincos)");
}

void validate(const RegressionConfig& cfg) {
  if (cfg.trunk.empty()) throw ConfigError("regression.trunk: needs at least one hidden layer");
  for (auto h : cfg.trunk) {
    if (h == 0) throw ConfigError("regression.trunk: sizes must be >= 1");
  }
  if (cfg.batch_views == 0) throw ConfigError("regression.batch_views: must be >= 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("regression.lr: must be > 0");
  if (!(cfg.position_weight >= 0.0)) throw ConfigError("regression.position_weight: must be >= 0");
  if (cfg.learned_dim == 0) throw ConfigError("regression.learned_dim: must be >= 1");
}

std::vector<HeadSpec> head_layout(TargetKind target, SceneKind kind,
                                  const PoseRepresentation* representation, std::size_t learned_dim) {
  if (target == TargetKind::learned) {
    if (representation != nullptr) {
      const auto& rep = require_representation(representation, kind);
      std::vector<std::pair<Dof, std::size_t>> grids;
      for (const auto& g : rep.dofs().grids()) grids.emplace_back(g.dof(), g.dim());
      return learned_layout(kind, rep.has_polar() ? rep.polar().dim() : 0, grids);
    }
    std::vector<std::pair<Dof, std::size_t>> grids;
    for (Dof d : active_dofs(kind)) {
      if (is_angle(d)) grids.emplace_back(d, learned_dim);
    }
    return learned_layout(kind, learned_dim, grids);
  }
  std::vector<HeadSpec> out;
  for (Dof d : active_dofs(kind)) {
    const bool angle = is_angle(d);
    out.push_back({{d}, target == TargetKind::sincos && angle ? 2u : 1u, !angle});
  }
  return out;
}

PoseRegressor::PoseRegressor(const RegressionConfig& cfg, SceneKind kind, std::size_t width,
                             std::size_t height, const PoseRepresentation* representation)
    : target_(cfg.target), kind_(kind), width_(width), height_(height) {
  validate(cfg);
  if (target_ == TargetKind::learned) require_representation(representation, kind);
  layout_ = head_layout(target_, kind, representation, cfg.learned_dim);

  std::vector<std::size_t> sizes{width * height * 3};
  sizes.insert(sizes.end(), cfg.trunk.begin(), cfg.trunk.end());
  Rng trunk_rng = make_rng(cfg.seed, {streams::kTrunk});
  trunk_ = Mlp(sizes, trunk_rng, OutputActivation::leaky_relu, cfg.leaky_slope);
  const std::size_t t = cfg.trunk.back();

  // Baseline heads: one hidden layer of size h with
  // Σ (t·h + h + h·o + o) ≈ Σ (t·w + w) over the learned heads.
  std::size_t hidden = 0;
  if (target_ != TargetKind::learned) {
    const auto learned = head_layout(TargetKind::learned, kind, representation, cfg.learned_dim);
    double reference = 0.0, per_unit = 0.0, bias = 0.0;
    for (const auto& h : learned) reference += static_cast<double>((t + 1) * h.width);
    for (const auto& h : layout_) {
      per_unit += static_cast<double>(t + 1 + h.width);
      bias += static_cast<double>(h.width);
    }
    hidden = static_cast<std::size_t>(std::max(1.0, std::round((reference - bias) / per_unit)));
  }
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    Rng rng = make_rng(cfg.seed, {streams::kHeads, i});
    std::vector<std::size_t> head{t};
    if (hidden > 0) head.push_back(hidden);
    head.push_back(layout_[i].width);
    heads_.emplace_back(head, rng, OutputActivation::linear, cfg.leaky_slope);
  }
}

std::size_t PoseRegressor::head_param_count() const {
  std::size_t n = 0;
  for (const auto& h : heads_) n += h.param_count();
  return n;
}

std::vector<ad::Tensor> PoseRegressor::forward(const ad::Tensor& images) const {
  if (images.cols() != width_ * height_ * 3) {
    throw ShapeError("regressor expects " + std::to_string(width_ * height_ * 3) +
                     " values per image, got " + std::to_string(images.cols()));
  }
  const ad::Tensor features = trunk_.forward(images);
  std::vector<ad::Tensor> out;
  for (const auto& h : heads_) out.push_back(h.forward(features));
  return out;
}

ad::Tensor PoseRegressor::predict(const ad::Tensor& images) const {
  return ad::concat_cols(forward(images));
}

std::vector<ad::Tensor> PoseRegressor::parameters() const {
  auto out = trunk_.parameters();
  for (const auto& h : heads_) {
    for (auto& p : h.parameters()) out.push_back(p);
  }
  return out;
}

ad::Tensor regression_targets(TargetKind target, SceneKind kind,
                              const PoseRepresentation* representation, std::span<const Pose> poses) {
  if (target == TargetKind::learned) {
    ad::NoGradGuard guard;
    return require_representation(representation, kind).encode(poses).detach();
  }
  if (target == TargetKind::euler) return coordinate_rows(kind, poses);
  const auto dofs = active_dofs(kind);
  std::vector<double> values;
  for (const auto& p : poses) {
    const auto coords = normalized_coordinates(kind, p);
    for (std::size_t i = 0; i < dofs.size(); ++i) {
      if (is_angle(dofs[i])) {
        values.push_back(std::sin(p[dofs[i]]));
        values.push_back(std::cos(p[dofs[i]]));
      } else {
        values.push_back(coords[i]);
      }
    }
  }
  const std::size_t cols = poses.empty() ? 0 : values.size() / poses.size();
  return ad::Tensor::from({poses.size(), cols}, std::move(values));
}

ad::Tensor regression_loss(const PoseRegressor& reg, double position_weight, const ad::Tensor& images,
                           const ad::Tensor& targets) {
  const auto outputs = reg.forward(images);
  const auto& layout = reg.layout();
  if (targets.rows() != images.rows() || targets.cols() != layout_width(layout)) {
    throw ShapeError("regression targets " + ad::to_string(targets.shape()) + " for " +
                     std::to_string(images.rows()) + " images and " +
                     std::to_string(layout_width(layout)) + " outputs");
  }
  ad::Tensor loss;
  std::size_t col = 0;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    ad::Tensor term = ad::mse_loss(outputs[i], ad::slice_cols(targets, col, layout[i].width));
    if (layout[i].position) term = ad::scale(term, position_weight);
    loss = i == 0 ? term : ad::add(loss, term);
    col += layout[i].width;
  }
  return loss;
}

PoseRegressor train_regressor(const RegressionConfig& cfg, const SceneDataset& data,
                              const PoseRepresentation* representation, std::vector<double>* losses) {
  PoseRegressor reg(cfg, data.spec.kind, data.spec.width, data.spec.height, representation);
  const auto train = data.split(true);
  if (train.empty()) throw ConfigError("regression: dataset has no training views");

  auto params = reg.parameters();
  AdamState opt;
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    Rng rng = make_rng(cfg.seed, {streams::kTrainStep, t});
    std::vector<ViewRef> batch(cfg.batch_views);
    std::vector<Pose> poses;
    for (auto& ref : batch) {
      ref = train[pick(rng)];
      poses.push_back(data.at(ref).pose);
    }
    const ad::Tensor targets = regression_targets(cfg.target, data.spec.kind, representation, poses);
    const ad::Tensor loss = regression_loss(reg, cfg.position_weight, image_rows(data, batch), targets);
    if (!std::isfinite(loss.item())) {
      throw NonFiniteLossError("regression loss is not finite at step " + std::to_string(t));
    }
    if (losses) losses->push_back(loss.item());
    zero_grads(params);
    loss.backward();
    adam_step(params, opt, cfg.lr);
  }
  return reg;
}

Pose decode_prediction(TargetKind target, SceneKind kind, const PoseRepresentation* representation,
                       std::span<const double> outputs) {
  if (target == TargetKind::learned) return require_representation(representation, kind).decode(outputs);
  if (target == TargetKind::euler) return denormalize_coordinates(kind, outputs);
  const auto dofs = active_dofs(kind);
  const auto ranges = pose_ranges(kind);
  std::vector<double> coords(dofs.size());
  std::size_t col = 0;
  for (std::size_t i = 0; i < dofs.size(); ++i) {
    if (col >= outputs.size()) throw ShapeError("decode_prediction: too few outputs");
    if (is_angle(dofs[i])) {
      double a = std::atan2(outputs[col], outputs[col + 1]);
      if (dofs[i] == Dof::alpha) a = wrap_angle(a);
      coords[i] = (a - ranges[i][0]) / (ranges[i][1] - ranges[i][0]);
      col += 2;
    } else {
      coords[i] = outputs[col++];
    }
  }
  if (col != outputs.size()) throw ShapeError("decode_prediction: too many outputs");
  return denormalize_coordinates(kind, coords);
}

Pose infer_pose(const PoseRegressor& reg, const PoseRepresentation* representation,
                const Image& image) {
  ad::NoGradGuard guard;
  if (image.width != reg.width() || image.height != reg.height()) {
    throw ShapeError("image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                     ", regressor expects " + std::to_string(reg.width()) + "x" +
                     std::to_string(reg.height()));
  }
  const std::vector<double> px(image.pixels.begin(), image.pixels.end());
  const ad::Tensor out = reg.predict(ad::Tensor::from({1, px.size()}, px));
  return decode_prediction(reg.target(), reg.kind(), representation, out.values());
}

std::vector<DofError> pose_errors(SceneKind kind, std::span<const Prediction> predictions) {
  if (predictions.empty()) throw ConfigError("regression: no predictions to score");
  std::vector<DofError> out;
  for (Dof d : active_dofs(kind)) {
    std::vector<double> errs;
    for (const auto& p : predictions) {
      errs.push_back(is_angle(d) ? degrees(angle_distance(p.truth[d], p.predicted[d]))
                                 : std::abs(p.truth[d] - p.predicted[d]));
    }
    DofError e;
    e.dof = d;
    e.unit = is_angle(d) ? "deg" : "m";
    for (double v : errs) e.mean_abs += v;
    e.mean_abs /= static_cast<double>(errs.size());
    std::sort(errs.begin(), errs.end());
    const std::size_t n = errs.size();
    e.median_abs = n % 2 ? errs[n / 2] : 0.5 * (errs[n / 2 - 1] + errs[n / 2]);
    out.push_back(e);
  }
  return out;
}

RegressionReport eval_regression(const PoseRegressor& reg, const PoseRepresentation* representation,
                                 const SceneDataset& data, std::uint64_t seed) {
  if (data.spec.kind != reg.kind() || data.spec.width != reg.width() ||
      data.spec.height != reg.height()) {
    throw IncompatibleError("regressor and dataset disagree on kind or image size");
  }
  const auto test = data.split(false);
  if (test.empty()) throw ConfigError("regression: dataset has no held-out views");

  RegressionReport report;
  report.target = reg.target();
  report.seed = seed;
  report.predictions.resize(test.size());
  const std::size_t chunks = (test.size() + kEvalChunk - 1) / kEvalChunk;
  parallel_for(chunks, [&](std::size_t c) {
    ad::NoGradGuard guard;
    const std::size_t begin = c * kEvalChunk, end = std::min(test.size(), begin + kEvalChunk);
    const std::span<const ViewRef> refs(test.data() + begin, end - begin);
    const ad::Tensor out = reg.predict(image_rows(data, refs));
    const std::size_t w = out.cols();
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = out.values().subspan((i - begin) * w, w);
      report.predictions[i] = {test[i], data.at(test[i]).pose,
                               decode_prediction(reg.target(), reg.kind(), representation, row)};
    }
  });

  report.errors = pose_errors(reg.kind(), report.predictions);
  return report;
}

void write_report(const RegressionReport& report, const SceneDataset& data,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto dofs = active_dofs(data.spec.kind);
  const auto names = dof_columns(data.spec.kind);
  auto open = [](const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write " + p.string());
    return f;
  };
  char buf[256];
  {
    auto f = open(dir / "report.csv");
    f << "dof,mean_abs_err,median_abs_err,unit\n";
    for (std::size_t i = 0; i < report.errors.size(); ++i) {
      const auto& e = report.errors[i];
      std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%s\n", names[i].c_str(), e.mean_abs, e.median_abs,
                    e.unit.c_str());
      f << buf;
    }
  }
  for (std::size_t i = 0; i < dofs.size(); ++i) {
    auto f = open(dir / ("pred_" + names[i] + ".csv"));
    f << "view,true,pred\n";
    for (const auto& p : report.predictions) {
      const double scale = is_angle(dofs[i]) ? degrees(1.0) : 1.0;
      const std::size_t view = p.ref.scene * data.spec.views + p.ref.view;
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", view, p.truth[dofs[i]] * scale,
                    p.predicted[dofs[i]] * scale);
      f << buf;
    }
  }
}

}  // namespace posefield
