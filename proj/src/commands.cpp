#include "posefield/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "posefield/checkpoint.hpp"
#include "posefield/error.hpp"

namespace posefield {

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  return f;
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::string metrics_row(const MetricsRow& r) {
  return fmt("%llu,%.17g,%.17g,%.17g,%.17g,%.17g\n", static_cast<unsigned long long>(r.step), r.total,
             r.rec, r.rot_sum, r.rot_x, r.rot_theta);
}

constexpr const char* kMetricsHeader = "step,L_total,L_rec,L_rot_sum,L_rot_x,L_rot_theta\n";

/// Rows of an existing metrics file before `step` that an uninterrupted run
/// would also have logged.
std::string metrics_before(const fs::path& path, std::uint64_t step, std::uint64_t log_every) {
  std::ifstream in(path, std::ios::binary);
  std::string out = kMetricsHeader;
  if (!in) return out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto logged = std::stoull(line.substr(0, line.find(',')));
    if (logged < step && logged % log_every == 0) out += line + "\n";
  }
  return out;
}

const PoseRepresentation& learned_system(const TrainState& st, const fs::path& path) {
  if (!st.model.representation) {
    throw IncompatibleError(path.string() + " holds a coordinate-input model with no pose system");
  }
  return *st.model.representation;
}

Image side_by_side(const Image& a, const Image& b) {
  Image out(a.width + b.width, a.height);
  for (std::size_t r = 0; r < a.height; ++r) {
    for (std::size_t c = 0; c < out.width; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        out.pixels[(r * out.width + c) * 3 + ch] =
            c < a.width ? a.at(r, c, ch) : b.at(r, c - a.width, ch);
      }
    }
  }
  return out;
}

void write_gram(const fs::path& out, const std::string& name, const Matrix& g) {
  auto csv = open_out(out / ("gram_" + name + ".csv"));
  std::vector<double> shade(static_cast<std::size_t>(g.size()));
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      csv << fmt(j ? ",%.9g" : "%.9g", g(i, j));
      shade[static_cast<std::size_t>(i * g.cols() + j)] = (g(i, j) + 1.0) / 2.0;
    }
    csv << "\n";
  }
  write_pgm(out / ("gram_" + name + ".pgm"), static_cast<std::size_t>(g.cols()),
            static_cast<std::size_t>(g.rows()), shade);
}

}  // namespace

void write_ppm(const fs::path& path, const Image& image) {
  auto f = open_out(path);
  f << "P6\n" << image.width << " " << image.height << "\n255\n";
  for (float v : image.pixels) {
    f.put(static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f)));
  }
}

void write_pgm(const fs::path& path, std::size_t width, std::size_t height,
               std::span<const double> values) {
  if (values.size() != width * height) throw ShapeError("write_pgm: value count does not match size");
  auto f = open_out(path);
  f << "P5\n" << width << " " << height << "\n255\n";
  for (double v : values) {
    f.put(static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5)));
  }
}

void cmd_gen_data(const RunConfig& cfg, const fs::path& out) {
  save_dataset(build_dataset(cfg.dataset), out);
}

void cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out,
               const std::optional<fs::path>& resume) {
  const SceneDataset data = load_dataset(data_dir);
  TrainState state;
  if (resume) {
    LoadedSynthesis loaded = load_synthesis(*resume);
    check_same_shape(cfg.synthesis, loaded.config);
    state = std::move(loaded.state);
  } else {
    state = make_train_state(cfg.synthesis, data);
  }
  fs::create_directories(out);
  {
    auto f = open_out(out / "config.ini");
    f << render_config(cfg);
  }
  const std::string kept = metrics_before(out / "metrics.csv", resume ? state.step : 0,
                                         cfg.synthesis.log_every);
  auto metrics = open_out(out / "metrics.csv");
  metrics << kept;

  TrainHooks hooks;
  hooks.log = [&](const MetricsRow& r) {
    metrics << metrics_row(r);
    metrics.flush();
  };
  bool saved = false;
  hooks.checkpoint = [&](const TrainState& st) {
    save_synthesis(out / "checkpoint.pfck", cfg.synthesis, st);
    saved = true;
  };
  train_synthesis(state, cfg.synthesis, data, hooks);
  // Nothing left to train: still leave a checkpoint of the current state.
  if (!saved) save_synthesis(out / "checkpoint.pfck", cfg.synthesis, state);
}

void cmd_eval_synthesis(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data_dir,
                        const fs::path& out) {
  const SceneDataset data = load_dataset(data_dir);
  const LoadedSynthesis loaded = load_synthesis(checkpoint);
  const auto& model = loaded.state.model;
  const auto scores = eval_synthesis(model, data);
  const auto baseline = mean_image_baseline(data);

  auto csv = open_out(out / "psnr.csv");
  csv << "scene,view,psnr\n";
  for (const auto& s : scores) csv << fmt("%zu,%zu,%.9g\n", s.ref.scene, s.ref.view, s.psnr);
  auto summary = open_out(out / "summary.csv");
  summary << "mean_psnr,n,mean_image_baseline_psnr\n"
          << fmt("%.9g,%zu,%.9g\n", mean_psnr(scores), scores.size(), mean_psnr(baseline));

  const std::size_t dumps = std::min(cfg.eval.dump_images, scores.size());
  for (std::size_t i = 0; i < dumps; ++i) {
    const ViewRef ref = scores[i].ref;
    const View& view = data.at(ref);
    const Image pred = decode_view(model, ref.scene, view.pose);
    write_ppm(out / "views" / fmt("scene_%04zu_view_%04zu.ppm", ref.scene, ref.view),
              side_by_side(view.image, pred));
  }
}

void cmd_eval_noise(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data_dir,
                    const fs::path& out) {
  const SceneDataset data = load_dataset(data_dir);
  const LoadedSynthesis loaded = load_synthesis(checkpoint);
  const auto rows = noise_eval(loaded.state.model, data, cfg.eval.noise_alphas, cfg.seed);
  auto csv = open_out(out / "noise.csv");
  csv << "alpha,mean_psnr,std_psnr,n\n";
  for (const auto& r : rows) csv << fmt("%.9g,%.9g,%.9g,%zu\n", r.alpha, r.mean_psnr, r.std_psnr, r.n);
}

void cmd_train_regressor(const RunConfig& cfg, const std::optional<fs::path>& system,
                         const fs::path& data_dir, const fs::path& out) {
  const SceneDataset data = load_dataset(data_dir);
  std::optional<LoadedSynthesis> loaded;
  const PoseRepresentation* rep = nullptr;
  if (cfg.regression.target == TargetKind::learned) {
    if (!system) throw ConfigError("regression.target: learned targets need --checkpoint <synthesis checkpoint>");
    loaded = load_synthesis(*system);
    rep = &learned_system(loaded->state, *system);
  }
  std::vector<double> losses;
  const PoseRegressor reg = train_regressor(cfg.regression, data, rep, &losses);
  save_regressor(out / "regressor.pfck", cfg.regression, reg, rep);
  auto csv = open_out(out / "losses.csv");
  csv << "step,loss\n";
  for (std::size_t t = 0; t < losses.size(); ++t) csv << fmt("%zu,%.17g\n", t, losses[t]);
}

void cmd_eval_regression(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data_dir,
                         const fs::path& out) {
  const SceneDataset data = load_dataset(data_dir);
  const LoadedRegressor loaded = load_regressor(checkpoint);
  const PoseRepresentation* rep = loaded.representation ? &*loaded.representation : nullptr;
  const auto report = eval_regression(loaded.regressor, rep, data, cfg.seed);
  write_report(report, data, out);
}

void cmd_eval_gram(const RunConfig&, const fs::path& checkpoint, const fs::path& out) {
  const LoadedSynthesis loaded = load_synthesis(checkpoint);
  const auto& rep = learned_system(loaded.state, checkpoint);
  fs::create_directories(out);
  const auto names = dof_columns(rep.kind());
  const auto dofs = active_dofs(rep.kind());
  for (const auto& g : rep.dofs().grids()) {
    const auto it = std::find(dofs.begin(), dofs.end(), g.dof());
    write_gram(out, names[static_cast<std::size_t>(it - dofs.begin())], gram_matrix(g.vectors()));
  }
  if (rep.has_polar()) write_gram(out, "position", gram_matrix(rep.polar().vectors()));
}

}  // namespace posefield
