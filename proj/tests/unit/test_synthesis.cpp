#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "posefield/checkpoint.hpp"
#include "posefield/error.hpp"
#include "posefield/gradcheck.hpp"
#include "posefield/synthesis.hpp"

using namespace posefield;
namespace fs = std::filesystem;

namespace {

SceneDataset tiny_data(SceneKind kind, std::size_t side = 4, std::size_t scenes = 2, std::size_t views = 6) {
  DatasetSpec spec;
  spec.kind = kind;
  spec.width = spec.height = side;
  spec.scenes = scenes;
  spec.views = views;
  spec.seed = 17;
  return build_dataset(spec);
}

SynthesisConfig tiny_config() {
  SynthesisConfig cfg;
  cfg.representation.dim = 8;
  cfg.representation.block = 4;
  cfg.representation.position_grid = 5;
  cfg.representation.theta_bank = 12;
  cfg.representation.angle_grid = 12;
  cfg.representation.elevation_grid = 5;
  cfg.scene_dim = 4;
  cfg.hidden = {6};
  cfg.batch_views = 4;
  cfg.rotation_pairs = 8;
  cfg.iterations = 12;
  cfg.log_every = 1;
  cfg.checkpoint_every = 5;
  cfg.lr_decoder = 1e-3;
  cfg.seed = 5;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("psnr reference values") {
  const std::vector<float> a(48, 0.5f);
  CHECK(psnr(a, std::span<const float>(a)) == 99.0);
  const std::vector<double> b(48, 0.4);
  CHECK(psnr(a, std::span<const double>(b)) == doctest::Approx(20.0).epsilon(1e-9));
  const std::vector<double> c(48, 1.0);
  CHECK(psnr(a, std::span<const double>(c)) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-12));
  CHECK(psnr(a, std::span<const double>(c)) == doctest::Approx(6.0206).epsilon(1e-4));
  const std::vector<double> d(47, 0.4);
  CHECK_THROWS_AS((void)psnr(a, std::span<const double>(d)), ShapeError);
}

TEST_CASE("decoder output has one value per pixel channel, all in (0, 1)") {
  const auto data = tiny_data(SceneKind::turntable);
  const auto model = make_model(tiny_config(), SceneKind::turntable, 2, 4, 4);
  CHECK(model.pose_dim() == 16);
  CHECK(model.decoder.input_dim() == 4 + 16);
  Rng rng = make_rng(3);
  for (int i = 0; i < 20; ++i) {
    const Pose p = sample_pose(SceneKind::turntable, rng);
    const Image img = decode_view(model, static_cast<std::size_t>(i % 2), p);
    REQUIRE(img.pixels.size() == 48);
    for (float v : img.pixels) CHECK((v > 0.0f && v < 1.0f));
    CHECK(decode_view(model, static_cast<std::size_t>(i % 2), p) == img);
  }
  CHECK_THROWS_AS((void)decode_view(model, 2, Pose{}), RangeError);
}

TEST_CASE("scene vectors start and stay at unit norm") {
  const auto data = tiny_data(SceneKind::turntable);
  const auto cfg = tiny_config();
  TrainState st = make_train_state(cfg, data);
  auto check_norms = [&] {
    for (std::size_t s = 0; s < st.model.scene_count(); ++s) {
      double n = 0.0;
      for (std::size_t j = 0; j < cfg.scene_dim; ++j) n += st.model.scene_vectors.at(s, j) * st.model.scene_vectors.at(s, j);
      CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-9);
    }
  };
  check_norms();
  for (std::size_t t = 1; t <= 7; ++t) {
    auto step_cfg = cfg;
    step_cfg.iterations = t;
    train_synthesis(st, step_cfg, data);
    CHECK(st.step == t);
    check_norms();
  }
}

TEST_CASE("reported total is the weighted sum of its components") {
  auto cfg = tiny_config();
  cfg.lambda_rec = 0.3;
  cfg.lambda_rot = 7.0;
  cfg.lambda_rot_x = 11.0;
  cfg.lambda_rot_theta = 0.6;
  for (auto kind : {SceneKind::turntable, SceneKind::toyroom}) {
    const auto data = tiny_data(kind);
    TrainState st = make_train_state(cfg, data);
    std::vector<MetricsRow> rows;
    TrainHooks hooks;
    hooks.log = [&](const MetricsRow& r) { rows.push_back(r); };
    train_synthesis(st, cfg, data, hooks);
    REQUIRE(rows.size() == cfg.iterations);
    for (const auto& r : rows) {
      const double sum = cfg.lambda_rec * r.rec + cfg.lambda_rot * r.rot_sum +
                         cfg.lambda_rot_x * r.rot_x + cfg.lambda_rot_theta * r.rot_theta;
      CHECK(std::abs(r.total - sum) <= 1e-12 * std::max(1.0, std::abs(sum)));
      if (kind == SceneKind::turntable) {
        CHECK(r.rot_x == 0.0);
        CHECK(r.rot_theta == 0.0);
      } else {
        CHECK(r.rot_x > 0.0);
      }
    }
  }
}

TEST_CASE("end-to-end gradients over scene vectors, decoder, grids and generators") {
  // d = 8, 4×4 images; rotation terms included so generators see both paths.
  for (auto kind : {SceneKind::turntable, SceneKind::toyroom}) {
    const auto data = tiny_data(kind);
    auto cfg = tiny_config();
    auto model = make_model(cfg, kind, 2, 4, 4);
    const auto train = data.split(true);
    const std::vector<ViewRef> batch(train.begin(), train.begin() + 4);
    auto build = [&] {
      Rng pairs = make_rng(99);
      return synthesis_losses(model, cfg, data, batch, pairs).total;
    };
    // The reconstruction path alone, where no rotation term can mask an error.
    auto cfg_rec = cfg;
    cfg_rec.lambda_rot = cfg_rec.lambda_rot_x = cfg_rec.lambda_rot_theta = 0.0;
    auto build_rec = [&] {
      Rng pairs = make_rng(99);
      return synthesis_losses(model, cfg_rec, data, batch, pairs).total;
    };
    std::vector<ad::Tensor> params = model.decoder_parameters();
    for (auto& p : model.pose_parameters()) params.push_back(p);
    const auto rec = check_gradients(params, build_rec);
    INFO("kind " << kind_name(kind) << " rec max rel " << rec.max());
    CHECK(rec.ok());

    // With the rotation terms the total is large, so central differences of
    // small gradients carry roundoff of order ε·|L|/h. Flagged entries must sit
    // within ten times that floor.
    const double eps = 1e-5;
    const double floor = 10.0 * 2.2e-16 * std::abs(build().item()) / eps;
    const auto both = check_gradients(params, build, eps, 1e-4);
    std::size_t unresolved = 0;
    for (const auto& e : both.flagged) {
      if (std::abs(e.analytic - e.numeric) > floor) ++unresolved;
    }
    CHECK(unresolved == 0);
  }
}

TEST_CASE("training is deterministic down to checkpoint bytes") {
  const auto data = tiny_data(SceneKind::toyroom);
  const auto cfg = tiny_config();
  const fs::path dir = fs::temp_directory_path() / "posefield_test_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (const char* name : {"a.pfck", "b.pfck"}) {
    TrainState st = make_train_state(cfg, data);
    train_synthesis(st, cfg, data);
    save_synthesis(dir / name, cfg, st);
  }
  CHECK(slurp(dir / "a.pfck") == slurp(dir / "b.pfck"));
}

TEST_CASE("the checkpoint hook fires at boundaries and at the end") {
  const auto data = tiny_data(SceneKind::turntable);
  const auto cfg = tiny_config();
  TrainState st = make_train_state(cfg, data);
  std::vector<std::uint64_t> steps;
  TrainHooks hooks;
  hooks.checkpoint = [&](const TrainState& s) { steps.push_back(s.step); };
  train_synthesis(st, cfg, data, hooks);
  CHECK(steps == std::vector<std::uint64_t>{5, 10, 12});
}

TEST_CASE("an injected NaN stops training after handing over the last good state") {
  const auto data = tiny_data(SceneKind::turntable);
  auto cfg = tiny_config();
  cfg.inject_nan_at_step = 7;
  TrainState st = make_train_state(cfg, data);
  std::vector<std::uint64_t> steps;
  TrainHooks hooks;
  hooks.checkpoint = [&](const TrainState& s) { steps.push_back(s.step); };
  CHECK_THROWS_AS(train_synthesis(st, cfg, data, hooks), NonFiniteLossError);
  CHECK(steps == std::vector<std::uint64_t>{5, 7});
  CHECK(st.step == 7);
}

TEST_CASE("the coordinate baseline trains only its decoder") {
  const auto data = tiny_data(SceneKind::toyroom);
  auto cfg = tiny_config();
  cfg.input = PoseInput::coordinates;
  TrainState st = make_train_state(cfg, data);
  CHECK_FALSE(st.model.representation.has_value());
  CHECK(st.model.pose_dim() == 3);
  CHECK(st.model.pose_parameters().empty());
  const auto before = st.model.decoder_parameters()[0].values();
  const std::vector<double> w0(before.begin(), before.end());
  train_synthesis(st, cfg, data);
  CHECK(st.step == cfg.iterations);
  const auto after = st.model.decoder_parameters()[0].values();
  CHECK_FALSE(std::equal(w0.begin(), w0.end(), after.begin()));
}

TEST_CASE("invalid training configs name the field") {
  auto cfg = tiny_config();
  cfg.lambda_rot = -1.0;
  try {
    validate(cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("lambda_rot") != std::string::npos);
  }
  cfg = tiny_config();
  cfg.pose_updates_per_decoder_update = 0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  CHECK_NOTHROW(validate(SynthesisConfig{}));
}

TEST_CASE("defaults are the published weights and learning rates") {
  const SynthesisConfig cfg;
  CHECK(cfg.lambda_rec == 0.05);
  CHECK(cfg.lambda_rot == 100.0);
  CHECK(cfg.lambda_rot_x == 100.0);
  CHECK(cfg.lambda_rot_theta == 0.8);
  CHECK(cfg.lr_pose == 0.01);
  CHECK(cfg.lr_decoder == 1e-4);
  CHECK(cfg.pose_updates_per_decoder_update == 3);
}

TEST_CASE("noise of magnitude zero reproduces the plain evaluation") {
  const auto data = tiny_data(SceneKind::turntable, 4, 3, 10);
  const auto cfg = tiny_config();
  TrainState st = make_train_state(cfg, data);
  train_synthesis(st, cfg, data);
  const auto scores = eval_synthesis(st.model, data);
  CHECK(scores.size() == data.split(false).size());
  const std::vector<double> alphas{0.0, 0.5, 4.0};
  const auto rows = noise_eval(st.model, data, alphas, 3);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].mean_psnr == mean_psnr(scores));
  CHECK(rows[0].std_psnr >= 0.0);
  CHECK(rows[0].n == scores.size());
  CHECK(rows[2].mean_psnr != rows[0].mean_psnr);
  const auto again = noise_eval(st.model, data, alphas, 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(again[i].mean_psnr == rows[i].mean_psnr);
}

TEST_CASE("mean-image baseline is exact on a scene whose views are all equal") {
  auto data = tiny_data(SceneKind::turntable, 4, 1, 8);
  for (auto& v : data.scenes[0].views) v.image = data.scenes[0].views[0].image;
  for (const auto& s : mean_image_baseline(data)) CHECK(s.psnr == 99.0);
}

TEST_CASE("a single view of a single scene can be memorized") {
  DatasetSpec spec;
  spec.kind = SceneKind::turntable;
  spec.width = spec.height = 8;
  spec.scenes = 1;
  spec.views = 1;
  spec.train_fraction = 1.0;
  spec.seed = 3;
  const auto data = build_dataset(spec);
  auto cfg = tiny_config();
  cfg.lambda_rec = 1.0;
  cfg.lambda_rot = cfg.lambda_rot_x = cfg.lambda_rot_theta = 0.0;
  cfg.hidden = {32};
  cfg.pose_updates_per_decoder_update = 1;
  cfg.batch_views = 1;
  cfg.iterations = 2000;
  cfg.log_every = 100000;
  cfg.checkpoint_every = 100000;
  cfg.lr_decoder = 1e-2;
  double last = 0.0;
  TrainHooks hooks;
  hooks.log = [&](const MetricsRow& r) { last = r.rec; };
  TrainState st = make_train_state(cfg, data);
  train_synthesis(st, cfg, data, hooks);
  CHECK(last / static_cast<double>(8 * 8 * 3) < 1e-4);
}
