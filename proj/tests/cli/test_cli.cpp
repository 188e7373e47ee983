#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <string>

#include "posefield/sha256.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "posefield_cli_test";

struct Result {
  int code = 0;
  std::string err;
};

Result run(const std::string& args) {
  fs::create_directories(kRoot);
  const fs::path err = kRoot / "stderr.txt";
  const std::string cmd = std::string(POSEFIELD_BIN) + " " + args + " 2> " + err.string() + " > /dev/null";
  const int status = std::system(cmd.c_str());
  std::ifstream in(err);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

fs::path write_config(const std::string& name, const std::string& text) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  std::ofstream(p) << text;
  return p;
}

fs::path fresh(const std::string& name) {
  const fs::path p = kRoot / name;
  fs::remove_all(p);
  return p;
}

std::map<std::string, std::string> tree_hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = posefield::sha256_file(e.path());
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

const char* kSmall = R"(seed = 3

[scene-synth]
kind = turntable
width = 6
height = 6
scenes = 3
views = 12

[pose-rep]
dim = 8
block = 4
angle_grid = 12
elevation_grid = 5

[synthesis-model]
scene_dim = 4
hidden = 8
iterations = 10
batch_views = 4
rotation_pairs = 4
noise_alphas = 0

[regression]
trunk = 8, 6
iterations = 5
batch_views = 4

[cli]
log_every = 3
checkpoint_every = 5
dump_images = 2
)";

std::string replaced(std::string text, const std::string& from, const std::string& to) {
  const auto at = text.find(from);
  REQUIRE(at != std::string::npos);
  return text.replace(at, from.size(), to);
}

std::string with(const std::string& base, const std::string& section, const std::string& line) {
  std::string text = base;
  const std::string header = "[" + section + "]\n";
  const auto at = text.find(header);
  REQUIRE(at != std::string::npos);
  text.insert(at + header.size(), line + "\n");
  return text;
}

}  // namespace

TEST_CASE("gen-data twice gives identical directory checksums") {
  const auto cfg = write_config("small.ini", kSmall);
  const auto a = fresh("gen_a"), b = fresh("gen_b");
  REQUIRE(run("gen-data --config " + cfg.string() + " --out " + a.string()).code == 0);
  REQUIRE(run("gen-data --config " + cfg.string() + " --out " + b.string()).code == 0);
  CHECK(tree_hashes(a) == tree_hashes(b));
  CHECK(tree_hashes(a).size() == 1 + 2 * 3);
}

TEST_CASE("default config generates 50 scenes × 60 views") {
  const auto out = fresh("gen_default");
  REQUIRE(run("gen-data --out " + out.string()).code == 0);
  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["kind"] == "turntable");
  CHECK(manifest["counts"]["scenes"] == 50);
  CHECK(manifest["counts"]["views_per_scene"] == 60);
  CHECK(manifest["counts"]["images"] == 3000);
}

TEST_CASE("invalid kind exits nonzero naming the field") {
  const auto cfg = write_config("badkind.ini", "[scene-synth]\nkind = garage\n");
  const auto r = run("gen-data --config " + cfg.string() + " --out " + fresh("bad").string());
  CHECK(r.code != 0);
  CHECK(r.err.find("scene-synth.kind") != std::string::npos);
}

TEST_CASE("unknown keys and missing flags exit nonzero") {
  const auto cfg = write_config("badkey.ini", "[scene-synth]\nsize = 3\n");
  CHECK(run("gen-data --config " + cfg.string() + " --out " + fresh("bad").string()).code != 0);
  const auto r = run("train --config " + write_config("small.ini", kSmall).string());
  CHECK(r.code != 0);
  CHECK(r.err.find("--out") != std::string::npos);
  CHECK(run("eval-synthesis --out " + fresh("bad").string()).code != 0);
}

TEST_CASE("training writes metrics rows for the logged steps and a checkpoint") {
  const auto cfg = write_config("small.ini", kSmall);
  const auto data = fresh("data");
  REQUIRE(run("gen-data --config " + cfg.string() + " --out " + data.string()).code == 0);
  const auto out = fresh("train_full");
  REQUIRE(run("train --config " + cfg.string() + " --data " + data.string() + " --out " + out.string()).code == 0);
  CHECK(fs::exists(out / "checkpoint.pfck"));
  CHECK(fs::exists(out / "config.ini"));
  const auto rows = read_csv(out / "metrics.csv");
  REQUIRE(rows.size() == 1 + 4);
  CHECK(rows[0] == std::vector<std::string>{"step", "L_total", "L_rec", "L_rot_sum", "L_rot_x", "L_rot_theta"});
  const std::vector<std::string> steps{"0", "3", "6", "9"};
  for (std::size_t i = 0; i < steps.size(); ++i) CHECK(rows[i + 1][0] == steps[i]);
}

TEST_CASE("resuming from the midpoint checkpoint reproduces the uninterrupted run") {
  const auto cfg = write_config("small.ini", kSmall);
  const auto data = kRoot / "data";
  if (!fs::exists(data / "manifest.json")) {
    REQUIRE(run("gen-data --config " + cfg.string() + " --out " + data.string()).code == 0);
  }
  const auto full = fresh("resume_full");
  REQUIRE(run("train --config " + cfg.string() + " --data " + data.string() + " --out " + full.string()).code == 0);

  const auto half_cfg = write_config("half.ini", replaced(kSmall, "iterations = 10", "iterations = 5"));
  const auto part = fresh("resume_part");
  REQUIRE(run("train --config " + half_cfg.string() + " --data " + data.string() + " --out " + part.string()).code == 0);
  fs::copy_file(part / "checkpoint.pfck", kRoot / "mid.pfck", fs::copy_options::overwrite_existing);
  REQUIRE(run("train --config " + cfg.string() + " --data " + data.string() + " --out " + part.string() +
              " --checkpoint " + (kRoot / "mid.pfck").string())
              .code == 0);
  CHECK(slurp(part / "checkpoint.pfck") == slurp(full / "checkpoint.pfck"));
  CHECK(slurp(part / "metrics.csv") == slurp(full / "metrics.csv"));
}

TEST_CASE("a NaN loss exits nonzero and leaves the last good checkpoint") {
  const auto cfg = write_config("nan.ini", with(kSmall, "cli", "inject_nan_at_step = 7"));
  const auto data = kRoot / "data";
  if (!fs::exists(data / "manifest.json")) {
    REQUIRE(run("gen-data --config " + write_config("small.ini", kSmall).string() + " --out " + data.string()).code == 0);
  }
  const auto out = fresh("nan");
  const auto r = run("train --config " + cfg.string() + " --data " + data.string() + " --out " + out.string());
  CHECK(r.code != 0);
  CHECK(r.err.find("non-finite") != std::string::npos);
  REQUIRE(fs::exists(out / "checkpoint.pfck"));
  // The saved state is loadable.
  CHECK(run("eval-gram --checkpoint " + (out / "checkpoint.pfck").string() + " --out " + fresh("nan_gram").string())
            .code == 0);
}

TEST_CASE("evaluation commands: synthesis, zero noise, gram, regression") {
  const auto cfg = write_config("small.ini", kSmall);
  const auto data = kRoot / "data";
  if (!fs::exists(data / "manifest.json")) {
    REQUIRE(run("gen-data --config " + cfg.string() + " --out " + data.string()).code == 0);
  }
  const auto train = fresh("eval_train");
  REQUIRE(run("train --config " + cfg.string() + " --data " + data.string() + " --out " + train.string()).code == 0);
  const std::string ckpt = (train / "checkpoint.pfck").string();
  const std::string common = " --config " + cfg.string() + " --data " + data.string() + " --checkpoint " + ckpt;

  const auto syn = fresh("eval_syn");
  REQUIRE(run("eval-synthesis" + common + " --out " + syn.string()).code == 0);
  const auto manifest = nlohmann::json::parse(slurp(data / "manifest.json"));
  const auto psnr = read_csv(syn / "psnr.csv");
  CHECK(psnr[0] == std::vector<std::string>{"scene", "view", "psnr"});
  CHECK(psnr.size() == 1 + manifest["counts"]["test"].get<std::size_t>());
  const auto summary = read_csv(syn / "summary.csv");
  REQUIRE(summary.size() == 2);
  std::size_t ppms = 0;
  for (const auto& e : fs::directory_iterator(syn / "views")) ppms += e.path().extension() == ".ppm";
  CHECK(ppms == 2);
  const auto before = tree_hashes(syn);
  REQUIRE(run("eval-synthesis" + common + " --out " + syn.string()).code == 0);
  CHECK(tree_hashes(syn) == before);

  const auto noise = fresh("eval_noise");
  REQUIRE(run("eval-noise" + common + " --out " + noise.string()).code == 0);
  const auto rows = read_csv(noise / "noise.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == std::vector<std::string>{"alpha", "mean_psnr", "std_psnr", "n"});
  CHECK(rows[1][0] == "0");
  CHECK(rows[1][1] == summary[1][0]);

  const auto gram = fresh("eval_gram");
  REQUIRE(run("eval-gram --checkpoint " + ckpt + " --out " + gram.string()).code == 0);
  for (const char* name : {"gram_theta", "gram_phi"}) {
    const auto g = read_csv(gram / (std::string(name) + ".csv"));
    REQUIRE(g.size() == (std::string(name) == "gram_theta" ? 12u : 5u));
    for (std::size_t i = 0; i < g.size(); ++i) {
      REQUIRE(g[i].size() == g.size());
      CHECK(std::stod(g[i][i]) == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK(fs::exists(gram / (std::string(name) + ".pgm")));
  }

  const auto reg = fresh("eval_reg");
  const auto r = run("train-regressor --config " + cfg.string() + " --data " + data.string() + " --out " + reg.string());
  CHECK(r.code != 0);
  CHECK(r.err.find("--checkpoint") != std::string::npos);
  REQUIRE(run("train-regressor" + common + " --out " + reg.string()).code == 0);
  CHECK(read_csv(reg / "losses.csv").size() == 1 + 5);
  const auto rep = fresh("eval_reg_report");
  REQUIRE(run("eval-regression" + common.substr(0, common.find(" --checkpoint")) + " --checkpoint " +
              (reg / "regressor.pfck").string() + " --out " + rep.string())
              .code == 0);
  const auto report = read_csv(rep / "report.csv");
  REQUIRE(report.size() == 3);
  CHECK(report[1][0] == "theta");
  CHECK(report[2][0] == "phi");
  CHECK(report[1][3] == "deg");
  CHECK(fs::exists(rep / "pred_theta.csv"));
}

TEST_CASE("a freshly initialized pose system has a unit Gram diagonal") {
  const auto cfg = write_config("fresh.ini", replaced(kSmall, "iterations = 10", "iterations = 0"));
  const auto data = kRoot / "data";
  if (!fs::exists(data / "manifest.json")) {
    REQUIRE(run("gen-data --config " + write_config("small.ini", kSmall).string() + " --out " + data.string()).code == 0);
  }
  const auto train = fresh("fresh_train");
  REQUIRE(run("train --config " + cfg.string() + " --data " + data.string() + " --out " + train.string()).code == 0);
  const auto gram = fresh("fresh_gram");
  REQUIRE(run("eval-gram --checkpoint " + (train / "checkpoint.pfck").string() + " --out " + gram.string()).code == 0);
  const auto g = read_csv(gram / "gram_theta.csv");
  double off = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(std::stod(g[i][i]) == doctest::Approx(1.0).epsilon(1e-6));
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (i != j) off = std::max(off, std::abs(std::stod(g[i][j])));
    }
  }
  CHECK(off < 1.0);
}

TEST_CASE("a checkpoint for other data is an incompatibility error") {
  const auto small = write_config("small.ini", kSmall);
  const auto data = kRoot / "data";
  if (!fs::exists(data / "manifest.json")) {
    REQUIRE(run("gen-data --config " + small.string() + " --out " + data.string()).code == 0);
  }
  const auto train = fresh("compat_train");
  REQUIRE(run("train --config " + small.string() + " --data " + data.string() + " --out " + train.string()).code == 0);
  const auto other_cfg = write_config("other.ini", replaced(kSmall, "scenes = 3", "scenes = 4"));
  const auto other = fresh("compat_data");
  REQUIRE(run("gen-data --config " + other_cfg.string() + " --out " + other.string()).code == 0);
  const auto r = run("eval-synthesis --data " + other.string() + " --checkpoint " +
                     (train / "checkpoint.pfck").string() + " --out " + fresh("compat_eval").string());
  CHECK(r.code != 0);
  CHECK(r.err.find("does not match") != std::string::npos);
  const auto t = run("train --config " + small.string() + " --data " + other.string() + " --out " +
                     fresh("compat_resume").string() + " --checkpoint " + (train / "checkpoint.pfck").string());
  CHECK(t.code != 0);
}
