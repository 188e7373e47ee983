#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "posefield/commands.hpp"
#include "posefield/error.hpp"

namespace {

struct Flags {
  std::string config;
  std::string data;
  std::string out;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
};

posefield::RunConfig resolve(const Flags& f) {
  posefield::RunConfig cfg = f.config.empty() ? posefield::parse_config("") : posefield::load_config(f.config);
  if (f.seed) cfg.set_seed(*f.seed);
  return cfg;
}

void require(const std::string& value, const char* flag, const std::string& command) {
  if (value.empty()) throw posefield::ConfigError(command + ": " + flag + " is required");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"posefield: learned camera-pose representations trained by view synthesis"};
  app.require_subcommand(1);
  Flags flags;

  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "INI config file (defaults when omitted)");
    sub->add_option("--data", flags.data, "dataset directory");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--seed", flags.seed, "overrides the config seed");
    sub->add_option("--checkpoint", flags.checkpoint, "checkpoint to read");
    return sub;
  };
  auto* gen = add("gen-data", "render a dataset into --out");
  auto* train = add("train", "train pose system and decoder; --checkpoint resumes");
  auto* eval_syn = add("eval-synthesis", "held-out PSNR and image dumps");
  auto* eval_noise = add("eval-noise", "PSNR under pose-vector noise");
  auto* train_reg = add("train-regressor", "image to pose regressor; --checkpoint gives the pose system");
  auto* eval_reg = add("eval-regression", "pose errors of a trained regressor");
  auto* eval_gram = add("eval-gram", "Gram matrices of the learned pose vectors");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = resolve(flags);
    const std::optional<posefield::fs::path> ckpt =
        flags.checkpoint.empty() ? std::nullopt : std::optional<posefield::fs::path>(flags.checkpoint);
    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    require(flags.out, "--out", name);
    if (cmd != gen && cmd != eval_gram) require(flags.data, "--data", name);
    if (cmd == eval_syn || cmd == eval_noise || cmd == eval_reg || cmd == eval_gram) {
      require(flags.checkpoint, "--checkpoint", name);
    }

    if (cmd == gen) {
      posefield::cmd_gen_data(cfg, flags.out);
    } else if (cmd == train) {
      posefield::cmd_train(cfg, flags.data, flags.out, ckpt);
    } else if (cmd == eval_syn) {
      posefield::cmd_eval_synthesis(cfg, *ckpt, flags.data, flags.out);
    } else if (cmd == eval_noise) {
      posefield::cmd_eval_noise(cfg, *ckpt, flags.data, flags.out);
    } else if (cmd == train_reg) {
      posefield::cmd_train_regressor(cfg, ckpt, flags.data, flags.out);
    } else if (cmd == eval_reg) {
      posefield::cmd_eval_regression(cfg, *ckpt, flags.data, flags.out);
    } else if (cmd == eval_gram) {
      posefield::cmd_eval_gram(cfg, *ckpt, flags.out);
    }
  } catch (const posefield::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
