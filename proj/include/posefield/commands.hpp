#pragma once

#include <filesystem>
#include <optional>

#include "posefield/config.hpp"

namespace posefield {

namespace fs = std::filesystem;

/// Dataset directory at `out`.
void cmd_gen_data(const RunConfig& cfg, const fs::path& out);

/// Writes out/checkpoint.pfck (every cli.checkpoint_every steps and at the
/// end), out/metrics.csv and out/config.ini. With `resume`, training continues
/// from that checkpoint and metrics rows from that step on are rewritten.
/// Throws NonFiniteLossError after saving the last good state.
void cmd_train(const RunConfig& cfg, const fs::path& data, const fs::path& out,
               const std::optional<fs::path>& resume);

/// out/psnr.csv (scene,view,psnr), out/summary.csv and side-by-side
/// truth|prediction PPMs under out/views/.
void cmd_eval_synthesis(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data,
                        const fs::path& out);

/// out/noise.csv with columns alpha,mean_psnr,std_psnr,n.
void cmd_eval_noise(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data,
                    const fs::path& out);

/// out/regressor.pfck and out/losses.csv. Learned targets read the pose
/// system from the synthesis checkpoint, which is left untouched.
void cmd_train_regressor(const RunConfig& cfg, const std::optional<fs::path>& system,
                         const fs::path& data, const fs::path& out);

/// out/report.csv and out/pred_<dof>.csv.
void cmd_eval_regression(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data,
                         const fs::path& out);

/// Per-DOF gram_<dof>.csv and gram_<dof>.pgm; for a polar system also
/// gram_position.* over all position grid points.
void cmd_eval_gram(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out);

/// Binary PPM (P6) and PGM (P5) writers for values in [0, 1].
void write_ppm(const fs::path& path, const Image& image);
void write_pgm(const fs::path& path, std::size_t width, std::size_t height,
               std::span<const double> values);

}  // namespace posefield
