#include "posefield/dataset.hpp"

#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <json.hpp>

#include "posefield/error.hpp"
#include "posefield/parallel.hpp"
#include "posefield/sha256.hpp"

namespace posefield {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "images.f32 is written natively");

double round_sig9(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return std::strtod(buf, nullptr);
}

std::size_t SceneDataset::view_count() const {
  std::size_t n = 0;
  for (const auto& s : scenes) n += s.views.size();
  return n;
}

std::vector<ViewRef> SceneDataset::split(bool train) const {
  std::vector<ViewRef> out;
  for (std::size_t s = 0; s < scenes.size(); ++s)
    for (std::size_t v = 0; v < scenes[s].views.size(); ++v)
      if (scenes[s].views[v].train == train) out.push_back({s, v});
  return out;
}

void validate(const DatasetSpec& spec) {
  if (spec.width == 0 || spec.width > 32) throw ConfigError("scene-synth.width: must be in [1, 32]");
  if (spec.height == 0 || spec.height > 32) throw ConfigError("scene-synth.height: must be in [1, 32]");
  if (spec.scenes == 0) throw ConfigError("scene-synth.scenes: must be positive");
  if (spec.views == 0) throw ConfigError("scene-synth.views: must be positive");
  if (!(spec.train_fraction >= 0.0 && spec.train_fraction <= 1.0)) {
    throw ConfigError("scene-synth.train_fraction: must be in [0, 1]");
  }
}

namespace {

Pose rounded_pose(SceneKind kind, Rng& rng) {
  Pose p = sample_pose(kind, rng);
  for (Dof d : active_dofs(kind)) {
    double v = round_sig9(p[d]);
    if (d == Dof::alpha && v >= kTwoPi) v = 0.0;
    p[d] = v;
  }
  return p;
}

std::string scene_dir(std::size_t s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu", s);
  return buf;
}

json color_json(const Color& c) { return json::array({c[0], c[1], c[2]}); }
Color color_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json scene_json(const SceneSpec& spec) {
  if (const auto* toy = std::get_if<ToyScene>(&spec)) {
    json walls = json::array();
    for (std::size_t w = 0; w < 4; ++w) {
      walls.push_back({{"color", color_json(toy->wall_colors[w])},
                       {"stripes", toy->stripe_counts[w]},
                       {"stripe_color", color_json(toy->stripe_colors[w])}});
    }
    json pillars = json::array();
    for (const auto& p : toy->pillars) {
      pillars.push_back({{"center", {p.cx, p.cy}},
                         {"half_width", p.half_width},
                         {"height_fraction", p.height_fraction},
                         {"color", color_json(p.color)}});
    }
    return {{"walls", walls},
            {"pillars", pillars},
            {"floor", color_json(toy->floor)},
            {"ceiling", color_json(toy->ceiling)}};
  }
  json blobs = json::array();
  for (const auto& b : std::get<TurntableScene>(spec).blobs) {
    blobs.push_back({{"position", {b.position[0], b.position[1], b.position[2]}},
                     {"radius", b.radius},
                     {"color", color_json(b.color)}});
  }
  return {{"blobs", blobs}};
}

SceneSpec scene_from(SceneKind kind, const json& j) {
  if (kind == SceneKind::toyroom) {
    ToyScene toy;
    const auto& walls = j.at("walls");
    for (std::size_t w = 0; w < 4; ++w) {
      toy.wall_colors[w] = color_from(walls.at(w).at("color"));
      toy.stripe_counts[w] = walls.at(w).at("stripes").get<int>();
      toy.stripe_colors[w] = color_from(walls.at(w).at("stripe_color"));
    }
    for (const auto& p : j.at("pillars")) {
      Pillar pillar;
      pillar.cx = p.at("center").at(0).get<double>();
      pillar.cy = p.at("center").at(1).get<double>();
      pillar.half_width = p.at("half_width").get<double>();
      pillar.height_fraction = p.at("height_fraction").get<double>();
      pillar.color = color_from(p.at("color"));
      toy.pillars.push_back(pillar);
    }
    toy.floor = color_from(j.at("floor"));
    toy.ceiling = color_from(j.at("ceiling"));
    return toy;
  }
  TurntableScene tt;
  for (const auto& b : j.at("blobs")) {
    Blob blob;
    for (std::size_t i = 0; i < 3; ++i) blob.position[i] = b.at("position").at(i).get<double>();
    blob.radius = b.at("radius").get<double>();
    blob.color = color_from(b.at("color"));
    tt.blobs.push_back(blob);
  }
  return tt;
}

std::string poses_csv(SceneKind kind, const SceneRecord& rec) {
  std::string out = "view";
  for (const auto& c : dof_columns(kind)) out += "," + c;
  out += "\n";
  const auto dofs = active_dofs(kind);
  char buf[40];
  for (std::size_t v = 0; v < rec.views.size(); ++v) {
    out += std::to_string(v);
    for (Dof d : dofs) {
      std::snprintf(buf, sizeof buf, ",%.9g", rec.views[v].pose[d]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string images_blob(const SceneRecord& rec) {
  std::string out;
  for (const auto& v : rec.views) {
    out.append(reinterpret_cast<const char*>(v.image.pixels.data()),
               v.image.pixels.size() * sizeof(float));
  }
  return out;
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptionError("missing file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

SceneDataset build_dataset(const DatasetSpec& spec) {
  validate(spec);
  SceneDataset ds;
  ds.spec = spec;
  ds.scenes.resize(spec.scenes);
  for (std::size_t s = 0; s < spec.scenes; ++s) {
    Rng rng = make_rng(spec.seed, {streams::kScene, s});
    if (spec.kind == SceneKind::toyroom) {
      ds.scenes[s].scene = random_toy_scene(rng);
    } else {
      ds.scenes[s].scene = random_turntable_scene(rng);
    }
    ds.scenes[s].views.resize(spec.views);
  }
  parallel_for(spec.scenes * spec.views, [&](std::size_t i) {
    const std::size_t s = i / spec.views, v = i % spec.views;
    Rng pose_rng = make_rng(spec.seed, {streams::kView, s, v});
    Rng split_rng = make_rng(spec.seed, {streams::kSplit, s, v});
    View& view = ds.scenes[s].views[v];
    view.pose = rounded_pose(spec.kind, pose_rng);
    view.train = uniform(split_rng, 0.0, 1.0) < spec.train_fraction;
    view.image = render(ds.scenes[s].scene, view.pose, spec.width, spec.height);
  });
  return ds;
}

void save_dataset(const SceneDataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
  const auto& spec = ds.spec;

  json manifest;
  manifest["format_version"] = kDatasetFormatVersion;
  manifest["kind"] = std::string(kind_name(spec.kind));
  manifest["W"] = spec.width;
  manifest["H"] = spec.height;
  manifest["seed"] = spec.seed;
  manifest["train_fraction"] = spec.train_fraction;
  json ranges = json::object();
  const auto dofs = active_dofs(spec.kind);
  const auto r = pose_ranges(spec.kind);
  const auto cols = dof_columns(spec.kind);
  for (std::size_t i = 0; i < dofs.size(); ++i) ranges[cols[i]] = {r[i][0], r[i][1]};
  manifest["ranges"] = ranges;
  const auto train = ds.split(true), test = ds.split(false);
  manifest["counts"] = {{"scenes", ds.scenes.size()},
                        {"views_per_scene", spec.views},
                        {"images", ds.view_count()},
                        {"train", train.size()},
                        {"test", test.size()}};
  json splits = {{"train", json::array()}, {"test", json::array()}};
  for (const auto& ref : train) splits["train"].push_back({ref.scene, ref.view});
  for (const auto& ref : test) splits["test"].push_back({ref.scene, ref.view});
  manifest["splits"] = splits;

  json scenes = json::array();
  for (std::size_t s = 0; s < ds.scenes.size(); ++s) {
    const fs::path sub = dir / scene_dir(s);
    fs::create_directories(sub, ec);
    if (ec) throw Error("cannot create " + sub.string() + ": " + ec.message());
    const std::string csv = poses_csv(spec.kind, ds.scenes[s]);
    const std::string blob = images_blob(ds.scenes[s]);
    write_file(sub / "poses.csv", csv);
    write_file(sub / "images.f32", blob);
    scenes.push_back({{"dir", scene_dir(s)},
                      {"spec", scene_json(ds.scenes[s].scene)},
                      {"sha256",
                       {{"poses.csv", sha256_hex(csv)}, {"images.f32", sha256_hex(blob)}}}});
  }
  manifest["scenes"] = scenes;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

SceneDataset load_dataset(const fs::path& dir) {
  const std::string text = read_file(dir / "manifest.json");
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("manifest.json is not valid JSON: " + std::string(e.what()));
  }
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kDatasetFormatVersion) {
      throw FormatError("manifest.json format_version " + std::to_string(version) +
                        " is not supported (expected " + std::to_string(kDatasetFormatVersion) +
                        ")");
    }
    SceneDataset ds;
    auto& spec = ds.spec;
    spec.kind = parse_kind(manifest.at("kind").get<std::string>());
    spec.width = manifest.at("W").get<std::size_t>();
    spec.height = manifest.at("H").get<std::size_t>();
    spec.seed = manifest.at("seed").get<std::uint64_t>();
    spec.train_fraction = manifest.at("train_fraction").get<double>();
    spec.views = manifest.at("counts").at("views_per_scene").get<std::size_t>();
    const auto& scenes = manifest.at("scenes");
    spec.scenes = scenes.size();
    validate(spec);

    const auto dofs = active_dofs(spec.kind);
    const std::size_t pixels = spec.width * spec.height * 3;
    ds.scenes.resize(spec.scenes);
    for (std::size_t s = 0; s < spec.scenes; ++s) {
      const auto& entry = scenes.at(s);
      const fs::path sub = dir / entry.at("dir").get<std::string>();
      auto& rec = ds.scenes[s];
      rec.scene = scene_from(spec.kind, entry.at("spec"));

      const std::string csv = read_file(sub / "poses.csv");
      if (sha256_hex(csv) != entry.at("sha256").at("poses.csv").get<std::string>()) {
        throw CorruptionError("checksum mismatch in " + (sub / "poses.csv").string());
      }
      const std::string blob = read_file(sub / "images.f32");
      if (sha256_hex(blob) != entry.at("sha256").at("images.f32").get<std::string>()) {
        throw CorruptionError("checksum mismatch in " + (sub / "images.f32").string());
      }
      if (blob.size() != spec.views * pixels * sizeof(float)) {
        throw CorruptionError("unexpected size of " + (sub / "images.f32").string());
      }

      rec.views.resize(spec.views);
      std::istringstream lines(csv);
      std::string line;
      std::getline(lines, line);  // header
      for (std::size_t v = 0; v < spec.views; ++v) {
        if (!std::getline(lines, line)) {
          throw CorruptionError("too few rows in " + (sub / "poses.csv").string());
        }
        std::istringstream row(line);
        std::string cell;
        std::getline(row, cell, ',');
        for (Dof d : dofs) {
          std::getline(row, cell, ',');
          rec.views[v].pose[d] = std::strtod(cell.c_str(), nullptr);
        }
        Image img(spec.width, spec.height);
        std::memcpy(img.pixels.data(), blob.data() + v * pixels * sizeof(float),
                    pixels * sizeof(float));
        rec.views[v].image = std::move(img);
        rec.views[v].train = false;
      }
    }
    for (const auto& ref : manifest.at("splits").at("train")) {
      const auto s = ref.at(0).get<std::size_t>(), v = ref.at(1).get<std::size_t>();
      if (s >= spec.scenes || v >= spec.views) throw FormatError("split entry out of range");
      ds.scenes[s].views[v].train = true;
    }
    return ds;
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest.json: " + std::string(e.what()));
  }
}

}  // namespace posefield
