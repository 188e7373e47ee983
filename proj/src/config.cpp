#include "posefield/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "posefield/error.hpp"

namespace posefield {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
  std::string section;  // empty for top-level keys
  std::string key;
  Setter set;
  Getter get;
};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  // Shortest text that parses back to the same double.
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::uint64_t parse_u64(const std::string& text, const std::string& name) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError(name + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

double parse_double(const std::string& text, const std::string& name) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError(name + ": expected a number, got '" + text + "'");
  }
  return v;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T, class Member>
Field size_field(std::string section, std::string key, Member member) {
  const std::string name = section + "." + key;
  return {section, key,
          [member, name](RunConfig& c, const std::string& v) {
            std::invoke(member, c) = static_cast<T>(parse_u64(v, name));
          },
          [member](const RunConfig& c) {
            return std::to_string(std::invoke(member, c));
          }};
}

template <class Member>
Field double_field(std::string section, std::string key, Member member) {
  const std::string name = section + "." + key;
  return {section, key,
          [member, name](RunConfig& c, const std::string& v) {
            std::invoke(member, c) = parse_double(v, name);
          },
          [member](const RunConfig& c) {
            return format_double(std::invoke(member, c));
          }};
}

template <class Member>
Field sizes_field(std::string section, std::string key, Member member) {
  const std::string name = section + "." + key;
  return {section, key,
          [member, name](RunConfig& c, const std::string& v) {
            std::vector<std::size_t> out;
            for (const auto& item : split_list(v)) out.push_back(parse_u64(item, name));
            std::invoke(member, c) = out;
          },
          [member](const RunConfig& c) {
            std::string s;
            for (auto v : std::invoke(member, c)) {
              if (!s.empty()) s += ", ";
              s += std::to_string(v);
            }
            return s;
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"", "format_version",
                 [](RunConfig& c, const std::string& v) {
                   c.format_version = static_cast<int>(parse_u64(v, "format_version"));
                 },
                 [](const RunConfig& c) { return std::to_string(c.format_version); }});
    f.push_back({"", "seed",
                 [](RunConfig& c, const std::string& v) { c.seed = parse_u64(v, "seed"); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});

    const std::string ds = "scene-synth";
    f.push_back({ds, "kind",
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.dataset.kind = parse_kind(trim(v));
                   } catch (const ConfigError& e) {
                     throw ConfigError(std::string("scene-synth.") + e.what());
                   }
                 },
                 [](const RunConfig& c) { return std::string(kind_name(c.dataset.kind)); }});
    f.push_back(size_field<std::size_t>(ds, "width", [](auto& c) -> auto& { return c.dataset.width; }));
    f.push_back(size_field<std::size_t>(ds, "height", [](auto& c) -> auto& { return c.dataset.height; }));
    f.push_back(size_field<std::size_t>(ds, "scenes", [](auto& c) -> auto& { return c.dataset.scenes; }));
    f.push_back(size_field<std::size_t>(ds, "views", [](auto& c) -> auto& { return c.dataset.views; }));
    f.push_back(double_field(ds, "train_fraction",
                             [](auto& c) -> auto& { return c.dataset.train_fraction; }));

    const std::string pr = "pose-rep";
    auto rep = [](auto& c) -> auto& { return c.synthesis.representation; };
    f.push_back(size_field<std::size_t>(pr, "dim", [rep](auto& c) -> auto& { return rep(c).dim; }));
    f.push_back(size_field<std::size_t>(pr, "block", [rep](auto& c) -> auto& { return rep(c).block; }));
    f.push_back(size_field<std::size_t>(pr, "angle_grid",
                                        [rep](auto& c) -> auto& { return rep(c).angle_grid; }));
    f.push_back(size_field<std::size_t>(pr, "elevation_grid",
                                        [rep](auto& c) -> auto& { return rep(c).elevation_grid; }));
    f.push_back(double_field(pr, "generator_stddev",
                             [rep](auto& c) -> auto& { return rep(c).generator_stddev; }));

    const std::string pl = "polar-rep";
    f.push_back(size_field<std::size_t>(pl, "position_grid",
                                        [rep](auto& c) -> auto& { return rep(c).position_grid; }));
    f.push_back(size_field<std::size_t>(pl, "theta_bank",
                                        [rep](auto& c) -> auto& { return rep(c).theta_bank; }));

    const std::string sm = "synthesis-model";
    auto syn = [](auto& c) -> auto& { return c.synthesis; };
    f.push_back({sm, "input",
                 [](RunConfig& c, const std::string& v) {
                   const std::string t = trim(v);
                   if (t == "learned") {
                     c.synthesis.input = PoseInput::learned;
                   } else if (t == "coordinates") {
                     c.synthesis.input = PoseInput::coordinates;
                   } else {
                     throw ConfigError("synthesis-model.input: expected learned or coordinates, got '" + v + "'");
                   }
                 },
                 [](const RunConfig& c) {
                   return std::string(c.synthesis.input == PoseInput::learned ? "learned" : "coordinates");
                 }});
    f.push_back(size_field<std::size_t>(sm, "scene_dim", [syn](auto& c) -> auto& { return syn(c).scene_dim; }));
    f.push_back(sizes_field(sm, "hidden", [syn](auto& c) -> auto& { return syn(c).hidden; }));
    f.push_back(double_field(sm, "leaky_slope", [syn](auto& c) -> auto& { return syn(c).leaky_slope; }));
    f.push_back(double_field(sm, "lambda_rec", [syn](auto& c) -> auto& { return syn(c).lambda_rec; }));
    f.push_back(double_field(sm, "lambda_rot", [syn](auto& c) -> auto& { return syn(c).lambda_rot; }));
    f.push_back(double_field(sm, "lambda_rot_x", [syn](auto& c) -> auto& { return syn(c).lambda_rot_x; }));
    f.push_back(double_field(sm, "lambda_rot_theta",
                             [syn](auto& c) -> auto& { return syn(c).lambda_rot_theta; }));
    f.push_back(double_field(sm, "lr_pose", [syn](auto& c) -> auto& { return syn(c).lr_pose; }));
    f.push_back(double_field(sm, "lr_decoder", [syn](auto& c) -> auto& { return syn(c).lr_decoder; }));
    f.push_back(size_field<std::size_t>(sm, "pose_updates_per_decoder_update", [syn](auto& c) -> auto& {
      return syn(c).pose_updates_per_decoder_update;
    }));
    f.push_back(size_field<std::size_t>(sm, "iterations", [syn](auto& c) -> auto& { return syn(c).iterations; }));
    f.push_back(size_field<std::size_t>(sm, "batch_views", [syn](auto& c) -> auto& { return syn(c).batch_views; }));
    f.push_back(size_field<std::size_t>(sm, "rotation_pairs",
                                        [syn](auto& c) -> auto& { return syn(c).rotation_pairs; }));
    f.push_back(double_field(sm, "pair_max_cells", [syn](auto& c) -> auto& { return syn(c).pair_max_cells; }));
    f.push_back({sm, "noise_alphas",
                 [](RunConfig& c, const std::string& v) {
                   std::vector<double> out;
                   for (const auto& item : split_list(v)) {
                     out.push_back(parse_double(item, "synthesis-model.noise_alphas"));
                   }
                   c.eval.noise_alphas = out;
                 },
                 [](const RunConfig& c) {
                   std::string s;
                   for (double a : c.eval.noise_alphas) {
                     if (!s.empty()) s += ", ";
                     s += format_double(a);
                   }
                   return s;
                 }});

    const std::string rg = "regression";
    auto reg = [](auto& c) -> auto& { return c.regression; };
    f.push_back({rg, "target",
                 [](RunConfig& c, const std::string& v) { c.regression.target = parse_target(trim(v)); },
                 [](const RunConfig& c) { return std::string(target_name(c.regression.target)); }});
    f.push_back(sizes_field(rg, "trunk", [reg](auto& c) -> auto& { return reg(c).trunk; }));
    f.push_back(size_field<std::size_t>(rg, "iterations", [reg](auto& c) -> auto& { return reg(c).iterations; }));
    f.push_back(size_field<std::size_t>(rg, "batch_views", [reg](auto& c) -> auto& { return reg(c).batch_views; }));
    f.push_back(double_field(rg, "lr", [reg](auto& c) -> auto& { return reg(c).lr; }));
    f.push_back(double_field(rg, "position_weight", [reg](auto& c) -> auto& { return reg(c).position_weight; }));

    const std::string cl = "cli";
    f.push_back(size_field<std::size_t>(cl, "log_every", [syn](auto& c) -> auto& { return syn(c).log_every; }));
    f.push_back(size_field<std::size_t>(cl, "checkpoint_every",
                                        [syn](auto& c) -> auto& { return syn(c).checkpoint_every; }));
    f.push_back({cl, "inject_nan_at_step",
                 [](RunConfig& c, const std::string& v) {
                   const std::string t = trim(v);
                   if (t.empty() || t == "none") {
                     c.synthesis.inject_nan_at_step.reset();
                   } else {
                     c.synthesis.inject_nan_at_step = parse_u64(t, "cli.inject_nan_at_step");
                   }
                 },
                 [](const RunConfig& c) {
                   const auto& v = c.synthesis.inject_nan_at_step;
                   return v ? std::to_string(*v) : std::string("none");
                 }});
    f.push_back(size_field<std::size_t>(cl, "dump_images", [](auto& c) -> auto& { return c.eval.dump_images; }));
    return f;
  }();
  return table;
}

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

}  // namespace

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  dataset.seed = value;
  synthesis.seed = value;
  regression.seed = value;
}

RunConfig parse_config(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }

  RunConfig cfg;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      const Field* f = find_field("", name);
      if (!f) throw ConfigError(name + ": unknown top-level key");
      f->set(cfg, node.data());
      continue;
    }
    bool known_section = false;
    for (const auto& f : fields()) known_section |= f.section == name;
    if (!known_section) throw ConfigError(name + ": unknown section");
    for (const auto& [key, value] : node) {
      const Field* f = find_field(name, key);
      if (!f) throw ConfigError(name + "." + key + ": unknown key");
      f->set(cfg, value.data());
    }
  }
  if (cfg.format_version != kConfigFormatVersion) {
    throw ConfigError("format_version: expected " + std::to_string(kConfigFormatVersion) + ", got " +
                      std::to_string(cfg.format_version));
  }
  cfg.set_seed(cfg.seed);
  validate(cfg.dataset);
  validate(cfg.synthesis);
  validate(cfg.regression);
  for (double a : cfg.eval.noise_alphas) {
    if (!(a >= 0.0)) throw ConfigError("synthesis-model.noise_alphas: magnitudes must be >= 0");
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string render_config(const RunConfig& cfg) {
  std::string out;
  std::string section = "\x01";
  for (const auto& f : fields()) {
    if (f.section != section) {
      section = f.section;
      if (!section.empty()) out += "\n[" + section + "]\n";
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

}  // namespace posefield
