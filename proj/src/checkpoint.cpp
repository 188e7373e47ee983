#include "posefield/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>

#include "posefield/error.hpp"
#include "posefield/sha256.hpp"

namespace posefield {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

struct Entry {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

class Writer {
 public:
  void add(std::string name, ad::Shape shape, std::span<const double> values) {
    entries_.push_back({std::move(name), std::move(shape), {values.begin(), values.end()}});
  }
  void add(const std::string& name, const ad::Tensor& t) { add(name, t.shape(), t.values()); }
  void add_all(const std::string& prefix, const std::vector<ad::Tensor>& ts) {
    for (std::size_t i = 0; i < ts.size(); ++i) add(prefix + std::to_string(i), ts[i]);
  }

  void write(const std::filesystem::path& path, json header) const {
    std::vector<unsigned char> blob;
    json list = json::array();
    for (const auto& e : entries_) {
      list.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", blob.size()},
                      {"count", e.values.size()}});
      for (double v : e.values) {
        const float f = static_cast<float>(v);
        unsigned char b[4];
        std::memcpy(b, &f, 4);
        blob.insert(blob.end(), b, b + 4);
      }
    }
    header["tensors"] = list;
    header["blob_bytes"] = blob.size();
    header["blob_sha256"] = sha256_hex(std::span<const unsigned char>(blob));
    const std::string text = header.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot write checkpoint " + tmp.string());
      const std::uint32_t version = kCheckpointVersion;
      const std::uint64_t len = text.size();
      out.write(kMagic, 4);
      out.write(reinterpret_cast<const char*>(&version), 4);
      out.write(reinterpret_cast<const char*>(&len), 8);
      out.write(text.data(), static_cast<std::streamsize>(text.size()));
      out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
      if (!out) throw Error("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

 private:
  std::vector<Entry> entries_;
};

struct Container {
  json header;
  std::map<std::string, Entry> tensors;
  std::string path;

  const Entry& get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError(path + ": missing tensor '" + name + "'");
    return it->second;
  }

  void assign(const std::string& name, ad::Tensor& t) const {
    const Entry& e = get(name);
    if (e.shape != t.shape()) {
      throw IncompatibleError(path + ": tensor '" + name + "' is " + ad::to_string(e.shape) +
                              ", model expects " + ad::to_string(t.shape()));
    }
    std::copy(e.values.begin(), e.values.end(), t.values().begin());
  }

  void assign_all(const std::string& prefix, std::vector<ad::Tensor> ts) const {
    for (std::size_t i = 0; i < ts.size(); ++i) assign(prefix + std::to_string(i), ts[i]);
    if (tensors.count(prefix + std::to_string(ts.size()))) {
      throw IncompatibleError(path + ": more '" + prefix + "' tensors than the model has");
    }
  }
};

Container read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read checkpoint " + path.string());
  Container c;
  c.path = path.string();
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&len), 8);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw FormatError(c.path + ": not a checkpoint");
  if (version != kCheckpointVersion) {
    throw FormatError(c.path + ": checkpoint version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }
  const auto size = std::filesystem::file_size(path);
  if (len > size) throw CorruptionError(c.path + ": header length exceeds file size");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  try {
    c.header = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(c.path + ": malformed header: " + e.what());
  }
  std::vector<unsigned char> blob(size - 16 - len);
  in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  try {
    if (blob.size() != c.header.at("blob_bytes").get<std::size_t>()) {
      throw CorruptionError(c.path + ": blob is " + std::to_string(blob.size()) + " bytes, header says " +
                            std::to_string(c.header.at("blob_bytes").get<std::size_t>()));
    }
    if (sha256_hex(std::span<const unsigned char>(blob)) != c.header.at("blob_sha256").get<std::string>()) {
      throw CorruptionError(c.path + ": blob checksum mismatch");
    }
    for (const auto& t : c.header.at("tensors")) {
      Entry e;
      e.name = t.at("name").get<std::string>();
      e.shape = t.at("shape").get<ad::Shape>();
      const auto offset = t.at("offset").get<std::size_t>();
      const auto count = t.at("count").get<std::size_t>();
      if (count != ad::numel(e.shape) || offset + 4 * count > blob.size()) {
        throw FormatError(c.path + ": tensor '" + e.name + "' lies outside the blob");
      }
      e.values.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        float f;
        std::memcpy(&f, blob.data() + offset + 4 * i, 4);
        e.values[i] = f;
      }
      c.tensors.emplace(e.name, std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(c.path + ": malformed header: " + e.what());
  }
  return c;
}

void expect_type(const Container& c, const std::string& type) {
  const std::string got = c.header.value("type", "");
  if (got != type) {
    throw IncompatibleError(c.path + ": is a '" + got + "' checkpoint, expected '" + type + "'");
  }
}

json representation_json(const RepresentationSpec& r) {
  return {{"kind", std::string(kind_name(r.kind))},
          {"dim", r.dim},
          {"block", r.block},
          {"position_grid", r.position_grid},
          {"theta_bank", r.theta_bank},
          {"angle_grid", r.angle_grid},
          {"elevation_grid", r.elevation_grid},
          {"generator_stddev", r.generator_stddev}};
}

RepresentationSpec representation_from(const json& j) {
  RepresentationSpec r;
  r.kind = parse_kind(j.at("kind").get<std::string>());
  r.dim = j.at("dim");
  r.block = j.at("block");
  r.position_grid = j.at("position_grid");
  r.theta_bank = j.at("theta_bank");
  r.angle_grid = j.at("angle_grid");
  r.elevation_grid = j.at("elevation_grid");
  r.generator_stddev = j.at("generator_stddev");
  return r;
}

void add_adam(Writer& w, json& header, const std::string& name, const AdamState& s) {
  header["adam"][name] = {{"step_count", s.step_count},
                          {"beta1", s.config.beta1},
                          {"beta2", s.config.beta2},
                          {"epsilon", s.config.epsilon},
                          {"moments", s.first_moment.size()}};
  for (std::size_t i = 0; i < s.first_moment.size(); ++i) {
    w.add("adam." + name + ".m." + std::to_string(i), {s.first_moment[i].size()}, s.first_moment[i]);
    w.add("adam." + name + ".v." + std::to_string(i), {s.second_moment[i].size()}, s.second_moment[i]);
  }
}

AdamState read_adam(const Container& c, const std::string& name) {
  const json& j = c.header.at("adam").at(name);
  AdamState s;
  s.step_count = j.at("step_count");
  s.config.beta1 = j.at("beta1");
  s.config.beta2 = j.at("beta2");
  s.config.epsilon = j.at("epsilon");
  const std::size_t n = j.at("moments");
  for (std::size_t i = 0; i < n; ++i) {
    s.first_moment.push_back(c.get("adam." + name + ".m." + std::to_string(i)).values);
    s.second_moment.push_back(c.get("adam." + name + ".v." + std::to_string(i)).values);
  }
  return s;
}

}  // namespace

void save_synthesis(const std::filesystem::path& path, const SynthesisConfig& cfg,
                    const TrainState& state) {
  const auto& m = state.model;
  RepresentationSpec rep = cfg.representation;
  rep.kind = m.kind;
  json header = {
      {"type", "synthesis"},
      {"format_version", kCheckpointVersion},
      {"modules", m.input == PoseInput::learned
                      ? json{"pose-rep", "polar-rep", "synthesis-model"}
                      : json{"synthesis-model"}},
      {"model",
       {{"kind", std::string(kind_name(m.kind))},
        {"width", m.width},
        {"height", m.height},
        {"scenes", m.scene_count()},
        {"input", m.input == PoseInput::learned ? "learned" : "coordinates"},
        {"scene_dim", cfg.scene_dim},
        {"hidden", cfg.hidden},
        {"leaky_slope", cfg.leaky_slope},
        {"representation", representation_json(rep)}}},
      {"step", state.step},
      {"seed", cfg.seed}};
  Writer w;
  auto model = m;  // handles share storage; parameters() needs a mutable model
  w.add_all("pose.", model.pose_parameters());
  w.add_all("decoder.", model.decoder_parameters());
  add_adam(w, header, "pose", state.pose_opt);
  add_adam(w, header, "decoder", state.decoder_opt);
  w.write(path, header);
}

LoadedSynthesis load_synthesis(const std::filesystem::path& path) {
  const Container c = read(path);
  expect_type(c, "synthesis");
  LoadedSynthesis out;
  try {
    const json& m = c.header.at("model");
    auto& cfg = out.config;
    cfg.input = m.at("input").get<std::string>() == "learned" ? PoseInput::learned : PoseInput::coordinates;
    cfg.scene_dim = m.at("scene_dim");
    cfg.hidden = m.at("hidden").get<std::vector<std::size_t>>();
    cfg.leaky_slope = m.at("leaky_slope");
    cfg.representation = representation_from(m.at("representation"));
    cfg.seed = c.header.at("seed");
    out.state.model = make_model(cfg, parse_kind(m.at("kind").get<std::string>()), m.at("scenes"),
                                 m.at("width"), m.at("height"));
    out.state.step = c.header.at("step");
    c.assign_all("pose.", out.state.model.pose_parameters());
    c.assign_all("decoder.", out.state.model.decoder_parameters());
    normalize_scene_vectors(out.state.model);
    out.state.pose_opt = read_adam(c, "pose");
    out.state.decoder_opt = read_adam(c, "decoder");
  } catch (const json::exception& e) {
    throw FormatError(c.path + ": malformed header: " + e.what());
  }
  return out;
}

void check_same_shape(const SynthesisConfig& cfg, const SynthesisConfig& stored) {
  auto fail = [](const std::string& field) {
    throw IncompatibleError("checkpoint was written with a different " + field);
  };
  const auto& a = cfg.representation;
  const auto& b = stored.representation;
  if (cfg.input != stored.input) fail("synthesis-model.input");
  if (cfg.scene_dim != stored.scene_dim) fail("synthesis-model.scene_dim");
  if (cfg.hidden != stored.hidden) fail("synthesis-model.hidden");
  if (cfg.leaky_slope != stored.leaky_slope) fail("synthesis-model.leaky_slope");
  if (cfg.input == PoseInput::coordinates) return;
  if (a.dim != b.dim) fail("pose-rep.dim");
  if (a.block != b.block) fail("pose-rep.block");
  if (a.angle_grid != b.angle_grid) fail("pose-rep.angle_grid");
  if (a.elevation_grid != b.elevation_grid) fail("pose-rep.elevation_grid");
  if (b.kind == SceneKind::toyroom) {
    if (a.position_grid != b.position_grid) fail("polar-rep.position_grid");
    if (a.theta_bank != b.theta_bank) fail("polar-rep.theta_bank");
  }
}

void save_regressor(const std::filesystem::path& path, const RegressionConfig& cfg,
                    const PoseRegressor& reg, const PoseRepresentation* representation) {
  json header = {{"type", "regressor"},
                 {"format_version", kCheckpointVersion},
                 {"modules", representation ? json{"pose-rep", "polar-rep", "regression"}
                                            : json{"regression"}},
                 {"regressor",
                  {{"target", std::string(target_name(reg.target()))},
                   {"kind", std::string(kind_name(reg.kind()))},
                   {"width", reg.width()},
                   {"height", reg.height()},
                   {"trunk", cfg.trunk},
                   {"leaky_slope", cfg.leaky_slope},
                   {"learned_dim", cfg.learned_dim},
                   {"seed", cfg.seed}}}};
  Writer w;
  if (representation) {
    header["representation"] = representation_json(representation->spec());
    auto rep = *representation;
    w.add_all("pose.", rep.parameters());
  }
  w.add_all("regressor.", reg.parameters());
  w.write(path, header);
}

LoadedRegressor load_regressor(const std::filesystem::path& path) {
  const Container c = read(path);
  expect_type(c, "regressor");
  LoadedRegressor out;
  try {
    const json& r = c.header.at("regressor");
    auto& cfg = out.config;
    cfg.target = parse_target(r.at("target").get<std::string>());
    cfg.trunk = r.at("trunk").get<std::vector<std::size_t>>();
    cfg.leaky_slope = r.at("leaky_slope");
    cfg.learned_dim = r.at("learned_dim");
    cfg.seed = r.at("seed");
    if (c.header.contains("representation")) {
      Rng rng(0);
      out.representation.emplace(representation_from(c.header.at("representation")), rng);
      c.assign_all("pose.", out.representation->parameters());
    }
    const PoseRepresentation* rep = out.representation ? &*out.representation : nullptr;
    out.regressor = PoseRegressor(cfg, parse_kind(r.at("kind").get<std::string>()), r.at("width"),
                                  r.at("height"), rep);
    c.assign_all("regressor.", out.regressor.parameters());
  } catch (const json::exception& e) {
    throw FormatError(c.path + ": malformed header: " + e.what());
  }
  return out;
}

}  // namespace posefield
