#include "cgm/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string_view>

#include "cgm/conformal.hpp"
#include "cgm/errors.hpp"
#include "cgm/mesh.hpp"
#include "cgm/mesh_io.hpp"
#include "cgm/registration.hpp"
#include "cgm/rng.hpp"
#include "cgm/sphere_correspondence.hpp"
#include "cgm/transport.hpp"

namespace cgm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

double parse_double_field(std::string_view s, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw InputError(where + ": bad numeric value '" + std::string(s) + "'");
  return v;
}

long long parse_int_field(std::string_view s, const std::string& where) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw InputError(where + ": bad integer value '" + std::string(s) + "'");
  return v;
}

std::string trim(std::string_view s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw InputError("missing artifact: " + path + " (run the upstream stage first)");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw InputError(path + ": invalid JSON: " + e.what());
  }
  return j;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write artifact: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path);
}

void require_fresh(const std::string& recorded_hash, const std::string& path,
                   const std::string& what) {
  if (file_hash_hex(path) != recorded_hash)
    throw InputError(what + " is stale: " + path +
                     " changed after the artifact was written; re-run the upstream stage");
}

int mesh_count(const PipelineConfig& config) {
  return static_cast<int>(config.mesh_paths.size());
}

void check_mesh_id(const PipelineConfig& config, int mesh_id) {
  if (mesh_id < 1 || mesh_id > mesh_count(config))
    throw InputError("mesh id " + std::to_string(mesh_id) + " outside 1.." +
                     std::to_string(mesh_count(config)));
}

// Parameterization artifact contents with provenance.
struct ParamArtifact {
  SphericalParameterization param;
  std::string mesh_path;
  std::string mesh_hash;
};

ParamArtifact load_param_artifact(const std::string& path) {
  json j = load_json(path);
  ParamArtifact out;
  try {
    out.mesh_path = j.at("inputs").at("mesh").at("path").get<std::string>();
    out.mesh_hash = j.at("inputs").at("mesh").at("hash").get<std::string>();
    out.param.removed_vertex = j.at("removed_vertex").get<int>();
    out.param.log_factor = j.at("log_factor").get<std::vector<double>>();
    std::vector<double> flat = j.at("positions").get<std::vector<double>>();
    if (flat.size() != 3 * out.param.log_factor.size())
      throw InputError("position/log factor size mismatch");
    out.param.positions.resize(flat.size() / 3);
    for (size_t i = 0; i < out.param.positions.size(); ++i)
      out.param.positions[i] = Eigen::Vector3d(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]);
    const json& r = j.at("report");
    out.param.report.newton_iterations = r.at("newton_iterations").get<int>();
    out.param.report.max_angle_defect = r.at("max_angle_defect").get<double>();
    out.param.report.mobius_iterations = r.at("mobius_iterations").get<int>();
    out.param.report.center_norm = r.at("center_norm").get<double>();
    out.param.report.reinsert_residual = r.at("reinsert_residual").get<double>();
    out.param.report.max_edge_residual = r.at("max_edge_residual").get<double>();
  } catch (const json::exception& e) {
    throw InputError(path + ": malformed parameterization artifact: " + e.what());
  }
  return out;
}

// Loads mesh k's parameterization, checks it still matches both the config
// and the mesh file on disk, and returns it with the loaded mesh.
struct MeshBundle {
  TriangleMesh mesh;
  SphericalTriangulation tri;
};

MeshBundle load_mesh_bundle(const PipelineConfig& config, const Artifacts& art, int mesh_id) {
  ParamArtifact pa = load_param_artifact(art.param(mesh_id));
  const std::string& configured = config.mesh_paths[mesh_id - 1];
  if (pa.mesh_path != configured)
    throw InputError("parameterization for mesh " + std::to_string(mesh_id) + " was built from " +
                     pa.mesh_path + " but the config lists " + configured +
                     "; re-run parameterize");
  require_fresh(pa.mesh_hash, pa.mesh_path, "parameterization of mesh " + std::to_string(mesh_id));
  MeshBundle b{load_mesh(pa.mesh_path), SphericalTriangulation()};
  b.tri = SphericalTriangulation::build(b.mesh, pa.param);
  return b;
}

Eigen::Matrix3d load_rotation_artifact(const std::string& path, const Artifacts& art,
                                       json* full = nullptr) {
  json j = load_json(path);
  Eigen::Matrix3d R;
  try {
    std::vector<double> flat = j.at("rotation").get<std::vector<double>>();
    if (flat.size() != 9) throw InputError("rotation must hold 9 numbers");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) R(r, c) = flat[3 * r + c];
    for (const auto& [name, entry] : j.at("inputs").items()) {
      std::string upstream = art.dir + "/" + name;
      require_fresh(entry.at("hash").get<std::string>(), upstream, path);
    }
  } catch (const json::exception& e) {
    throw InputError(path + ": malformed rotation artifact: " + e.what());
  }
  if (full) *full = j;
  return R;
}

Eigen::VectorXd mesh_face_weights(const PipelineConfig& config, const TriangleMesh& mesh,
                                  int mesh_id) {
  const std::string& intensity =
      config.intensity_paths.empty() ? std::string() : config.intensity_paths[mesh_id - 1];
  if (intensity.empty()) {
    Eigen::VectorXd w(mesh.n_faces());
    for (int f = 0; f < mesh.n_faces(); ++f) w(f) = face_area(mesh, f);
    return w;
  }
  std::vector<double> values = load_intensities(intensity, mesh.n_vertices());
  std::vector<double> probs = contact_probabilities(values);
  return face_distribution(mesh, probs);
}

std::string basename_of(const std::string& path) { return fs::path(path).filename().string(); }

// Surface sample CSV written by cmd_sample.
constexpr const char* kSurfaceCsvHeader = "mesh_id,face_id,b0,b1,b2,px,py,pz";

void save_surface_csv(const std::string& path, int mesh_id,
                      const std::vector<SurfacePoint>& points, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write samples CSV: " + path);
  out << kSurfaceCsvHeader << '\n';
  for (const SurfacePoint& sp : points) {
    const auto& f = mesh.faces()[sp.face];
    Eigen::Vector3d p = sp.bary[0] * mesh.positions()[f[0]] +
                        sp.bary[1] * mesh.positions()[f[1]] +
                        sp.bary[2] * mesh.positions()[f[2]];
    out << mesh_id << ',' << sp.face << ',' << format_double(sp.bary[0]) << ','
        << format_double(sp.bary[1]) << ',' << format_double(sp.bary[2]) << ','
        << format_double(p.x()) << ',' << format_double(p.y()) << ',' << format_double(p.z())
        << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

json train_config_json(const TrainConfig& tc, const std::string& constraint_domain) {
  json j;
  j["epochs"] = tc.epochs;
  j["batch_size"] = tc.batch_size;
  j["learning_rate"] = tc.learning_rate;
  j["beta1"] = tc.beta1;
  j["beta2"] = tc.beta2;
  j["adam_eps"] = tc.adam_eps;
  j["seed"] = tc.seed;
  j["hidden_dim"] = tc.hidden_dim;
  j["moser_lambda"] = tc.moser_lambda;
  j["moser_floor"] = tc.moser_floor;
  j["constraint_samples"] = tc.constraint_samples;
  j["ode_train_steps"] = tc.ode_train_steps;
  j["constraint_domain"] = constraint_domain;
  j["ode"] = {{"rtol", tc.ode.rtol},
              {"atol", tc.ode.atol},
              {"max_drift", tc.ode.max_drift},
              {"max_steps", tc.ode.max_steps}};
  return j;
}

// Moser constraint points drawn uniformly by area on the reference mesh and
// pushed through its parameterization (alternative to uniform sphere draws).
std::function<Eigen::Matrix3Xd(int, std::uint64_t)> mesh_constraint_sampler(
    const PipelineConfig& config, const Artifacts& art) {
  auto bundle = std::make_shared<MeshBundle>(load_mesh_bundle(config, art, config.reference_mesh));
  Eigen::Matrix3d R =
      load_rotation_artifact(art.rotation(config.reference_mesh), art, nullptr);
  Eigen::VectorXd weights(bundle->mesh.n_faces());
  for (int f = 0; f < bundle->mesh.n_faces(); ++f) weights(f) = face_area(bundle->mesh, f);
  return [bundle, R, weights](int n, std::uint64_t seed) {
    std::vector<SurfacePoint> pts = sample_surface(bundle->mesh, weights, n, seed);
    std::vector<SphereSample> ds = to_sphere_dataset(pts, bundle->tri, R, 0);
    Eigen::Matrix3Xd out(3, n);
    for (int j = 0; j < n; ++j) out.col(j) = ds[j].direction;
    return out;
  };
}

double sample_stddev(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (static_cast<double>(values.size()) - 1.0));
}

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot hash missing file: " + path);
  std::uint64_t h = 14695981039346656037ull;
  char buf[65536];
  while (in.read(buf, sizeof(buf)), in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i)
      h = (h ^ static_cast<unsigned char>(buf[i])) * 1099511628211ull;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config: " + path);
  fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path q(p);
    return q.is_absolute() ? p : (base / q).string();
  };

  PipelineConfig c;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string where = path + ":" + std::to_string(line_no);
    if (size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::string text = trim(line);
    if (text.empty()) continue;
    size_t eq = text.find('=');
    if (eq == std::string::npos) throw InputError(where + ": expected key = value");
    std::string key = trim(text.substr(0, eq));
    std::string value = trim(text.substr(eq + 1));
    if (key.empty() || value.empty()) throw InputError(where + ": expected key = value");

    if (key == "mesh") {
      c.mesh_paths.push_back(resolve(value));
    } else if (key == "intensity") {
      c.intensity_paths.push_back(value == "uniform" ? std::string() : resolve(value));
    } else if (key == "reference") {
      c.reference_mesh = static_cast<int>(parse_int_field(value, where));
    } else if (key == "bandwidth") {
      c.bandwidth = static_cast<int>(parse_int_field(value, where));
    } else if (key == "train_samples") {
      c.train_samples = static_cast<int>(parse_int_field(value, where));
    } else if (key == "validation_samples") {
      c.validation_samples = static_cast<int>(parse_int_field(value, where));
    } else if (key == "output_dir") {
      c.output_dir = value;
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(parse_int_field(value, where));
    } else if (key == "constraint_on_mesh") {
      if (value != "true" && value != "false")
        throw InputError(where + ": constraint_on_mesh must be true or false");
      c.constraint_on_mesh = value == "true";
    } else if (key == "epochs") {
      c.train.epochs = static_cast<int>(parse_int_field(value, where));
    } else if (key == "batch_size") {
      c.train.batch_size = static_cast<int>(parse_int_field(value, where));
    } else if (key == "hidden_dim") {
      c.train.hidden_dim = static_cast<int>(parse_int_field(value, where));
    } else if (key == "constraint_samples") {
      c.train.constraint_samples = static_cast<int>(parse_int_field(value, where));
    } else if (key == "ode_train_steps") {
      c.train.ode_train_steps = static_cast<int>(parse_int_field(value, where));
    } else if (key == "learning_rate") {
      c.train.learning_rate = parse_double_field(value, where);
    } else if (key == "moser_lambda") {
      c.train.moser_lambda = parse_double_field(value, where);
    } else if (key == "moser_floor") {
      c.train.moser_floor = parse_double_field(value, where);
    } else {
      throw InputError(where + ": unknown config key '" + key + "'");
    }
  }

  if (c.mesh_paths.empty()) throw InputError(path + ": config lists no meshes");
  if (!c.intensity_paths.empty() && c.intensity_paths.size() != c.mesh_paths.size())
    throw InputError(path + ": intensity entries must match mesh entries (or be omitted)");
  if (c.reference_mesh < 1 || c.reference_mesh > mesh_count(c))
    throw InputError(path + ": reference mesh outside the mesh list");
  if (c.bandwidth < 2) throw InputError(path + ": bandwidth must be at least 2");
  if (c.train_samples < 1 || c.validation_samples < 1)
    throw InputError(path + ": sample counts must be positive");
  return c;
}

TrainConfig resolve_train_config(const PipelineConfig& config, FlowKind kind) {
  TrainConfig t = TrainConfig::defaults(kind);
  const TrainOverrides& o = config.train;
  if (o.epochs) t.epochs = *o.epochs;
  if (o.batch_size) t.batch_size = *o.batch_size;
  if (o.hidden_dim) t.hidden_dim = *o.hidden_dim;
  if (o.constraint_samples) t.constraint_samples = *o.constraint_samples;
  if (o.ode_train_steps) t.ode_train_steps = *o.ode_train_steps;
  if (o.learning_rate) t.learning_rate = *o.learning_rate;
  if (o.moser_lambda) t.moser_lambda = *o.moser_lambda;
  if (o.moser_floor) t.moser_floor = *o.moser_floor;
  if (t.epochs < 1 || t.batch_size < 1 || t.hidden_dim < 1 || t.constraint_samples < 1 ||
      t.ode_train_steps < 1 || t.learning_rate <= 0.0)
    throw InputError("training configuration values must be positive");
  t.seed = derive_seed(config.seed, "train");
  return t;
}

std::string Artifacts::param(int mesh_id) const {
  return dir + "/param.mesh" + std::to_string(mesh_id) + ".json";
}
std::string Artifacts::rotation(int mesh_id) const {
  return dir + "/rotation.mesh" + std::to_string(mesh_id) + ".json";
}
std::string Artifacts::dataset(const std::string& split, int mesh_id) const {
  return dir + "/dataset." + split + ".mesh" + std::to_string(mesh_id) + ".csv";
}
std::string Artifacts::pooled(const std::string& split) const {
  return dir + "/dataset." + split + ".pooled.csv";
}
std::string Artifacts::manifest() const { return dir + "/dataset.manifest.json"; }
std::string Artifacts::checkpoint(FlowKind kind) const {
  return dir + "/model." + flow_kind_name(kind) + ".json";
}
std::string Artifacts::train_log(FlowKind kind) const {
  return dir + "/trainlog." + flow_kind_name(kind) + ".csv";
}
std::string Artifacts::samples_csv(FlowKind kind, int mesh_id) const {
  return dir + "/samples." + flow_kind_name(kind) + ".mesh" + std::to_string(mesh_id) + ".csv";
}
std::string Artifacts::samples_ply(FlowKind kind, int mesh_id) const {
  return dir + "/samples." + flow_kind_name(kind) + ".mesh" + std::to_string(mesh_id) + ".ply";
}
std::string Artifacts::density_ply(FlowKind kind, int mesh_id) const {
  return dir + "/density." + flow_kind_name(kind) + ".mesh" + std::to_string(mesh_id) + ".ply";
}
std::string Artifacts::eval_report(FlowKind kind) const {
  return dir + "/eval." + flow_kind_name(kind) + ".json";
}
std::string Artifacts::seed_study(FlowKind kind) const {
  return dir + "/seedstudy." + flow_kind_name(kind) + ".json";
}
std::string Artifacts::holdout_csv(FlowKind kind) const {
  return dir + "/holdout." + flow_kind_name(kind) + ".csv";
}

void save_checkpoint(const std::string& path, const FlowModel& model, const TrainConfig& config,
                     const std::map<std::string, std::string>& input_hashes,
                     const std::string& constraint_domain) {
  json j;
  j["kind"] = flow_kind_name(model.kind);
  j["architecture"] = {{"activation", "tanh"},
                       {"input_dim", model.field.input_dim()},
                       {"hidden_dim", model.field.hidden_dim()},
                       {"hidden_layers", MlpField::kHiddenLayers},
                       {"output_dim", 3}};
  j["noise"] = {{"density", "uniform_sphere"},
                {"log_density", FlowModel::log_noise_density()}};
  Eigen::VectorXd p = model.field.parameters();
  j["parameters"] = std::vector<double>(p.data(), p.data() + p.size());
  j["train_config"] = train_config_json(config, constraint_domain);
  json inputs = json::object();
  for (const auto& [file, hash] : input_hashes) inputs[file] = hash;
  j["inputs"] = inputs;
  write_json(path, j);
}

FlowModel load_checkpoint(const std::string& path, TrainConfig* config) {
  json j = load_json(path);
  try {
    const json& arch = j.at("architecture");
    if (arch.at("activation").get<std::string>() != "tanh" ||
        arch.at("hidden_layers").get<int>() != MlpField::kHiddenLayers ||
        arch.at("output_dim").get<int>() != 3)
      throw InputError("unsupported architecture descriptor");
    FlowKind kind = flow_kind_from_name(j.at("kind").get<std::string>());
    MlpField field(arch.at("input_dim").get<int>(), arch.at("hidden_dim").get<int>(), 0);
    std::vector<double> params = j.at("parameters").get<std::vector<double>>();
    if (static_cast<int>(params.size()) != field.parameter_count())
      throw InputError("parameter count does not match the architecture");
    field.set_parameters(Eigen::Map<const Eigen::VectorXd>(params.data(), params.size()));
    if (config) {
      const json& t = j.at("train_config");
      config->epochs = t.at("epochs").get<int>();
      config->batch_size = t.at("batch_size").get<int>();
      config->learning_rate = t.at("learning_rate").get<double>();
      config->beta1 = t.at("beta1").get<double>();
      config->beta2 = t.at("beta2").get<double>();
      config->adam_eps = t.at("adam_eps").get<double>();
      config->seed = t.at("seed").get<std::uint64_t>();
      config->hidden_dim = t.at("hidden_dim").get<int>();
      config->moser_lambda = t.at("moser_lambda").get<double>();
      config->moser_floor = t.at("moser_floor").get<double>();
      config->constraint_samples = t.at("constraint_samples").get<int>();
      config->ode_train_steps = t.at("ode_train_steps").get<int>();
      config->ode.rtol = t.at("ode").at("rtol").get<double>();
      config->ode.atol = t.at("ode").at("atol").get<double>();
      config->ode.max_drift = t.at("ode").at("max_drift").get<double>();
      config->ode.max_steps = t.at("ode").at("max_steps").get<int>();
    }
    return FlowModel{kind, std::move(field)};
  } catch (const json::exception& e) {
    throw InputError(path + ": malformed checkpoint: " + e.what());
  }
}

void save_training_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write training log: " + path);
  out << "epoch,train_ll,validation_ll,wall_seconds\n";
  for (const EpochLog& e : log)
    out << e.epoch << ',' << format_double(e.train_ll) << ',' << format_double(e.validation_ll)
        << ',' << format_double(e.wall_seconds) << '\n';
  if (!out) throw Error("write failed: " + path);
}

std::vector<EpochLog> load_training_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("missing training log: " + path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "epoch,train_ll,validation_ll,wall_seconds")
    throw InputError(path + ": unrecognized training log header");
  std::vector<EpochLog> log;
  while (std::getline(in, line)) {
    std::string text = trim(line);
    if (text.empty()) continue;
    std::array<std::string, 4> fields;
    size_t at = 0;
    for (int i = 0; i < 4; ++i) {
      size_t comma = text.find(',', at);
      if ((comma == std::string::npos) != (i == 3))
        throw InputError(path + ": expected 4 fields per row");
      fields[i] = text.substr(at, comma == std::string::npos ? comma : comma - at);
      at = comma + 1;
    }
    EpochLog e;
    e.epoch = static_cast<int>(parse_int_field(fields[0], path));
    e.train_ll = parse_double_field(fields[1], path);
    e.validation_ll = parse_double_field(fields[2], path);
    e.wall_seconds = parse_double_field(fields[3], path);
    log.push_back(e);
  }
  return log;
}

std::array<std::uint8_t, 3> viridis_color(double t) {
  static constexpr double table[9][3] = {
      {68, 1, 84},    {72, 40, 120},  {62, 74, 137},  {49, 104, 142}, {38, 130, 142},
      {31, 158, 137}, {53, 183, 121}, {109, 205, 89}, {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0);
  double pos = t * 8.0;
  int lo = std::min(7, static_cast<int>(pos));
  double w = pos - lo;
  std::array<std::uint8_t, 3> rgb;
  for (int c = 0; c < 3; ++c) {
    double v = table[lo][c] * (1.0 - w) + table[lo + 1][c] * w;
    rgb[c] = static_cast<std::uint8_t>(std::lround(v));
  }
  return rgb;
}

void cmd_parameterize(const PipelineConfig& config, std::ostream& log) {
  fs::create_directories(config.output_dir);
  Artifacts art(config.output_dir);
  for (int k = 1; k <= mesh_count(config); ++k) {
    const std::string& mpath = config.mesh_paths[k - 1];
    try {
      TriangleMesh mesh = load_mesh(mpath);
      SphericalParameterization sp = spherical_parameterize(mesh);
      json j;
      j["inputs"] = {{"mesh", {{"path", mpath}, {"hash", file_hash_hex(mpath)}}}};
      j["removed_vertex"] = sp.removed_vertex;
      j["log_factor"] = sp.log_factor;
      std::vector<double> flat;
      flat.reserve(3 * sp.positions.size());
      for (const auto& p : sp.positions) {
        flat.push_back(p.x());
        flat.push_back(p.y());
        flat.push_back(p.z());
      }
      j["positions"] = flat;
      j["report"] = {{"newton_iterations", sp.report.newton_iterations},
                     {"max_angle_defect", sp.report.max_angle_defect},
                     {"mobius_iterations", sp.report.mobius_iterations},
                     {"center_norm", sp.report.center_norm},
                     {"reinsert_residual", sp.report.reinsert_residual},
                     {"max_edge_residual", sp.report.max_edge_residual}};
      write_json(art.param(k), j);
      log << "mesh " << k << " (" << basename_of(mpath) << "): " << mesh.n_vertices()
          << " vertices, conformal residual " << format_double(sp.report.max_edge_residual)
          << ", angle defect " << format_double(sp.report.max_angle_defect) << ", center norm "
          << format_double(sp.report.center_norm) << "\n";
    } catch (const InputError& e) {
      throw InputError("mesh " + std::to_string(k) + " (" + mpath + "): " + e.what());
    } catch (const Error& e) {
      throw Error("mesh " + std::to_string(k) + " (" + mpath + "): " + e.what());
    }
  }
}

void cmd_align(const PipelineConfig& config, std::ostream& log) {
  Artifacts art(config.output_dir);
  int ref = config.reference_mesh;
  MeshBundle ref_bundle = load_mesh_bundle(config, art, ref);

  for (int k = 1; k <= mesh_count(config); ++k) {
    json j;
    Eigen::Matrix3d R;
    if (k == ref) {
      R = Eigen::Matrix3d::Identity();
      j["alpha"] = 0.0;
      j["beta"] = 0.0;
      j["gamma"] = 0.0;
      j["score"] = 0.0;
      j["degenerate"] = false;
      j["inputs"] = {{basename_of(art.param(k)),
                      {{"hash", file_hash_hex(art.param(k))}}}};
      log << "mesh " << k << ": reference, identity rotation\n";
    } else {
      MeshBundle other = load_mesh_bundle(config, art, k);
      AlignmentResult a =
          align_parameterizations(ref_bundle.tri, other.tri, config.bandwidth);
      R = a.rotation;
      j["alpha"] = a.alpha;
      j["beta"] = a.beta;
      j["gamma"] = a.gamma;
      j["score"] = a.score;
      j["degenerate"] = a.degenerate;
      j["inputs"] = {
          {basename_of(art.param(ref)), {{"hash", file_hash_hex(art.param(ref))}}},
          {basename_of(art.param(k)), {{"hash", file_hash_hex(art.param(k))}}}};
      double angle = rotation_geodesic_distance(R, Eigen::Matrix3d::Identity());
      log << "mesh " << k << ": rotation angle " << format_double(angle) << " rad, score "
          << format_double(a.score) << (a.degenerate ? " (degenerate field)" : "") << "\n";
    }
    j["bandwidth"] = config.bandwidth;
    std::vector<double> flat(9);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) flat[3 * r + c] = R(r, c);
    j["rotation"] = flat;
    write_json(art.rotation(k), j);
  }
}

void cmd_make_dataset(const PipelineConfig& config, std::ostream& log) {
  Artifacts art(config.output_dir);
  json manifest;
  manifest["seed"] = config.seed;
  manifest["train_samples"] = config.train_samples;
  manifest["validation_samples"] = config.validation_samples;
  manifest["meshes"] = json::array();

  std::vector<std::vector<SphereSample>> trains, valids;
  for (int k = 1; k <= mesh_count(config); ++k) {
    MeshBundle b = load_mesh_bundle(config, art, k);
    Eigen::Matrix3d R = load_rotation_artifact(art.rotation(k), art);
    Eigen::VectorXd weights = mesh_face_weights(config, b.mesh, k);

    std::vector<SurfacePoint> train_pts = sample_surface(
        b.mesh, weights, config.train_samples, derive_seed(config.seed, "train-points", k));
    std::vector<SurfacePoint> valid_pts =
        sample_surface(b.mesh, weights, config.validation_samples,
                       derive_seed(config.seed, "validation-points", k));
    std::vector<SphereSample> train_k = to_sphere_dataset(train_pts, b.tri, R, k);
    std::vector<SphereSample> valid_k = to_sphere_dataset(valid_pts, b.tri, R, k);
    save_dataset_csv(art.dataset("train", k), train_k);
    save_dataset_csv(art.dataset("validation", k), valid_k);

    const std::string intensity =
        config.intensity_paths.empty() ? std::string() : config.intensity_paths[k - 1];
    json entry;
    entry["mesh_id"] = k;
    entry["param_hash"] = file_hash_hex(art.param(k));
    entry["rotation_hash"] = file_hash_hex(art.rotation(k));
    entry["intensity"] = intensity.empty() ? "uniform" : intensity;
    if (!intensity.empty()) entry["intensity_hash"] = file_hash_hex(intensity);
    manifest["meshes"].push_back(entry);

    log << "mesh " << k << ": " << train_k.size() << " train + " << valid_k.size()
        << " validation samples\n";
    trains.push_back(std::move(train_k));
    valids.push_back(std::move(valid_k));
  }

  std::vector<SphereSample> pooled_train = pool(trains);
  std::vector<SphereSample> pooled_valid = pool(valids);
  save_dataset_csv(art.pooled("train"), pooled_train);
  save_dataset_csv(art.pooled("validation"), pooled_valid);
  log << "pooled: " << pooled_train.size() << " train + " << pooled_valid.size()
      << " validation samples\n";

  json outputs = json::object();
  for (int k = 1; k <= mesh_count(config); ++k) {
    outputs[basename_of(art.dataset("train", k))] = file_hash_hex(art.dataset("train", k));
    outputs[basename_of(art.dataset("validation", k))] =
        file_hash_hex(art.dataset("validation", k));
  }
  outputs[basename_of(art.pooled("train"))] = file_hash_hex(art.pooled("train"));
  outputs[basename_of(art.pooled("validation"))] = file_hash_hex(art.pooled("validation"));
  manifest["outputs"] = outputs;
  write_json(art.manifest(), manifest);
}

namespace {

// Checks the dataset files against the manifest before consuming them.
void require_datasets_fresh(const Artifacts& art, const json& manifest) {
  try {
    for (const auto& [name, hash] : manifest.at("outputs").items())
      require_fresh(hash.get<std::string>(), art.dir + "/" + name, "dataset");
  } catch (const json::exception& e) {
    throw InputError(art.manifest() + ": malformed manifest: " + e.what());
  }
}

}  // namespace

void cmd_train(const PipelineConfig& config, FlowKind kind, std::ostream& log) {
  Artifacts art(config.output_dir);
  json manifest = load_json(art.manifest());
  require_datasets_fresh(art, manifest);

  std::vector<SphereSample> train_data = load_dataset_csv(art.pooled("train"));
  std::vector<SphereSample> valid_data = load_dataset_csv(art.pooled("validation"));
  TrainConfig tc = resolve_train_config(config, kind);
  std::string domain = "sphere";
  if (kind == FlowKind::moser && config.constraint_on_mesh) {
    tc.constraint_sampler = mesh_constraint_sampler(config, art);
    domain = "mesh";
  }

  TrainResult r = train_flow(kind, train_data, valid_data, tc);
  std::map<std::string, std::string> inputs{
      {basename_of(art.pooled("train")), file_hash_hex(art.pooled("train"))},
      {basename_of(art.pooled("validation")), file_hash_hex(art.pooled("validation"))}};
  save_checkpoint(art.checkpoint(kind), r.model, tc, inputs, domain);
  save_training_log(art.train_log(kind), r.log);
  log << "trained " << flow_kind_name(kind) << " for " << tc.epochs
      << " epochs, final validation corrected LL " << format_double(r.log.back().validation_ll)
      << "\n";
}

namespace {

// Loads the checkpoint and refuses stale dataset chains.
FlowModel load_checkpoint_fresh(const Artifacts& art, FlowKind kind, TrainConfig* tc) {
  json j = load_json(art.checkpoint(kind));
  if (j.contains("inputs"))
    for (const auto& [name, hash] : j.at("inputs").items())
      require_fresh(hash.get<std::string>(), art.dir + "/" + name, "model checkpoint");
  return load_checkpoint(art.checkpoint(kind), tc);
}

}  // namespace

void cmd_sample(const PipelineConfig& config, FlowKind kind, int mesh_id, int n,
                std::ostream& log) {
  check_mesh_id(config, mesh_id);
  if (n < 1) throw InputError("sample count must be positive");
  Artifacts art(config.output_dir);
  TrainConfig tc;
  FlowModel model = load_checkpoint_fresh(art, kind, &tc);
  MeshBundle b = load_mesh_bundle(config, art, mesh_id);
  Eigen::Matrix3d R = load_rotation_artifact(art.rotation(mesh_id), art);

  std::uint64_t seed = derive_seed(config.seed, "generate", static_cast<std::uint64_t>(mesh_id));
  Eigen::Matrix3Xd dirs = kind == FlowKind::cnf
                              ? cnf_sample(n, model, seed)
                              : moser_sample(n, model, seed, 100, tc.moser_floor);

  std::vector<SurfacePoint> points(n);
  for (int j = 0; j < n; ++j) points[j] = from_sphere(dirs.col(j), b.tri, R);
  save_surface_csv(art.samples_csv(kind, mesh_id), mesh_id, points, b.mesh);

  // heat colors: distribute each sample's barycentric mass onto the face corners
  std::vector<double> mass(b.mesh.n_vertices(), 0.0);
  for (const SurfacePoint& sp : points) {
    const auto& f = b.mesh.faces()[sp.face];
    for (int c = 0; c < 3; ++c) mass[f[c]] += sp.bary[c];
  }
  double peak = *std::max_element(mass.begin(), mass.end());
  std::vector<std::array<std::uint8_t, 3>> colors(mass.size());
  for (size_t v = 0; v < mass.size(); ++v)
    colors[v] = viridis_color(peak > 0.0 ? mass[v] / peak : 0.0);
  save_ply(art.samples_ply(kind, mesh_id), b.mesh.positions(), b.mesh.faces(), &colors);
  log << "wrote " << n << " " << flow_kind_name(kind) << " samples on mesh " << mesh_id << "\n";
}

void cmd_eval(const PipelineConfig& config, FlowKind kind, std::ostream& log) {
  Artifacts art(config.output_dir);
  TrainConfig tc;
  FlowModel model = load_checkpoint_fresh(art, kind, &tc);

  json report;
  report["kind"] = flow_kind_name(kind);
  report["checkpoint_hash"] = file_hash_hex(art.checkpoint(kind));
  report["datasets"] = json::array();
  auto add = [&](const std::string& name, const std::string& csv) {
    Evaluation e = evaluate(model, load_dataset_csv(csv), {}, tc.moser_floor);
    report["datasets"].push_back({{"name", name},
                                  {"mean", e.mean},
                                  {"std_error", e.std_error},
                                  {"count", e.count}});
    log << name << ": " << format_double(e.mean) << " +- " << format_double(e.std_error) << " ("
        << e.count << " samples)\n";
  };
  for (int k = 1; k <= mesh_count(config); ++k)
    add("mesh" + std::to_string(k), art.dataset("validation", k));
  add("pooled", art.pooled("validation"));
  write_json(art.eval_report(kind), report);
}

void cmd_export_density(const PipelineConfig& config, FlowKind kind, int mesh_id,
                        std::ostream& log) {
  check_mesh_id(config, mesh_id);
  Artifacts art(config.output_dir);
  TrainConfig tc;
  FlowModel model = load_checkpoint_fresh(art, kind, &tc);
  MeshBundle b = load_mesh_bundle(config, art, mesh_id);
  Eigen::Matrix3d R = load_rotation_artifact(art.rotation(mesh_id), art);

  int nv = b.tri.n_vertices();
  Eigen::Matrix3Xd aligned(3, nv);
  for (int v = 0; v < nv; ++v)
    aligned.col(v) = (R * b.tri.sphere_positions()[v]).normalized();

  Eigen::VectorXd sphere_log(nv);
  if (kind == FlowKind::cnf) {
    sphere_log = cnf_log_density(aligned, model);
  } else {
    Eigen::VectorXd mu = moser_density(model, aligned);
    for (int v = 0; v < nv; ++v) sphere_log(v) = std::log(std::max(mu(v), tc.moser_floor));
  }

  std::vector<double> density(nv);
  for (int v = 0; v < nv; ++v) {
    SurfacePoint sp = b.tri.sphere_to_surface(b.tri.sphere_positions()[v]);
    density[v] =
        std::exp(sphere_log(v) - b.tri.log_area_factor(b.tri.sphere_positions()[v], sp.face));
  }

  double lo = *std::min_element(density.begin(), density.end());
  double hi = *std::max_element(density.begin(), density.end());
  std::vector<std::array<std::uint8_t, 3>> colors(nv);
  for (int v = 0; v < nv; ++v)
    colors[v] = viridis_color(hi > lo ? (density[v] - lo) / (hi - lo) : 0.5);
  save_ply(art.density_ply(kind, mesh_id), b.mesh.positions(), b.mesh.faces(), &colors, "density",
           &density);
  log << "mesh " << mesh_id << " density range [" << format_double(lo) << ", " << format_double(hi)
      << "]\n";
}

SeedStudyResult run_seed_study(const PipelineConfig& config, FlowKind kind, int n_seeds,
                               std::ostream& log) {
  if (n_seeds < 1) throw InputError("seed study needs at least one seed");
  Artifacts art(config.output_dir);
  json manifest = load_json(art.manifest());
  require_datasets_fresh(art, manifest);
  std::vector<SphereSample> train_data = load_dataset_csv(art.pooled("train"));
  std::vector<SphereSample> valid_data = load_dataset_csv(art.pooled("validation"));

  SeedStudyResult out;
  for (int s = 0; s < n_seeds; ++s) {
    TrainConfig tc = resolve_train_config(config, kind);
    tc.seed = derive_seed(config.seed, "seed-study", static_cast<std::uint64_t>(s));
    if (kind == FlowKind::moser && config.constraint_on_mesh)
      tc.constraint_sampler = mesh_constraint_sampler(config, art);
    TrainResult r = train_flow(kind, train_data, {}, tc);
    Evaluation e = evaluate(r.model, valid_data, {}, tc.moser_floor);
    out.per_seed.push_back(e.mean);
    log << "seed " << s << ": " << format_double(e.mean) << "\n";
  }
  for (double v : out.per_seed) out.mean += v;
  out.mean /= static_cast<double>(n_seeds);
  out.stddev = sample_stddev(out.per_seed);
  out.table = fixed3(out.mean) + " ± " + fixed3(out.stddev);
  log << "corrected LL over " << n_seeds << " seeds: " << out.table << "\n";

  json j;
  j["kind"] = flow_kind_name(kind);
  j["seeds"] = n_seeds;
  j["per_seed"] = out.per_seed;
  j["mean"] = out.mean;
  j["stddev"] = out.stddev;
  j["table"] = out.table;
  write_json(art.seed_study(kind), j);
  return out;
}

std::vector<HoldoutRow> run_holdout_study(const PipelineConfig& config, FlowKind kind,
                                          int held_out_mesh, int n_seeds, std::ostream& log) {
  check_mesh_id(config, held_out_mesh);
  if (mesh_count(config) < 2) throw InputError("holdout study needs at least two meshes");
  if (n_seeds < 1) throw InputError("holdout study needs at least one seed");
  Artifacts art(config.output_dir);
  json manifest = load_json(art.manifest());
  require_datasets_fresh(art, manifest);

  std::vector<SphereSample> held_data =
      load_dataset_csv(art.dataset("validation", held_out_mesh));
  std::vector<std::vector<SphereSample>> candidates;
  for (int k = 1; k <= mesh_count(config); ++k)
    if (k != held_out_mesh) candidates.push_back(load_dataset_csv(art.dataset("train", k)));

  std::vector<HoldoutRow> rows;
  for (int k = 1; k <= static_cast<int>(candidates.size()); ++k) {
    std::vector<std::vector<SphereSample>> pooled_sets(candidates.begin(),
                                                       candidates.begin() + k);
    std::vector<SphereSample> train_data = pool(pooled_sets);
    for (int s = 0; s < n_seeds; ++s) {
      TrainConfig tc = resolve_train_config(config, kind);
      tc.seed = derive_seed(config.seed, "holdout",
                            static_cast<std::uint64_t>(k) * 1000 + static_cast<std::uint64_t>(s));
      if (kind == FlowKind::moser && config.constraint_on_mesh)
        tc.constraint_sampler = mesh_constraint_sampler(config, art);
      TrainResult r = train_flow(kind, train_data, {}, tc);
      Evaluation e = evaluate(r.model, held_data, {}, tc.moser_floor);
      rows.push_back({k, s, e.mean});
      log << "k=" << k << " seed " << s << ": held-out LL " << format_double(e.mean) << "\n";
    }
  }

  std::ofstream out(art.holdout_csv(kind));
  if (!out) throw InputError("cannot write holdout CSV: " + art.holdout_csv(kind));
  out << "k,seed,held_out_ll\n";
  for (const HoldoutRow& r : rows)
    out << r.k << ',' << r.seed_index << ',' << format_double(r.held_out_ll) << '\n';
  if (!out) throw Error("write failed: " + art.holdout_csv(kind));
  return rows;
}

}  // namespace cgm
