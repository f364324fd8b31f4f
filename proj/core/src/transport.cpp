#include "cgm/transport.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cgm/errors.hpp"
#include "cgm/rng.hpp"

namespace cgm {

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, end);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw InputError("dataset CSV: bad numeric field '" + s + "'");
  return v;
}

}  // namespace

std::vector<double> contact_probabilities(const std::vector<double>& intensities,
                                          bool* degenerate) {
  if (intensities.empty()) throw InputError("contact_probabilities: no intensities");
  auto [lo_it, hi_it] = std::minmax_element(intensities.begin(), intensities.end());
  double lo = *lo_it, hi = *hi_it;
  if (degenerate) *degenerate = false;
  std::vector<double> p(intensities.size());
  if (hi - lo <= 0.0) {
    if (degenerate) *degenerate = true;
    std::fill(p.begin(), p.end(), 0.5);
    return p;
  }
  double a = (logit(0.999) - logit(0.001)) / (hi - lo);
  double b = logit(0.001) - a * lo;
  for (size_t i = 0; i < intensities.size(); ++i)
    p[i] = 1.0 / (1.0 + std::exp(-(a * intensities[i] + b)));
  return p;
}

Eigen::VectorXd face_distribution(const TriangleMesh& mesh,
                                  const std::vector<double>& vertex_probs) {
  if (static_cast<int>(vertex_probs.size()) != mesh.n_vertices())
    throw InputError("face_distribution: probability count mismatch");
  for (double p : vertex_probs)
    if (!(p >= 0.0 && p <= 1.0))
      throw InputError("face_distribution: probability outside [0,1]");
  Eigen::VectorXd w(mesh.n_faces());
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const auto& fv = mesh.faces()[f];
    w[f] = (vertex_probs[fv[0]] + vertex_probs[fv[1]] + vertex_probs[fv[2]]) / 3.0;
  }
  return w;
}

std::vector<SurfacePoint> sample_surface(const TriangleMesh& mesh,
                                         const Eigen::VectorXd& face_weights, int n,
                                         std::uint64_t seed) {
  if (face_weights.size() != mesh.n_faces())
    throw InputError("sample_surface: weight count mismatch");
  if (n < 1) throw InputError("sample_surface: sample count must be positive");
  if (!(face_weights.maxCoeff() > 0.0) || face_weights.minCoeff() < 0.0)
    throw InputError("sample_surface: face weights must be nonnegative with a positive sum");

  Rng rng(seed);
  std::vector<SurfacePoint> out(n);
  for (int i = 0; i < n; ++i) {
    int f = rng.categorical(face_weights);
    double r1 = rng.uniform(), r2 = rng.uniform();
    double s = std::sqrt(r1);
    out[i] = SurfacePoint{f, {1.0 - s, s * (1.0 - r2), s * r2}};
  }
  return out;
}

std::vector<SphereSample> to_sphere_dataset(const std::vector<SurfacePoint>& points,
                                            const SphericalTriangulation& tri,
                                            const Eigen::Matrix3d& rotation, int mesh_id) {
  std::vector<SphereSample> out(points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    const SurfacePoint& sp = points[i];
    Eigen::Vector3d q = tri.surface_to_sphere(sp);
    SphereSample& s = out[i];
    s.mesh_id = mesh_id;
    s.face_id = sp.face;
    s.bary = sp.bary;
    s.log_area_correction = tri.log_area_factor(q, sp.face);
    s.direction = (rotation * q).normalized();
  }
  return out;
}

SurfacePoint from_sphere(const Eigen::Vector3d& x, const SphericalTriangulation& tri,
                         const Eigen::Matrix3d& rotation) {
  Eigen::Vector3d y = (rotation.transpose() * x).normalized();
  return tri.sphere_to_surface(y);
}

std::vector<SphereSample> pool(const std::vector<std::vector<SphereSample>>& datasets) {
  std::vector<SphereSample> all;
  size_t total = 0;
  for (const auto& d : datasets) total += d.size();
  all.reserve(total);
  for (const auto& d : datasets) all.insert(all.end(), d.begin(), d.end());
  std::stable_sort(all.begin(), all.end(),
                   [](const SphereSample& a, const SphereSample& b) {
                     return a.mesh_id < b.mesh_id;
                   });
  return all;
}

namespace {
const char* kCsvHeader = "mesh_id,face_id,b0,b1,b2,x,y,z,log_area_correction";
}

void save_dataset_csv(const std::string& path, const std::vector<SphereSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_dataset_csv: cannot open " + path);
  out << kCsvHeader << "\n";
  for (const auto& s : samples) {
    out << s.mesh_id << ',' << s.face_id << ',' << format_double(s.bary[0]) << ','
        << format_double(s.bary[1]) << ',' << format_double(s.bary[2]) << ','
        << format_double(s.direction.x()) << ',' << format_double(s.direction.y()) << ','
        << format_double(s.direction.z()) << ',' << format_double(s.log_area_correction)
        << "\n";
  }
  if (!out) throw Error("save_dataset_csv: write failed for " + path);
}

std::vector<SphereSample> load_dataset_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("load_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw InputError("load_dataset_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader)
    throw InputError("load_dataset_csv: missing or malformed header in " + path);

  std::vector<SphereSample> out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 9)
      throw InputError("load_dataset_csv: expected 9 fields, got " +
                       std::to_string(fields.size()));
    SphereSample s;
    s.mesh_id = static_cast<int>(parse_double(fields[0]));
    s.face_id = static_cast<int>(parse_double(fields[1]));
    for (int c = 0; c < 3; ++c) s.bary[c] = parse_double(fields[2 + c]);
    s.direction = Eigen::Vector3d(parse_double(fields[5]), parse_double(fields[6]),
                                  parse_double(fields[7]));
    s.log_area_correction = parse_double(fields[8]);
    out.push_back(s);
  }
  return out;
}

}  // namespace cgm
