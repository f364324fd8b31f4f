#include <benchmark/benchmark.h>

#include <Eigen/Dense>
#include <complex>

#include "cgm/conformal.hpp"
#include "cgm/flows.hpp"
#include "cgm/mesh_io.hpp"
#include "cgm/mlp.hpp"
#include "cgm/registration.hpp"
#include "cgm/rng.hpp"
#include "cgm/sht.hpp"
#include "cgm/sphere_correspondence.hpp"

using namespace cgm;

namespace {

const std::string kData = std::string(CGM_DATA_DIR) + "/meshes/";

const TriangleMesh& icosphere2() {
  static TriangleMesh mesh = load_mesh(kData + "icosphere2.obj");
  return mesh;
}

const SphericalTriangulation& icosphere3_tri() {
  static SphericalTriangulation tri = [] {
    TriangleMesh mesh = load_mesh(kData + "icosphere3.obj");
    return SphericalTriangulation::build(mesh, spherical_parameterize(mesh));
  }();
  return tri;
}

Eigen::Matrix3Xd random_units(int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::Matrix3Xd x(3, n);
  for (int j = 0; j < n; ++j) x.col(j) = rng.unit_vector();
  return x;
}

HarmonicCoefficients random_coeffs(int B, std::uint64_t seed) {
  Rng rng(seed);
  HarmonicCoefficients c(B);
  for (int l = 0; l < B; ++l) {
    c.at(l, 0) = rng.normal();
    for (int m = 1; m <= l; ++m) {
      std::complex<double> z(rng.normal(), rng.normal());
      c.at(l, m) = z;
      c.at(l, -m) = (m % 2 ? -1.0 : 1.0) * std::conj(z);
    }
  }
  return c;
}

}  // namespace

static void BM_SphericalParameterize(benchmark::State& state) {
  const TriangleMesh& mesh = icosphere2();
  for (auto _ : state) {
    SphericalParameterization p = spherical_parameterize(mesh);
    benchmark::DoNotOptimize(p.report.max_edge_residual);
  }
}
BENCHMARK(BM_SphericalParameterize)->Unit(benchmark::kMillisecond);

static void BM_SphereLocate(benchmark::State& state) {
  const SphericalTriangulation& tri = icosphere3_tri();
  Eigen::Matrix3Xd dirs = random_units(4096, 1);
  int j = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tri.locate(dirs.col(j)));
    j = (j + 1) & 4095;
  }
}
BENCHMARK(BM_SphereLocate);

static void BM_LogAreaFactor(benchmark::State& state) {
  const SphericalTriangulation& tri = icosphere3_tri();
  Eigen::Matrix3Xd dirs = random_units(4096, 2);
  int j = 0;
  for (auto _ : state) {
    Eigen::Vector3d x = dirs.col(j);
    benchmark::DoNotOptimize(tri.log_area_factor(x, tri.locate(x)));
    j = (j + 1) & 4095;
  }
}
BENCHMARK(BM_LogAreaFactor);

static void BM_ShtForward(benchmark::State& state) {
  int B = static_cast<int>(state.range(0));
  Rng rng(3);
  Eigen::MatrixXd samples(2 * B, 2 * B);
  for (int r = 0; r < 2 * B; ++r)
    for (int c = 0; c < 2 * B; ++c) samples(r, c) = rng.normal();
  for (auto _ : state) {
    HarmonicCoefficients c = sht_forward(samples);
    benchmark::DoNotOptimize(c.raw().data());
  }
}
BENCHMARK(BM_ShtForward)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);

static void BM_So3Correlation(benchmark::State& state) {
  int B = static_cast<int>(state.range(0));
  HarmonicCoefficients f = random_coeffs(B, 4), g = random_coeffs(B, 5);
  for (auto _ : state) {
    CorrelationVolume vol = so3_correlation(f, g);
    benchmark::DoNotOptimize(vol.values.front()(0, 0));
  }
}
BENCHMARK(BM_So3Correlation)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_AlignFields(benchmark::State& state) {
  int B = static_cast<int>(state.range(0));
  HarmonicCoefficients fc = random_coeffs(B, 6);
  Eigen::Matrix3d R0 = euler_zyz(0.9, 0.6, -1.2);
  SphereField f = [&](const Eigen::Vector3d& x) { return harmonic_evaluate(fc, x); };
  SphereField g = [&](const Eigen::Vector3d& x) { return harmonic_evaluate(fc, R0 * x); };
  for (auto _ : state) {
    AlignmentResult r = align_fields(B, f, g, true);
    benchmark::DoNotOptimize(r.score);
  }
}
BENCHMARK(BM_AlignFields)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_Divergence(benchmark::State& state) {
  MlpField field(4, 32, 7);
  Eigen::Matrix3Xd x = random_units(1024, 8);
  int j = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(divergence(field, x.col(j), 0.5));
    j = (j + 1) & 1023;
  }
}
BENCHMARK(BM_Divergence);

static void BM_CnfForwardFixed(benchmark::State& state) {
  FlowModel model{FlowKind::cnf, MlpField(4, 32, 9)};
  Eigen::Matrix3Xd x = random_units(256, 10);
  for (auto _ : state) {
    CnfResult r = cnf_forward_fixed(x, model, 10);
    benchmark::DoNotOptimize(r.delta_log_density.sum());
  }
}
BENCHMARK(BM_CnfForwardFixed)->Unit(benchmark::kMillisecond);

static void BM_MoserDensityBatch(benchmark::State& state) {
  FlowModel model{FlowKind::moser, MlpField(3, 32, 11)};
  Eigen::Matrix3Xd x = random_units(1024, 12);
  for (auto _ : state) {
    Eigen::VectorXd mu = moser_density(model, x);
    benchmark::DoNotOptimize(mu.sum());
  }
}
BENCHMARK(BM_MoserDensityBatch)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
