#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cgm/conformal.hpp"
#include "cgm/errors.hpp"
#include "cgm/mesh.hpp"
#include "cgm/mesh_io.hpp"
#include "cgm/registration.hpp"
#include "cgm/rng.hpp"
#include "cgm/sphere_correspondence.hpp"
#include "cgm/transport.hpp"

using namespace cgm;

namespace {

const std::string kData = std::string(CGM_DATA_DIR) + "/meshes/";

// The regular tetrahedron's vertices already sit on the unit sphere, so the
// identity map is a valid parameterization with zero log factors.
SphericalTriangulation identity_tetra() {
  auto mesh = load_mesh(kData + "tetra.obj");
  SphericalParameterization param;
  param.positions = mesh.positions();
  param.log_factor.assign(mesh.n_vertices(), 0.0);
  return SphericalTriangulation::build(mesh, param);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("contact probabilities pin the intensity range") {
  bool degenerate = true;
  auto p = contact_probabilities({0.0, 1.0}, &degenerate);
  CHECK(!degenerate);
  CHECK(p[0] == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.999).epsilon(1e-12));

  // the midpoint of the range maps to 1/2 by symmetry of the sigmoid
  auto q = contact_probabilities({0.0, 0.5, 1.0});
  CHECK(q[1] == doctest::Approx(0.5).epsilon(1e-12));

  // increasing affine rescaling of the intensities changes nothing
  Rng rng(3);
  std::vector<double> t(20), t2(20);
  for (int i = 0; i < 20; ++i) {
    t[i] = rng.uniform(-5, 5);
    t2[i] = 3.0 * t[i] + 7.0;
  }
  auto a = contact_probabilities(t), b = contact_probabilities(t2);
  for (int i = 0; i < 20; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));

  // constant intensities carry no information
  auto c = contact_probabilities({2.0, 2.0, 2.0}, &degenerate);
  CHECK(degenerate);
  for (double v : c) CHECK(v == 0.5);

  CHECK_THROWS_AS(contact_probabilities({}), InputError);
}

TEST_CASE("face weights average the vertex probabilities") {
  auto mesh = load_mesh(kData + "tetra.obj");

  Eigen::VectorXd w = face_distribution(mesh, {0.5, 0.5, 0.5, 0.5});
  for (int f = 0; f < 4; ++f) CHECK(w[f] == doctest::Approx(0.5).epsilon(1e-15));

  // a single hot vertex spreads 1/3 onto its incident faces only
  Eigen::VectorXd h = face_distribution(mesh, {1.0, 0.0, 0.0, 0.0});
  for (int f = 0; f < 4; ++f) {
    const auto& fv = mesh.faces()[f];
    bool incident = fv[0] == 0 || fv[1] == 0 || fv[2] == 0;
    CHECK(h[f] == doctest::Approx(incident ? 1.0 / 3.0 : 0.0).epsilon(1e-15));
  }

  CHECK_THROWS_AS(face_distribution(mesh, {0.5, 0.5}), InputError);
  CHECK_THROWS_AS(face_distribution(mesh, {0.5, 0.5, 0.5, 1.5}), InputError);
  CHECK_THROWS_AS(face_distribution(mesh, {0.5, 0.5, 0.5, -0.1}), InputError);
}

TEST_CASE("surface sampling follows the face weights") {
  auto mesh = load_mesh(kData + "tetra.obj");

  Eigen::VectorXd solo = Eigen::VectorXd::Zero(4);
  solo[2] = 1.0;
  for (const auto& sp : sample_surface(mesh, solo, 200, 9)) {
    CHECK(sp.face == 2);
    CHECK(sp.bary[0] >= 0.0);
    CHECK(sp.bary[1] >= 0.0);
    CHECK(sp.bary[2] >= 0.0);
    CHECK(sp.bary[0] + sp.bary[1] + sp.bary[2] == doctest::Approx(1.0).epsilon(1e-12));
  }

  // uniform weights: binomial counts and first-moment barycentrics
  int n = 40000;
  auto samples = sample_surface(mesh, Eigen::VectorXd::Ones(4), n, 11);
  int counts[4] = {0, 0, 0, 0};
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& sp : samples) {
    counts[sp.face]++;
    mean += Eigen::Vector3d(sp.bary[0], sp.bary[1], sp.bary[2]);
  }
  mean /= n;
  double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int f = 0; f < 4; ++f) CHECK(std::abs(counts[f] - n / 4.0) < 3.0 * sigma);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(mean[c] - 1.0 / 3.0) < 0.01);

  // reproducibility is part of the contract
  auto again = sample_surface(mesh, Eigen::VectorXd::Ones(4), 100, 11);
  auto other = sample_surface(mesh, Eigen::VectorXd::Ones(4), 100, 12);
  bool identical = true, differs = false;
  for (int i = 0; i < 100; ++i) {
    identical = identical && again[i].face == samples[i].face &&
                again[i].bary == samples[i].bary;
    differs = differs || other[i].face != samples[i].face || other[i].bary != samples[i].bary;
  }
  CHECK(identical);
  CHECK(differs);

  CHECK_THROWS_AS(sample_surface(mesh, Eigen::VectorXd::Zero(4), 10, 1), InputError);
  Eigen::VectorXd neg = Eigen::VectorXd::Ones(4);
  neg[1] = -0.25;
  CHECK_THROWS_AS(sample_surface(mesh, neg, 10, 1), InputError);
  CHECK_THROWS_AS(sample_surface(mesh, Eigen::VectorXd::Ones(4), 0, 1), InputError);
  CHECK_THROWS_AS(sample_surface(mesh, Eigen::VectorXd::Ones(3), 10, 1), InputError);
}

TEST_CASE("sphere datasets carry exact area corrections") {
  auto tri = identity_tetra();
  Eigen::Matrix3d R = euler_zyz(0.4, 1.1, -0.8);

  // a vertex sample lands on the rotated image of that vertex
  std::vector<SurfacePoint> pts{{0, {1.0, 0.0, 0.0}}, {2, {1.0 / 3, 1.0 / 3, 1.0 / 3}}};
  auto data = to_sphere_dataset(pts, tri, R, 7);
  REQUIRE(data.size() == 2);
  CHECK(data[0].mesh_id == 7);
  CHECK(data[0].face_id == 0);
  CHECK(data[0].bary == pts[0].bary);
  int v0 = tri.faces()[0][0];
  CHECK((data[0].direction - R * tri.sphere_positions()[v0]).norm() < 1e-12);

  // for the self-inscribed regular tetrahedron the centroid of any face sees
  // an area ratio of exactly 1/9 between the flat face and the sphere
  CHECK(data[1].log_area_correction == doctest::Approx(std::log(1.0 / 9.0)).epsilon(1e-12));
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (int k = 0; k < 3; ++k) c += tri.sphere_positions()[tri.faces()[2][k]];
  CHECK((data[1].direction - R * c.normalized()).norm() < 1e-12);

  // the correction is evaluated in the mesh's own frame, so rotating the
  // dataset must not change it
  auto plain = to_sphere_dataset(pts, tri, Eigen::Matrix3d::Identity(), 7);
  CHECK(data[1].log_area_correction == plain[1].log_area_correction);
}

TEST_CASE("sphere transport round trips") {
  auto mesh = load_mesh(kData + "blob_decimated.obj");
  auto tri = SphericalTriangulation::build(mesh, spherical_parameterize(mesh));
  Eigen::Matrix3d R = euler_zyz(-1.3, 0.7, 2.1);

  auto points = sample_surface(mesh, Eigen::VectorXd::Ones(mesh.n_faces()), 10000, 21);
  auto data = to_sphere_dataset(points, tri, R, 0);
  for (size_t i = 0; i < points.size(); ++i) {
    SurfacePoint back = from_sphere(data[i].direction, tri, R);
    REQUIRE(back.face == points[i].face);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(back.bary[c] - points[i].bary[c]) < 1e-9);
  }

  // and the other direction: sphere -> surface -> sphere
  Rng rng(33);
  for (int k = 0; k < 10000; ++k) {
    Eigen::Vector3d x = rng.unit_vector();
    SurfacePoint sp = from_sphere(x, tri, R);
    std::vector<SurfacePoint> one{sp};
    Eigen::Vector3d y = to_sphere_dataset(one, tri, R, 0)[0].direction;
    CHECK((y - x).norm() < 1e-10);
  }
}

TEST_CASE("uniform sphere samples push forward by spherical face area") {
  auto mesh = load_mesh(kData + "tetra.obj");
  auto tri = SphericalTriangulation::build(mesh, spherical_parameterize(mesh));
  Eigen::Matrix3d R = euler_zyz(0.9, 0.5, -0.3);

  int n = 100000;
  Rng rng(41);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(4);
  for (int k = 0; k < n; ++k) counts[from_sphere(rng.unit_vector(), tri, R).face] += 1.0;

  double chi2 = 0.0;
  for (int f = 0; f < 4; ++f) {
    const auto& fv = tri.faces()[f];
    double expected = n *
                      spherical_triangle_area(tri.sphere_positions()[fv[0]],
                                              tri.sphere_positions()[fv[1]],
                                              tri.sphere_positions()[fv[2]]) /
                      (4 * M_PI);
    chi2 += (counts[f] - expected) * (counts[f] - expected) / expected;
  }
  CHECK(chi2 < 16.27);  // 99.9% quantile, 3 degrees of freedom
}

TEST_CASE("pooling orders by mesh and keeps sample order") {
  auto make = [](int mesh_id, std::initializer_list<int> faces) {
    std::vector<SphereSample> d;
    for (int f : faces) {
      SphereSample s;
      s.mesh_id = mesh_id;
      s.face_id = f;
      d.push_back(s);
    }
    return d;
  };
  auto all = pool({make(2, {10, 11}), make(0, {20, 21, 22}), make(1, {30})});
  REQUIRE(all.size() == 6);
  int want_mesh[6] = {0, 0, 0, 1, 2, 2};
  int want_face[6] = {20, 21, 22, 30, 10, 11};
  for (int i = 0; i < 6; ++i) {
    CHECK(all[i].mesh_id == want_mesh[i]);
    CHECK(all[i].face_id == want_face[i]);
  }
  CHECK(pool({}).empty());
}

TEST_CASE("dataset CSV round trip is exact") {
  auto mesh = load_mesh(kData + "blob_decimated.obj");
  auto tri = SphericalTriangulation::build(mesh, spherical_parameterize(mesh));
  auto points = sample_surface(mesh, Eigen::VectorXd::Ones(mesh.n_faces()), 200, 5);
  auto data = to_sphere_dataset(points, tri, euler_zyz(0.2, 0.9, 1.7), 3);

  std::string path = "transport_roundtrip.csv";
  save_dataset_csv(path, data);
  auto loaded = load_dataset_csv(path);
  REQUIRE(loaded.size() == data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    CHECK(loaded[i].mesh_id == data[i].mesh_id);
    CHECK(loaded[i].face_id == data[i].face_id);
    CHECK(loaded[i].bary == data[i].bary);
    CHECK(loaded[i].direction == data[i].direction);
    CHECK(loaded[i].log_area_correction == data[i].log_area_correction);
  }

  // a second save of the loaded data reproduces the file byte for byte
  std::string path2 = "transport_roundtrip2.csv";
  save_dataset_csv(path2, loaded);
  CHECK(slurp(path) == slurp(path2));
  std::string header = slurp(path).substr(0, slurp(path).find('\n'));
  CHECK(header == "mesh_id,face_id,b0,b1,b2,x,y,z,log_area_correction");
  std::remove(path.c_str());
  std::remove(path2.c_str());

  // header and shape are enforced on load
  {
    std::ofstream bad("transport_bad.csv");
    bad << "mesh,face,b0,b1,b2,x,y,z,logc\n0,0,1,0,0,0,0,1,0\n";
  }
  CHECK_THROWS_AS(load_dataset_csv("transport_bad.csv"), InputError);
  {
    std::ofstream bad("transport_bad.csv");
    bad << "mesh_id,face_id,b0,b1,b2,x,y,z,log_area_correction\n0,0,1,0,0\n";
  }
  CHECK_THROWS_AS(load_dataset_csv("transport_bad.csv"), InputError);
  {
    std::ofstream bad("transport_bad.csv");
    bad << "mesh_id,face_id,b0,b1,b2,x,y,z,log_area_correction\n0,0,1,0,0,0,zero,1,0\n";
  }
  CHECK_THROWS_AS(load_dataset_csv("transport_bad.csv"), InputError);
  std::remove("transport_bad.csv");
  CHECK_THROWS_AS(load_dataset_csv("no_such_file.csv"), InputError);
}
