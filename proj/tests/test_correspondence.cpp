#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "cgm/conformal.hpp"
#include "cgm/errors.hpp"
#include "cgm/mesh.hpp"
#include "cgm/mesh_io.hpp"
#include "cgm/rng.hpp"
#include "cgm/sphere_correspondence.hpp"

using namespace cgm;

namespace {

const std::string kData = std::string(CGM_DATA_DIR) + "/meshes/";

SphericalTriangulation make(const std::string& name) {
  auto mesh = load_mesh(kData + name);
  return SphericalTriangulation::build(mesh, spherical_parameterize(mesh));
}

SurfacePoint random_interior_point(Rng& rng, int n_faces) {
  SurfacePoint sp;
  sp.face = static_cast<int>(rng.uniform() * n_faces);
  double a = 0.1 + 0.8 * rng.uniform(), b = (1.0 - a) * rng.uniform();
  sp.bary = {a, b, 1.0 - a - b};
  return sp;
}

}  // namespace

TEST_CASE("spherical triangle areas") {
  Eigen::Vector3d x(1, 0, 0), y(0, 1, 0), z(0, 0, 1);
  CHECK(spherical_triangle_area(x, y, z) == doctest::Approx(M_PI / 2).epsilon(1e-14));
  CHECK(spherical_triangle_area(x, z, y) == doctest::Approx(-M_PI / 2).epsilon(1e-14));
  // octant partition of the full sphere
  double total = 0.0;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1}) {
        Eigen::Vector3d a(sx, 0, 0), b(0, sy, 0), c(0, 0, sz);
        total += std::abs(spherical_triangle_area(a, b, c));
      }
  CHECK(total == doctest::Approx(4 * M_PI).epsilon(1e-14));
}

TEST_CASE("locate matches the linear scan") {
  for (const char* name : {"tetra.obj", "icosahedron.obj", "blob_decimated.obj"}) {
    auto tri = make(name);
    Rng rng(5);
    for (int k = 0; k < 400; ++k) {
      Eigen::Vector3d x = rng.unit_vector();
      CHECK(tri.locate(x) == tri.locate_linear(x));
    }
    // edge midpoints sit in two faces at once; the tie must break identically
    for (int k = 0; k < 50; ++k) {
      int f = static_cast<int>(rng.uniform() * tri.n_faces());
      const auto& fv = tri.faces()[f];
      Eigen::Vector3d mid =
          (tri.sphere_positions()[fv[0]] + tri.sphere_positions()[fv[1]]).normalized();
      CHECK(tri.locate(mid) == tri.locate_linear(mid));
    }
    // vertices sit in a whole fan of faces
    for (int v = 0; v < tri.n_vertices(); v += 7) {
      Eigen::Vector3d x = tri.sphere_positions()[v];
      CHECK(tri.locate(x) == tri.locate_linear(x));
    }
  }
}

TEST_CASE("sphere and surface round trips") {
  auto tri = make("blob_decimated.obj");
  Rng rng(17);
  for (int k = 0; k < 300; ++k) {
    SurfacePoint sp = random_interior_point(rng, tri.n_faces());
    Eigen::Vector3d x = tri.surface_to_sphere(sp);
    CHECK(std::abs(x.norm() - 1.0) < 1e-14);
    SurfacePoint back = tri.sphere_to_surface(x);
    REQUIRE(back.face == sp.face);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(back.bary[c] - sp.bary[c]) < 1e-10);
  }

  // vertices map to vertices
  for (int v = 0; v < tri.n_vertices(); v += 11) {
    SurfacePoint sp = tri.sphere_to_surface(tri.sphere_positions()[v]);
    Eigen::Vector3d p = tri.original_point(sp);
    CHECK((p - tri.original_positions()[v]).norm() < 1e-9);
    CHECK(tri.log_factor_at(tri.sphere_positions()[v]) ==
          doctest::Approx(tri.log_factors()[v]).epsilon(1e-9));
  }
}

TEST_CASE("spherical faces partition the sphere") {
  for (const char* name : {"tetra.obj", "icosahedron.obj", "blob_decimated.obj"}) {
    auto tri = make(name);
    double total = 0.0;
    for (const auto& fv : tri.faces())
      total += spherical_triangle_area(tri.sphere_positions()[fv[0]],
                                       tri.sphere_positions()[fv[1]],
                                       tri.sphere_positions()[fv[2]]);
    CHECK(total == doctest::Approx(4 * M_PI).epsilon(1e-10));
  }
}

TEST_CASE("area factor against finite differences") {
  auto tri = make("blob_decimated.obj");
  Rng rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    SurfacePoint sp = random_interior_point(rng, tri.n_faces());
    Eigen::Vector3d x = tri.surface_to_sphere(sp);
    int f = sp.face;
    const auto& fv = tri.faces()[f];
    const Eigen::Vector3d& a = tri.sphere_positions()[fv[0]];
    Eigen::Vector3d n = (tri.sphere_positions()[fv[1]] - a)
                            .cross(tri.sphere_positions()[fv[2]] - a);

    // project the sphere neighborhood of x onto the chord plane and measure
    // the area ratio of a small tangent triangle
    auto to_plane = [&](const Eigen::Vector3d& z) {
      return Eigen::Vector3d(n.dot(a) / n.dot(z) * z);
    };
    Eigen::Vector3d e1 = x.cross(Eigen::Vector3d(0.12, -0.77, 0.63)).normalized();
    Eigen::Vector3d e2 = x.cross(e1);
    double eps = 1e-5;
    Eigen::Vector3d y0 = to_plane(x), y1 = to_plane(x + eps * e1), y2 = to_plane(x + eps * e2);
    double plane_area = 0.5 * ((y1 - y0).cross(y2 - y0)).norm();
    double sphere_area = 0.5 * eps * eps;

    double orig_over_chord =
        (tri.original_positions()[fv[1]] - tri.original_positions()[fv[0]])
            .cross(tri.original_positions()[fv[2]] - tri.original_positions()[fv[0]])
            .norm() /
        n.norm();
    double fd = plane_area / sphere_area * orig_over_chord;
    double exact = std::exp(tri.log_area_factor(x, f));
    CHECK(fd == doctest::Approx(exact).epsilon(1e-5));
  }
}

TEST_CASE("area factor integrates to the surface area") {
  auto mesh = load_mesh(kData + "tetra.obj");
  auto tri = SphericalTriangulation::build(mesh, spherical_parameterize(mesh));
  Rng rng(31);
  int n = 200000;
  double sum = 0.0;
  for (int k = 0; k < n; ++k) {
    Eigen::Vector3d x = rng.unit_vector();
    sum += std::exp(tri.log_area_factor(x, tri.locate(x)));
  }
  double estimate = 4 * M_PI * sum / n;
  CHECK(estimate == doctest::Approx(total_area(mesh)).epsilon(0.01));
}

TEST_CASE("exact per-face area integral") {
  // integrating the area factor over one spherical face must give that
  // face's original area; do it with high-order quadrature by subdividing
  auto tri = make("icosahedron.obj");
  int f = 3;
  const auto& fv = tri.faces()[f];
  Eigen::Vector3d A = tri.sphere_positions()[fv[0]], B = tri.sphere_positions()[fv[1]],
                  C = tri.sphere_positions()[fv[2]];
  double integral = 0.0;
  int n = 160;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n - i; ++j)
      for (int half = 0; half < 2; ++half) {
        double b0, b1;
        if (half == 0) {
          b0 = (i + 1.0 / 3) / n;
          b1 = (j + 1.0 / 3) / n;
        } else {
          if (j >= n - i - 1) continue;
          b0 = (i + 2.0 / 3) / n;
          b1 = (j + 2.0 / 3) / n;
        }
        Eigen::Vector3d q = (1 - b0 - b1) * A + b0 * B + b1 * C;
        Eigen::Vector3d x = q.normalized();
        // spherical area of the sub-triangle around this sample
        Eigen::Vector3d pa = (1 - (double)i / n - (double)j / n) * A + (double)i / n * B +
                             (double)j / n * C;
        double cell = spherical_triangle_area(
            ((n - i - j) * A + i * B + j * C).normalized(),
            ((n - i - j - 1) * A + (i + 1) * B + j * C).normalized(),
            ((n - i - j - 1) * A + i * B + (j + 1) * C).normalized());
        if (half == 1)
          cell = spherical_triangle_area(
              ((n - i - j - 1) * A + (i + 1) * B + j * C).normalized(),
              ((n - i - j - 2) * A + (i + 1) * B + (j + 1) * C).normalized(),
              ((n - i - j - 1) * A + i * B + (j + 1) * C).normalized());
        (void)pa;
        integral += cell * std::exp(tri.log_area_factor(x, f));
      }
  auto mesh = load_mesh(kData + "icosahedron.obj");
  CHECK(integral == doctest::Approx(face_area(mesh, f)).epsilon(2e-4));
}
