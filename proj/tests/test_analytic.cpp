#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "sandpile/analytic.hpp"

using namespace sandpile;
using std::numbers::pi;

namespace {

constexpr double k0 = 0.4, R0 = 0.2;

// (1/R) * int_0^R (f - dw/dt) s ds. The source part is integrated exactly, the
// rest by composite midpoint rule with dw/dt by central differences.
double flux_by_quadrature(const std::function<double(double, double)>& w, double t, double R) {
  const int n = 20000;
  const double ds = R / n, dt = 1e-5;
  const double rs = std::min(R, R0);
  double acc = rs * rs / (2 * pi * R0 * R0);
  for (int i = 0; i < n; ++i) {
    const double s = (i + 0.5) * ds;
    const double wt = (w(t + dt, s) - w(t - dt, s)) / (2 * dt);
    acc -= wt * s * ds;
  }
  return acc / R;
}

}  // namespace

TEST(Ex1, Tstar) {
  EXPECT_NEAR(ex1_tstar(k0, R0), 0.017412, 1e-6);
  EXPECT_EQ(ex1_tstar(k0, 0.0), 0.0);
  EXPECT_NEAR(ex1_tstar(k0, 2 * R0), 8 * ex1_tstar(k0, R0), 1e-15);
}

TEST(Ex1, Surface) {
  EXPECT_NEAR(ex1_surface(0.1, 0.0, k0, R0), 0.4 * std::cbrt(0.3 / (0.4 * pi)), 1e-14);
  EXPECT_NEAR(ex1_surface(0.1, 0.0, k0, R0), 0.24814, 1e-5);
  EXPECT_EQ(ex1_surface(0.1, 0.6204, k0, R0), 0.0);
  EXPECT_EQ(ex1_surface(0.1, 0.9, k0, R0), 0.0);
  EXPECT_NEAR(ex1_surface(ex1_tstar(k0, R0), 0.0, k0, R0), k0 * R0 * std::sqrt(3.0), 1e-12);
  EXPECT_THROW(ex1_surface(0.01, 0.0, k0, R0), OutOfRegime);
  EXPECT_THROW(ex1_flux(0.01, 0.3, k0, R0), OutOfRegime);
}

TEST(Ex1, VolumeIdentity) {
  for (double t : {0.02, 0.05, 0.1}) {
    const double rc = ex1_cone_radius(t, k0);
    EXPECT_NEAR(pi / 3 * k0 * rc * rc * rc, t, 1e-12);
    // radial quadrature of the surface itself
    const int n = 100000;
    double v = 0.0;
    for (int i = 0; i < n; ++i) {
      const double R = (i + 0.5) / n;
      v += 2 * pi * ex1_surface(t, R, k0, R0) * R / n;
    }
    EXPECT_NEAR(v, t, 1e-8);
  }
}

TEST(Ex1, FluxValues) {
  const double t = 0.1, rc = ex1_cone_radius(t, k0);
  const double rcdot = 1.0 / (pi * k0 * rc * rc);
  EXPECT_NEAR(ex1_flux(t, 0.4, k0, R0), 1 / (2 * pi * 0.4) - 0.4 * rcdot * 0.2, 1e-12);
  EXPECT_NEAR(ex1_flux(t, 0.4, k0, R0), 0.2325, 1e-4);
  EXPECT_NEAR(ex1_flux(t, rc, k0, R0), 0.0, 1e-12);
  EXPECT_EQ(ex1_flux(t, 0.8, k0, R0), 0.0);
  EXPECT_EQ(ex1_flux(t, 0.0, k0, R0), 0.0);
  EXPECT_LT(std::abs(ex1_flux(t, 1e-9, k0, R0)), 1e-6);
}

TEST(Ex1, FluxMatchesBalanceQuadrature) {
  const auto w = [](double t, double R) { return ex1_surface(t, R, k0, R0); };
  for (double R : {0.05, 0.15, 0.2, 0.3, 0.5, 0.61}) EXPECT_NEAR(ex1_flux(0.1, R, k0, R0), flux_by_quadrature(w, 0.1, R), 2e-6) << R;
}

TEST(Ex3, Radii) {
  const Ex3Radii r = ex3_radii(0.1, k0);
  EXPECT_NEAR(r.r1, 0.1796, 1e-4);
  EXPECT_NEAR(r.r2, 0.7306, 1e-4);
  EXPECT_NEAR(r.r2, r.r1 + (0.4 - r.r1) / k0, 1e-12);
  EXPECT_NEAR(pi / 3 * ((std::pow(r.r2, 3) - std::pow(r.r1, 3)) * k0 - (std::pow(0.4, 3) - std::pow(r.r1, 3))), 0.1,
              1e-10);
  const Ex3Radii small = ex3_radii(1e-9, k0);
  EXPECT_NEAR(small.r1, 0.4, 1e-3);
  EXPECT_NEAR(small.r2, 0.4, 1e-3);
  EXPECT_THROW(ex3_radii(0.0, k0), OutOfRegime);
  EXPECT_THROW(ex3_radii(5.0, k0), OutOfRegime);
}

TEST(Ex3, SurfaceContinuousAndNonNegative) {
  const Ex3Radii r = ex3_radii(0.1, k0);
  EXPECT_NEAR(ex3_surface(0.1, r.r1 - 1e-12, k0), ex3_surface(0.1, r.r1 + 1e-12, k0), 1e-10);
  EXPECT_NEAR(0.4 - r.r1, k0 * (r.r2 - r.r1), 1e-12);
  for (int i = 0; i <= 1000; ++i) {
    const double R = i / 1000.0;
    EXPECT_GE(ex3_surface(0.1, R, k0), 0.0);
    EXPECT_GE(ex3_surface(0.1, R, k0), std::max(0.4 - R, 0.0) - 1e-15);
  }
}

TEST(Ex3, FluxValues) {
  const double t = 0.1;
  const Ex3Radii r = ex3_radii(t, k0);
  EXPECT_NEAR(ex3_flux(t, r.r2, k0, R0), 0.0, 1e-6);
  EXPECT_EQ(ex3_flux(t, 0.9, k0, R0), 0.0);
  EXPECT_EQ(ex3_flux(t, 0.0, k0, R0), 0.0);
  // no pile growth inside R1: all the source runs down the bare cone
  ASSERT_LT(0.17, r.r1);
  for (double R : {0.1, 0.17}) EXPECT_NEAR(ex3_flux(t, R, k0, R0), R / (2 * pi * R0 * R0), 1e-12);

  const auto w = [](double tt, double R) { return ex3_surface(tt, R, k0); };
  for (double R : {0.1, 0.25, 0.4, 0.6, 0.72}) EXPECT_NEAR(ex3_flux(t, R, k0, R0), flux_by_quadrature(w, t, R), 1e-4) << R;
}

TEST(Ex3, FluxContinuous) {
  const double t = 0.1;
  double prev = ex3_flux(t, 0.001, k0, R0);
  for (int i = 2; i <= 1000; ++i) {
    const double q = ex3_flux(t, 0.001 * i, k0, R0);
    EXPECT_LT(std::abs(q - prev), 0.05) << i;
    prev = q;
  }
}

TEST(RelErrors, Surface) {
  const TriMesh m = generate_disk_mesh(1.0, 0.05);
  const auto exact = [](const Vec2& x) { return ex1_surface(0.1, norm(x), k0, R0); };
  const NodalField wn = p1_interpolate(exact, m);
  EXPECT_LT(rel_l1_error_surface(wn, exact), 1e-3);
  NodalField scaled = wn;
  for (double& v : scaled.values) v *= 1.01;
  EXPECT_NEAR(rel_l1_error_surface(scaled, exact), 0.01, 1e-12);

  CellField wc = p0_project(exact, m);
  for (double& v : wc.values) v *= 0.98;
  double num = 0.0, den = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    num += m.area(t) * std::abs(wc[t] - exact(m.centroid(t)));
    den += m.area(t) * std::abs(exact(m.centroid(t)));
  }
  EXPECT_NEAR(rel_l1_error_surface(wc, exact), num / den, 1e-12);
  EXPECT_THROW(rel_l1_error_surface(wn, [](const Vec2&) { return 0.0; }), InvalidArgument);
}

TEST(RelErrors, Flux) {
  const VectorFunction exact = radial_field([](double R) { return ex1_flux(0.1, R, k0, R0); });
  // the interpolation error of the exact flux is first order in h
  double prev = 0.0;
  for (double h : {0.08, 0.04}) {
    const TriMesh mh = generate_disk_mesh_max_diameter(1.0, h);
    const double e = rel_l1_error_flux(rt0_interpolate(exact, build_edge_topology(mh)), exact);
    EXPECT_LT(e, 2.5 * h);
    if (prev > 0.0) EXPECT_LT(e, 0.6 * prev);
    prev = e;
  }
  const TriMesh m = generate_disk_mesh(1.0, 0.05);
  EXPECT_NEAR(rel_l1_error_flux(CellVectorField(m), exact), 1.0, 1e-15);
  EXPECT_THROW(rel_l1_error_flux(CellVectorField(m), [](const Vec2&) { return Vec2{}; }), InvalidArgument);
}
