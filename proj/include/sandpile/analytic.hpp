#ifndef SANDPILE_ANALYTIC_HPP
#define SANDPILE_ANALYTIC_HPP

// Radially symmetric reference solutions and the relative L1 error measures
// used to score the solvers against them.
//
// Both references pour a uniform source of total rate `rate` on the disk
// |x| <= R0. The radial flux follows from the balance law
//   (1/R) d(R q)/dR = f - dw/dt,  q(0) = 0,
// i.e. q(R) = (F(R) - G(R)) / R with F(R) = int_0^R f s ds and G(R) = int_0^R w_t s ds.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sandpile/errors.hpp"
#include "sandpile/fem.hpp"

namespace sandpile {

namespace detail {

inline double cumulative_source(double R, double R0, double rate) {
  const double s = std::min(R, R0);
  return rate * s * s / (2.0 * std::numbers::pi * R0 * R0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Example 1: flat support, the pile is a cone of slope k0 once t >= t*.

inline double ex1_tstar(double k0, double R0) { return std::numbers::pi * k0 * R0 * R0 * R0 * std::sqrt(3.0); }

inline double ex1_cone_radius(double t, double k0, double rate = 1.0) {
  return std::cbrt(3.0 * rate * t / (std::numbers::pi * k0));
}

inline void ex1_require_regime(double t, double k0, double R0) {
  if (!(t >= ex1_tstar(k0, R0) * (1.0 - 1e-12)))
    throw OutOfRegime("flat-support reference only covers t >= t* = " + std::to_string(ex1_tstar(k0, R0)));
}

inline double ex1_surface(double t, double R, double k0, double R0, double rate = 1.0) {
  ex1_require_regime(t, k0, R0);
  return k0 * std::max(ex1_cone_radius(t, k0, rate) - R, 0.0);
}

inline double ex1_flux(double t, double R, double k0, double R0, double rate = 1.0) {
  ex1_require_regime(t, k0, R0);
  if (R <= 0.0) return 0.0;
  const double rc = ex1_cone_radius(t, k0, rate);
  if (R >= rc) return 0.0;
  const double drc = rate / (std::numbers::pi * k0 * rc * rc);
  return (detail::cumulative_source(R, R0, rate) - 0.5 * k0 * drc * R * R) / R;
}

// ---------------------------------------------------------------------------
// Example 3: sand piling around a steep cone support max(c - |x|, 0).

struct Ex3Radii {
  double r1;  // where the pile meets the bare cone
  double r2;  // outer base of the pile
};

namespace detail {

// Pile volume for inner radius r1, with r2 tied to r1 by continuity with the cone.
inline double ex3_volume(double r1, double k0, double c) {
  const double r2 = r1 + (c - r1) / k0;
  return std::numbers::pi / 3.0 * ((r2 * r2 * r2 - r1 * r1 * r1) * k0 - (c * c * c - r1 * r1 * r1));
}

}  // namespace detail

/// Radii for pile volume rate*t, root-found by bisection on r1 in [0, c].
inline Ex3Radii ex3_radii(double t, double k0, double cone = 0.4, double rate = 1.0) {
  if (!(t > 0.0)) throw OutOfRegime("cone-support reference needs t > 0");
  const double target = rate * t;
  double lo = 0.0, hi = cone;  // volume decreases in r1, zero at r1 = c
  if (detail::ex3_volume(lo, k0, cone) < target)
    throw OutOfRegime("pile has outgrown the cone (no root in [0, " + std::to_string(cone) + "])");
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (detail::ex3_volume(mid, k0, cone) > target ? lo : hi) = mid;
  }
  const double r1 = 0.5 * (lo + hi);
  return {r1, r1 + (cone - r1) / k0};
}

inline double ex3_surface(double t, double R, double k0, double cone = 0.4, double rate = 1.0) {
  const Ex3Radii r = ex3_radii(t, k0, cone, rate);
  if (R < r.r1) return cone - R;
  return k0 * std::max(r.r2 - R, 0.0);
}

inline double ex3_flux(double t, double R, double k0, double R0, double cone = 0.4, double rate = 1.0) {
  const Ex3Radii r = ex3_radii(t, k0, cone, rate);
  if (R <= 0.0) return 0.0;
  const double dt = 1e-6;
  const double dr2 = (ex3_radii(t + dt, k0, cone, rate).r2 - ex3_radii(t - dt, k0, cone, rate).r2) / (2.0 * dt);
  const double Rin = std::clamp(R, r.r1, r.r2);
  const double growth = 0.5 * k0 * dr2 * (Rin * Rin - r.r1 * r.r1);
  const double q = (detail::cumulative_source(R, R0, rate) - growth) / R;
  return R >= r.r2 ? 0.0 : q;
}

// ---------------------------------------------------------------------------
// Error measures

/// Relative L1 error of a P1 field, vertex quadrature.
inline double rel_l1_error_surface(const NodalField& num, const ScalarFunction& exact) {
  const TriMesh& mesh = *num.mesh;
  double err = 0.0, ref = 0.0;
  std::vector<double> ex(mesh.num_vertices());
  for (int v = 0; v < mesh.num_vertices(); ++v) ex[v] = exact(mesh.vertex(v));
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    for (int v : mesh.triangle(t)) {
      err += mesh.area(t) / 3.0 * std::abs(num[v] - ex[v]);
      ref += mesh.area(t) / 3.0 * std::abs(ex[v]);
    }
  }
  if (ref == 0.0) throw InvalidArgument("relative error undefined: exact surface vanishes");
  return err / ref;
}

/// Relative L1 error of a P0 field, centroid quadrature.
inline double rel_l1_error_surface(const CellField& num, const ScalarFunction& exact) {
  const TriMesh& mesh = *num.mesh;
  double err = 0.0, ref = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double e = exact(mesh.centroid(t));
    err += mesh.area(t) * std::abs(num[t] - e);
    ref += mesh.area(t) * std::abs(e);
  }
  if (ref == 0.0) throw InvalidArgument("relative error undefined: exact surface vanishes");
  return err / ref;
}

/// Relative L1 flux error from values at cell centroids.
inline double rel_l1_error_flux(const CellVectorField& num, const VectorFunction& exact) {
  const TriMesh& mesh = *num.mesh;
  double err = 0.0, ref = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Vec2 e = exact(mesh.centroid(t));
    err += mesh.area(t) * norm(num[t] - e);
    ref += mesh.area(t) * norm(e);
  }
  if (ref == 0.0) throw InvalidArgument("relative error undefined: exact flux vanishes");
  return err / ref;
}

inline double rel_l1_error_flux(const EdgeFluxField& num, const VectorFunction& exact) {
  return rel_l1_error_flux(rt0_cell_centers(num), exact);
}

// Radial magnitude q(R) turned into the vector field q(|x|) x/|x|.
inline VectorFunction radial_field(std::function<double(double)> q) {
  return [q = std::move(q)](const Vec2& x) {
    const double R = norm(x);
    return R > 0.0 ? (q(R) / R) * x : Vec2{};
  };
}

}  // namespace sandpile

#endif  // SANDPILE_ANALYTIC_HPP
