#ifndef SANDPILE_MATERIAL_HPP
#define SANDPILE_MATERIAL_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "sandpile/errors.hpp"
#include "sandpile/expression.hpp"
#include "sandpile/fem.hpp"

namespace sandpile {

struct ModelParams {
  double k0 = 0.4;          // critical slope of the sand
  double eps = 0.01;        // height of the ramp between bare support and covered support
  double r = 1.0 + 1e-7;    // flux regularization exponent
  double delta = 1e-9;      // smoothing in |q|_delta
  double T = 0.1;           // final time
  double tau = 0.01;        // time step

  bool operator==(const ModelParams&) const = default;

  void validate() const {
    if (!(k0 > 0.0)) throw InvalidArgument("k0 must be positive");
    if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
    if (!(r > 1.0 && r < 2.0)) throw InvalidArgument("r must lie in (1, 2)");
    if (!(delta > 0.0)) throw InvalidArgument("delta must be positive");
    if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
    if (!(T > 0.0)) throw InvalidArgument("T must be positive");
  }

  int num_steps() const { return std::max(1, static_cast<int>(std::llround(T / tau))); }
};

// ---------------------------------------------------------------------------
// Support surface w0

struct FlatSupport {
  bool operator==(const FlatSupport&) const = default;
};

// max(height - |x - center|, 0): a unit-slope cone.
struct ConeSupport {
  Vec2 center{};
  double height = 0.4;

  bool operator==(const ConeSupport&) const = default;
};

// Inverted pyramid over the mesh bounding box, flattened to zero on a margin
// of the given width along the boundary.
struct PyramidSupport {
  double margin = 0.1;

  bool operator==(const PyramidSupport&) const = default;
};

struct ExpressionSupport {
  std::string expr;

  bool operator==(const ExpressionSupport&) const = default;
};

using SupportSpec = std::variant<FlatSupport, ConeSupport, PyramidSupport, ExpressionSupport>;

/// Discrete support: P1 interpolant, its cell means and the cellwise slope bound
/// max(k0, |grad w0^h|).
struct SupportData {
  NodalField w0_nodal;
  CellField w0h_cell;
  CellField k1h_cell;
  std::vector<std::string> warnings;
};

inline ScalarFunction support_function(const SupportSpec& spec, const TriMesh& mesh) {
  return std::visit(
      [&](const auto& s) -> ScalarFunction {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, FlatSupport>) {
          return [](const Vec2&) { return 0.0; };
        } else if constexpr (std::is_same_v<S, ConeSupport>) {
          return [s](const Vec2& x) { return std::max(s.height - norm(x - s.center), 0.0); };
        } else if constexpr (std::is_same_v<S, PyramidSupport>) {
          const auto bb = mesh.bounding_box();
          const Vec2 c{0.5 * (bb[0] + bb[1]), 0.5 * (bb[2] + bb[3])};
          const double ax = 0.5 * (bb[1] - bb[0]) - s.margin, ay = 0.5 * (bb[3] - bb[2]) - s.margin;
          if (!(s.margin > 0.0) || !(ax > 0.0) || !(ay > 0.0))
            throw InvalidArgument("pyramid margin must be positive and smaller than the half-widths");
          return [c, ax, ay](const Vec2& x) {
            return std::min(std::max(std::abs(x.x - c.x) - ax, std::abs(x.y - c.y) - ay), 0.0);
          };
        } else {
          auto e = std::make_shared<Expression>(s.expr);
          return [e](const Vec2& x) { return (*e)(x); };
        }
      },
      spec);
}

inline SupportData build_support(const SupportSpec& spec, const TriMesh& mesh, double k0) {
  if (!(k0 > 0.0)) throw InvalidArgument("k0 must be positive");
  SupportData sd;
  sd.w0_nodal = p1_interpolate(support_function(spec, mesh), mesh);
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (mesh.is_boundary_vertex(v) && std::abs(sd.w0_nodal[v]) > 1e-12)
      throw ValidationError("support must vanish on the boundary; w0 = " + std::to_string(sd.w0_nodal[v]) +
                            " at boundary vertex " + std::to_string(v));
  }
  sd.w0h_cell = p0_project(sd.w0_nodal);
  sd.k1h_cell = CellField(mesh);
  for (int t = 0; t < mesh.num_triangles(); ++t)
    sd.k1h_cell[t] = std::max(k0, norm(p1_gradient_on(sd.w0_nodal, t)));
  if (std::holds_alternative<ExpressionSupport>(spec))
    sd.warnings.push_back("no-influx condition grad w0 . nu < k0 on the boundary is not checked for expression supports");
  return sd;
}

// ---------------------------------------------------------------------------
// Slope bound operator

/// k0 + ((k1 - k0)/eps) * clamp(w0 + eps - eta, 0, eps): equals k1 on or below
/// the support, k0 once the sand layer is at least eps thick, linear between.
inline double m_eps_point(double eta, double w0eps, double k1, double k0, double eps) {
  const double s = std::clamp((w0eps + eps - eta) / eps, 0.0, 1.0);
  return std::min(k0 + (k1 - k0) * s, k1);
}

inline CellField m_eps_h(const CellField& etah, const SupportData& support, const ModelParams& params) {
  detail::require_same_mesh(etah, support.w0h_cell, "m_eps_h");
  CellField out(*etah.mesh);
  for (int t = 0; t < etah.mesh->num_triangles(); ++t)
    out[t] = m_eps_point(etah[t], support.w0h_cell[t], support.k1h_cell[t], params.k0, params.eps);
  return out;
}

// ---------------------------------------------------------------------------
// Sources (constant in time, so the time average over a step is the source itself)

struct UniformDiskSource {
  Vec2 center{};
  double radius = 0.2;
  double total_rate = 1.0;

  bool operator==(const UniformDiskSource&) const = default;
};

struct ConstantSource {
  double rate = 0.25;

  bool operator==(const ConstantSource&) const = default;
};

using SourceSpec = std::variant<UniformDiskSource, ConstantSource>;

namespace detail {

inline void validate_source(const SourceSpec& spec) {
  std::visit(
      [](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, UniformDiskSource>) {
          if (!(s.radius > 0.0)) throw InvalidArgument("source radius must be positive");
          if (!(s.total_rate >= 0.0)) throw InvalidArgument("source rate must be non-negative");
        } else {
          if (!(s.rate >= 0.0)) throw InvalidArgument("source rate must be non-negative");
        }
      },
      spec);
}

inline bool in_disk(const Vec2& x, const UniformDiskSource& s) {
  return norm(x - s.center) <= s.radius * (1.0 + 1e-9);
}

}  // namespace detail

// Disk sources: the density is switched on in cells whose centroid lies in the
// disk and then rescaled so that the discrete total equals the prescribed rate.
inline CellField source_field_cells(const SourceSpec& spec, const TriMesh& mesh) {
  detail::validate_source(spec);
  CellField f(mesh);
  if (const auto* c = std::get_if<ConstantSource>(&spec)) {
    std::fill(f.values.begin(), f.values.end(), c->rate);
    return f;
  }
  const auto& d = std::get<UniformDiskSource>(spec);
  for (int t = 0; t < mesh.num_triangles(); ++t)
    if (detail::in_disk(mesh.centroid(t), d)) f[t] = 1.0;
  const double mass = integral(f);
  if (mass == 0.0) throw ValidationError("source disk contains no cell centroid of the mesh");
  for (double& v : f.values) v *= d.total_rate / mass;
  return f;
}

inline NodalField source_field_nodes(const SourceSpec& spec, const TriMesh& mesh) {
  detail::validate_source(spec);
  NodalField f(mesh);
  if (const auto* c = std::get_if<ConstantSource>(&spec)) {
    std::fill(f.values.begin(), f.values.end(), c->rate);
    return f;
  }
  const auto& d = std::get<UniformDiskSource>(spec);
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (detail::in_disk(mesh.vertex(v), d)) f[v] = 1.0;
  const double mass = integral(f);
  if (mass == 0.0) throw ValidationError("source disk contains no mesh vertex");
  for (double& v : f.values) v *= d.total_rate / mass;
  return f;
}

}  // namespace sandpile

#endif  // SANDPILE_MATERIAL_HPP
