#ifndef SANDPILE_FEM_HPP
#define SANDPILE_FEM_HPP

// Finite element spaces on a TriMesh:
//   NodalField       continuous piecewise linears (P1), U^h
//   CellField        piecewise constants (P0), S^h
//   CellVectorField  piecewise constant 2-vectors
//   EdgeFluxField    lowest order Raviart-Thomas (RT0), one normal flux per edge
// plus the interpolation/projection operators between them, the vertex
// quadrature (.,.)^h and the two system matrices used by the solvers.

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "sandpile/errors.hpp"
#include "sandpile/geometry.hpp"
#include "sandpile/linalg.hpp"
#include "sandpile/mesh.hpp"

namespace sandpile {

using ScalarFunction = std::function<double(const Vec2&)>;
using VectorFunction = std::function<Vec2(const Vec2&)>;

struct NodalField {
  const TriMesh* mesh = nullptr;
  std::vector<double> values;

  NodalField() = default;
  explicit NodalField(const TriMesh& m, double fill = 0.0) : mesh(&m), values(m.num_vertices(), fill) {}
  double& operator[](int v) { return values[v]; }
  double operator[](int v) const { return values[v]; }
};

struct CellField {
  const TriMesh* mesh = nullptr;
  std::vector<double> values;

  CellField() = default;
  explicit CellField(const TriMesh& m, double fill = 0.0) : mesh(&m), values(m.num_triangles(), fill) {}
  double& operator[](int t) { return values[t]; }
  double operator[](int t) const { return values[t]; }
};

struct CellVectorField {
  const TriMesh* mesh = nullptr;
  std::vector<Vec2> values;

  CellVectorField() = default;
  explicit CellVectorField(const TriMesh& m, Vec2 fill = {}) : mesh(&m), values(m.num_triangles(), fill) {}
  Vec2& operator[](int t) { return values[t]; }
  const Vec2& operator[](int t) const { return values[t]; }
};

struct EdgeFluxField {
  const EdgeTopology* topo = nullptr;
  std::vector<double> coeffs;

  EdgeFluxField() = default;
  explicit EdgeFluxField(const EdgeTopology& t, double fill = 0.0) : topo(&t), coeffs(t.num_edges(), fill) {}
  double& operator[](int e) { return coeffs[e]; }
  double operator[](int e) const { return coeffs[e]; }
};

// Positive weight per (triangle, local vertex) for the RT0 vertex quadrature.
using VertexWeights = std::vector<std::array<double, 3>>;

namespace detail {

template <class A, class B>
void require_same_mesh(const A& a, const B& b, const char* op) {
  if (a.mesh == nullptr || a.mesh != b.mesh) throw InvalidArgument(std::string(op) + ": mesh mismatch");
}

inline void require_weights(const TriMesh& mesh, const VertexWeights& w, const char* op) {
  if (static_cast<int>(w.size()) != mesh.num_triangles())
    throw InvalidArgument(std::string(op) + ": one weight triple per triangle expected");
  for (std::size_t t = 0; t < w.size(); ++t)
    for (double x : w[t])
      if (!(x > 0.0) || !std::isfinite(x))
        throw InvalidArgument(std::string(op) + ": non-positive weight on triangle " + std::to_string(t));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// P1 / P0 operators

inline NodalField p1_interpolate(const ScalarFunction& f, const TriMesh& mesh) {
  NodalField out(mesh);
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const double val = f(mesh.vertex(v));
    if (!std::isfinite(val))
      throw EvaluationError("non-finite value at vertex " + std::to_string(v) + " (" +
                            std::to_string(mesh.vertex(v).x) + ", " + std::to_string(mesh.vertex(v).y) + ")");
    out[v] = val;
  }
  return out;
}

// Cell mean of a P1 field: exact integral over the cell divided by its area.
inline CellField p0_project(const NodalField& w) {
  const TriMesh& mesh = *w.mesh;
  CellField out(mesh);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tr = mesh.triangle(t);
    out[t] = (w[tr[0]] + w[tr[1]] + w[tr[2]]) / 3.0;
  }
  return out;
}

// Cell mean of a general function by the edge-midpoint rule (exact for quadratics).
inline CellField p0_project(const ScalarFunction& f, const TriMesh& mesh) {
  CellField out(mesh);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tr = mesh.triangle(t);
    const Vec2 &a = mesh.vertex(tr[0]), &b = mesh.vertex(tr[1]), &c = mesh.vertex(tr[2]);
    out[t] = (f(0.5 * (a + b)) + f(0.5 * (b + c)) + f(0.5 * (c + a))) / 3.0;
  }
  return out;
}

inline Vec2 p1_gradient_on(const NodalField& w, int t) {
  const auto& tr = w.mesh->triangle(t);
  const auto& g = w.mesh->basis_gradients(t);
  return w[tr[0]] * g[0] + w[tr[1]] * g[1] + w[tr[2]] * g[2];
}

inline CellVectorField p1_gradient(const NodalField& w) {
  CellVectorField out(*w.mesh);
  for (int t = 0; t < w.mesh->num_triangles(); ++t) out[t] = p1_gradient_on(w, t);
  return out;
}

// (a, b)^h: each triangle contributes |T|/3 times the sum of vertex products.
inline double lumped_inner(const NodalField& a, const NodalField& b) {
  detail::require_same_mesh(a, b, "lumped_inner");
  const TriMesh& mesh = *a.mesh;
  double s = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tr = mesh.triangle(t);
    s += mesh.area(t) / 3.0 * (a[tr[0]] * b[tr[0]] + a[tr[1]] * b[tr[1]] + a[tr[2]] * b[tr[2]]);
  }
  return s;
}

// Diagonal of the lumped mass matrix: one third of each vertex's patch area.
inline std::vector<double> lumped_mass(const TriMesh& mesh) {
  std::vector<double> m(mesh.num_vertices(), 0.0);
  for (int t = 0; t < mesh.num_triangles(); ++t)
    for (int v : mesh.triangle(t)) m[v] += mesh.area(t) / 3.0;
  return m;
}

// Exact P1 x P1 L2 products (f, phi_v) of a nodal field against every hat function.
inline std::vector<double> consistent_mass_times(const NodalField& f) {
  const TriMesh& mesh = *f.mesh;
  std::vector<double> out(mesh.num_vertices(), 0.0);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tr = mesh.triangle(t);
    const double sum = f[tr[0]] + f[tr[1]] + f[tr[2]];
    for (int i = 0; i < 3; ++i) out[tr[i]] += mesh.area(t) / 12.0 * (sum + f[tr[i]]);
  }
  return out;
}

// Exact integral of a P1 field.
inline double integral(const NodalField& w) {
  const TriMesh& mesh = *w.mesh;
  double s = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tr = mesh.triangle(t);
    s += mesh.area(t) * (w[tr[0]] + w[tr[1]] + w[tr[2]]) / 3.0;
  }
  return s;
}

inline double integral(const CellField& w) {
  double s = 0.0;
  for (int t = 0; t < w.mesh->num_triangles(); ++t) s += w.mesh->area(t) * w[t];
  return s;
}

// ---------------------------------------------------------------------------
// RT0
//
// On triangle T with vertices P_0, P_1, P_2 the local basis function of the
// edge opposite P_i is psi_i(x) = s_i |e_i| / (2|T|) (x - P_i), where s_i is the
// orientation sign. psi_i has unit normal flux density across e_i and zero
// normal component on the other two edges.

struct Rt0Local {
  std::array<double, 3> scale;  // s_i |e_i| / (2|T|)
  std::array<int, 3> edge;
  std::array<Vec2, 3> p;        // triangle vertices
};

inline Rt0Local rt0_local(const EdgeTopology& topo, int t) {
  const TriMesh& mesh = *topo.mesh;
  const auto& tr = mesh.triangle(t);
  Rt0Local loc;
  for (int i = 0; i < 3; ++i) {
    const auto le = topo.edge_of_triangle[t][i];
    loc.edge[i] = le.edge;
    loc.scale[i] = le.sign * topo.edge_lengths[le.edge] / (2.0 * mesh.area(t));
    loc.p[i] = mesh.vertex(tr[i]);
  }
  return loc;
}

// Values of every local basis function at every local vertex: phi[i][j] = psi_i(P_j).
inline std::array<std::array<Vec2, 3>, 3> rt0_basis_at_vertices(const Rt0Local& loc) {
  std::array<std::array<Vec2, 3>, 3> phi{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) phi[i][j] = loc.scale[i] * (loc.p[j] - loc.p[i]);
  return phi;
}

inline EdgeFluxField rt0_interpolate(const VectorFunction& v, const EdgeTopology& topo) {
  EdgeFluxField q(topo);
  const TriMesh& mesh = *topo.mesh;
  const double g = 0.5 / std::sqrt(3.0);
  for (int e = 0; e < topo.num_edges(); ++e) {
    const Vec2 a = mesh.vertex(topo.edges[e][0]), b = mesh.vertex(topo.edges[e][1]);
    const Vec2 x1 = a + (0.5 - g) * (b - a), x2 = a + (0.5 + g) * (b - a);
    q[e] = 0.5 * (dot(v(x1), topo.normals[e]) + dot(v(x2), topo.normals[e]));
  }
  return q;
}

inline Vec2 rt0_evaluate(const EdgeFluxField& q, int t, const Vec2& x) {
  const EdgeTopology& topo = *q.topo;
  if (t < 0 || t >= topo.mesh->num_triangles())
    throw InvalidArgument("rt0_evaluate: triangle index " + std::to_string(t) + " out of range");
  const Rt0Local loc = rt0_local(topo, t);
  Vec2 out{};
  for (int i = 0; i < 3; ++i) out += (q[loc.edge[i]] * loc.scale[i]) * (x - loc.p[i]);
  return out;
}

// The three vertex values of q restricted to triangle t (local representation).
inline std::array<Vec2, 3> rt0_vertex_values(const EdgeFluxField& q, int t) {
  const Rt0Local loc = rt0_local(*q.topo, t);
  std::array<Vec2, 3> out{};
  for (int i = 0; i < 3; ++i) {
    const double c = q[loc.edge[i]] * loc.scale[i];
    for (int j = 0; j < 3; ++j)
      if (j != i) out[j] += c * (loc.p[j] - loc.p[i]);
  }
  return out;
}

inline CellVectorField rt0_cell_centers(const EdgeFluxField& q) {
  const TriMesh& mesh = *q.topo->mesh;
  CellVectorField out(mesh);
  for (int t = 0; t < mesh.num_triangles(); ++t) out[t] = rt0_evaluate(q, t, mesh.centroid(t));
  return out;
}

inline CellField rt0_divergence(const EdgeFluxField& q) {
  const EdgeTopology& topo = *q.topo;
  const TriMesh& mesh = *topo.mesh;
  CellField div(mesh);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    double s = 0.0;
    for (const auto& le : topo.edge_of_triangle[t]) s += q[le.edge] * le.sign * topo.edge_lengths[le.edge];
    div[t] = s / mesh.area(t);
  }
  return div;
}

// sum_T |T|/3 sum_j w(T,j) q1(P_j) . q2(P_j), vertex values taken per triangle.
inline double rt0_lumped_form(const VertexWeights& weights, const EdgeFluxField& q1, const EdgeFluxField& q2) {
  if (q1.topo == nullptr || q1.topo != q2.topo) throw InvalidArgument("rt0_lumped_form: topology mismatch");
  const TriMesh& mesh = *q1.topo->mesh;
  detail::require_weights(mesh, weights, "rt0_lumped_form");
  double s = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto v1 = rt0_vertex_values(q1, t);
    const auto v2 = rt0_vertex_values(q2, t);
    double local = 0.0;
    for (int j = 0; j < 3; ++j) local += weights[t][j] * dot(v1[j], v2[j]);
    s += mesh.area(t) / 3.0 * local;
  }
  return s;
}

// ---------------------------------------------------------------------------
// System matrices

/// (1/tau)(.,.)^h + rho (grad ., grad .) on U^h_0, indexed by TriMesh::interior_index.
inline SparseSPD assemble_qa_matrix(const TriMesh& mesh, double tau, double rho) {
  if (!(tau > 0.0) || !(rho >= 0.0)) throw InvalidArgument("assemble_qa_matrix: need tau > 0, rho >= 0");
  const int n = mesh.num_interior_vertices();
  if (n == 0) throw ValidationError("assemble_qa_matrix: mesh has no interior vertices");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(12 * mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tr = mesh.triangle(t);
    const auto& g = mesh.basis_gradients(t);
    const double area = mesh.area(t);
    for (int i = 0; i < 3; ++i) {
      const int di = mesh.interior_index(tr[i]);
      if (di < 0) continue;
      trip.emplace_back(di, di, area / (3.0 * tau));
      for (int j = 0; j < 3; ++j) {
        const int dj = mesh.interior_index(tr[j]);
        if (dj < 0) continue;
        trip.emplace_back(di, dj, rho * area * dot(g[i], g[j]));
      }
    }
  }
  SparseSPD a;
  a.matrix.resize(n, n);
  a.matrix.setFromTriplets(trip.begin(), trip.end());
  return a;
}

/// Edge-indexed matrix of (w q, v)^h + tau (div q, div v).
inline SparseSPD assemble_qb_matrix(const EdgeTopology& topo, const VertexWeights& weights, double tau) {
  const TriMesh& mesh = *topo.mesh;
  detail::require_weights(mesh, weights, "assemble_qb_matrix");
  if (!(tau >= 0.0)) throw InvalidArgument("assemble_qb_matrix: tau must be non-negative");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Rt0Local loc = rt0_local(topo, t);
    const auto phi = rt0_basis_at_vertices(loc);
    const double area = mesh.area(t);
    for (int a = 0; a < 3; ++a) {
      const double div_a = 2.0 * loc.scale[a];
      for (int b = 0; b < 3; ++b) {
        const double div_b = 2.0 * loc.scale[b];
        double m = 0.0;
        for (int j = 0; j < 3; ++j) m += weights[t][j] * dot(phi[a][j], phi[b][j]);
        trip.emplace_back(loc.edge[a], loc.edge[b], area / 3.0 * m + tau * area * div_a * div_b);
      }
    }
  }
  SparseSPD a;
  a.matrix.resize(topo.num_edges(), topo.num_edges());
  a.matrix.setFromTriplets(trip.begin(), trip.end());
  return a;
}

}  // namespace sandpile

#endif  // SANDPILE_FEM_HPP
