#ifndef SANDPILE_SOLVER_B_HPP
#define SANDPILE_SOLVER_B_HPP

// P0 surface / RT0 flux scheme with the r-regularized constitutive law.
// Eliminating W through the balance law leaves a nonlinear problem in the
// flux alone,
//   (M(g - tau div Q) |Q|^{r-2} Q, v)^h + tau (div Q, div v) = (g, div v),
// which is solved by lagging the coefficient (with |Q| smoothed by delta) and
// solving one SPD edge system per iteration.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sandpile/errors.hpp"
#include "sandpile/fem.hpp"
#include "sandpile/linalg.hpp"
#include "sandpile/material.hpp"

namespace sandpile {

struct StoppingParamsB {
  double tol = 3e-4;
  int max_iters = 500;

  bool operator==(const StoppingParamsB&) const = default;

  void validate() const {
    if (!(tol > 0.0) || max_iters < 1) throw InvalidArgument("solver B stopping parameters must be positive");
  }
};

struct SolverStateB {
  EdgeFluxField Q;
  CellField g;
  CellField W_prev_time;
  CellField W;
  int iter_count = 0;
  double last_change = 0.0;
};

// g = W_prev + tau f, the surface that would result without any transport.
inline CellField qb_gn(const CellField& w_prev, const CellField& f_cells, double tau) {
  detail::require_same_mesh(w_prev, f_cells, "qb_gn");
  CellField g(*w_prev.mesh);
  for (std::size_t t = 0; t < g.values.size(); ++t) g.values[t] = w_prev.values[t] + tau * f_cells.values[t];
  return g;
}

inline CellField qb_recover_w(const CellField& g, double tau, const EdgeFluxField& q) {
  const CellField div = rt0_divergence(q);
  CellField w(*g.mesh);
  for (std::size_t t = 0; t < w.values.size(); ++t) w.values[t] = g.values[t] - tau * div.values[t];
  return w;
}

namespace detail {

// M_eps^h evaluated on the lagged surface g - tau div Q.
inline CellField qb_lagged_bound(const CellField& g, const EdgeFluxField& q, const SupportData& support,
                                 const ModelParams& params) {
  return m_eps_h(qb_recover_w(g, params.tau, q), support, params);
}

}  // namespace detail

/// Per (cell, vertex): M * (|Q(x_j)|^2 + delta^2)^{(r-2)/2}.
inline VertexWeights qb_weights(const CellField& g, const EdgeFluxField& q, const SupportData& support,
                                const ModelParams& params) {
  const TriMesh& mesh = *g.mesh;
  const CellField m = detail::qb_lagged_bound(g, q, support, params);
  VertexWeights w(mesh.num_triangles());
  const double expo = 0.5 * (params.r - 2.0);
  const double d2 = params.delta * params.delta;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto qv = rt0_vertex_values(q, t);
    for (int j = 0; j < 3; ++j) w[t][j] = m[t] * std::pow(dot(qv[j], qv[j]) + d2, expo);
  }
  return w;
}

/// Linear solver for the edge systems. The Cholesky variant keeps the symbolic
/// factorization across iterations since the sparsity pattern never changes.
class QbLinearSolver {
public:
  explicit QbLinearSolver(SolveOptions opts = {}) : opts_(opts) { opts_.validate(); }

  Vector solve(const SparseSPD& a, const Vector& b, const Vector& guess) {
    if (opts_.method == SolveMethod::direct_cholesky) {
      factor_.refactor(a);
      return factor_.solve(b);
    }
    return conjugate_gradient(a, b, opts_.cg_rel_tol, opts_.cg_max_iter, guess).x;
  }

private:
  SolveOptions opts_;
  CholeskyFactor factor_;
};

/// One lagged iteration: returns Q^m from Q^{m-1} = state.Q.
inline EdgeFluxField qb_iterate(const SolverStateB& state, const SupportData& support, const ModelParams& params,
                                const EdgeTopology& topo, QbLinearSolver& solver) {
  const TriMesh& mesh = *topo.mesh;
  if (state.Q.topo != &topo || state.g.mesh != &mesh) throw InvalidArgument("qb_iterate: topology mismatch");
  const CellField m = detail::qb_lagged_bound(state.g, state.Q, support, params);
  VertexWeights w(mesh.num_triangles());
  Vector rhs = Vector::Zero(topo.num_edges());
  const double expo_delta = 0.5 * (params.r - 2.0);
  const double d2 = params.delta * params.delta;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Rt0Local loc = rt0_local(topo, t);
    const auto phi = rt0_basis_at_vertices(loc);
    std::array<Vec2, 3> qv{};
    for (int i = 0; i < 3; ++i) {
      const double c = state.Q[loc.edge[i]];
      for (int j = 0; j < 3; ++j) qv[j] += c * phi[i][j];
    }
    const double area = mesh.area(t);
    for (int j = 0; j < 3; ++j) {
      const double q2 = dot(qv[j], qv[j]);
      const double smooth = std::pow(q2 + d2, expo_delta);
      // |Q|^{r-2} Q vanishes at Q = 0 (its magnitude is |Q|^{r-1}).
      const double exact = q2 > 0.0 ? std::pow(q2, expo_delta) : smooth;
      w[t][j] = m[t] * smooth;
      const Vec2 lag = (m[t] * (smooth - exact)) * qv[j];
      for (int a = 0; a < 3; ++a) rhs[loc.edge[a]] += area / 3.0 * dot(lag, phi[a][j]);
    }
    for (int a = 0; a < 3; ++a) rhs[loc.edge[a]] += state.g[t] * 2.0 * loc.scale[a] * area;
  }
  const SparseSPD a = assemble_qb_matrix(topo, w, params.tau);
  const Vector guess = Eigen::Map<const Vector>(state.Q.coeffs.data(), topo.num_edges());
  const Vector x = solver.solve(a, rhs, guess);
  EdgeFluxField out(topo);
  for (int e = 0; e < topo.num_edges(); ++e) out[e] = x[e];
  return out;
}

inline double qb_relative_change(const EdgeFluxField& q_prev, const EdgeFluxField& q_curr) {
  const EdgeTopology& topo = *q_curr.topo;
  double num = 0.0, den = 0.0;
  for (int e = 0; e < topo.num_edges(); ++e) {
    num += topo.edge_lengths[e] * std::abs(q_curr[e] - q_prev[e]);
    den += topo.edge_lengths[e] * std::abs(q_curr[e]);
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

/// Edge-length weighted relative L1 change below tol; 0/0 counts as converged.
inline bool qb_converged(const EdgeFluxField& q_prev, const EdgeFluxField& q_curr, double tol) {
  if (q_prev.topo != q_curr.topo) throw InvalidArgument("qb_converged: topology mismatch");
  return qb_relative_change(q_prev, q_curr) < tol;
}

inline double max_abs_flux(const EdgeFluxField& q) {
  double out = 0.0;
  for (double c : q.coeffs) out = std::max(out, std::abs(c));
  return out;
}

// Below about delta the regularized law is in its linear regime and the
// lagged iteration wanders at that scale without settling. A flux that stays
// under the floor for a run of iterates counts as converged (no transport).
// The run has to be long enough to let a flux that is starting to grow
// geometrically from the delta scale leave the floor first.
inline constexpr double kFluxFloorInDeltas = 100.0;
inline constexpr int kQuietIterations = 50;

/// One time step from W^{n-1} (state.W) with warm start Q^{n,0} = state.Q.
inline SolverStateB qb_time_step(const SolverStateB& state, const CellField& f_cells, const ModelParams& params,
                                 const StoppingParamsB& stopping, const SupportData& support,
                                 const EdgeTopology& topo, QbLinearSolver& solver) {
  stopping.validate();
  SolverStateB curr = state;
  curr.W_prev_time = state.W;
  curr.g = qb_gn(state.W, f_cells, params.tau);
  curr.iter_count = 0;
  const double floor = kFluxFloorInDeltas * params.delta;
  int quiet = 0;
  for (int m = 1; m <= stopping.max_iters; ++m) {
    EdgeFluxField next = qb_iterate(curr, support, params, topo, solver);
    curr.last_change = qb_relative_change(curr.Q, next);
    quiet = max_abs_flux(next) <= floor ? quiet + 1 : 0;
    const bool done = curr.last_change < stopping.tol || quiet >= kQuietIterations;
    curr.Q = std::move(next);
    curr.iter_count = m;
    if (done) {
      curr.W = qb_recover_w(curr.g, params.tau, curr.Q);
      return curr;
    }
  }
  throw ConvergenceError("flux iteration did not converge in " + std::to_string(stopping.max_iters) +
                             " iterations (last relative change " + std::to_string(curr.last_change) +
                             "); reducing the time step usually restores convergence",
                         curr.last_change);
}

// ---------------------------------------------------------------------------
// Monitors

// max over cells of |(W - W_prev)/tau + div Q - f|.
inline double qb_balance_residual(const SolverStateB& s, const CellField& f_cells, double tau) {
  const CellField div = rt0_divergence(s.Q);
  double worst = 0.0;
  for (std::size_t t = 0; t < div.values.size(); ++t)
    worst = std::max(worst, std::abs((s.W.values[t] - s.W_prev_time.values[t]) / tau + div.values[t] -
                                     f_cells.values[t]));
  return worst;
}

// ---------------------------------------------------------------------------
// Time loop

struct QbStepRecord {
  int step = 0;
  double t = 0.0;
  int iterations = 0;
  double balance_residual = 0.0;
  double max_abs_w = 0.0;
  double volume = 0.0;
};

struct QbSnapshot {
  double t;
  CellField W;
  EdgeFluxField Q;
};

struct QbRun {
  std::vector<QbStepRecord> steps;
  std::vector<QbSnapshot> snapshots;
  SolverStateB final_state;
};

struct QbProblem {
  const EdgeTopology* topo = nullptr;
  const SupportData* support = nullptr;
  CellField source;
  ModelParams params;
  StoppingParamsB stopping;
  SolveOptions linear{};
  std::vector<double> snapshot_times;
};

using QbStepCallback = std::function<void(const SolverStateB&, const QbStepRecord&)>;

inline QbRun run_qb(const QbProblem& prob, const QbStepCallback& on_step = {}) {
  prob.params.validate();
  if (prob.topo == nullptr || prob.support == nullptr) throw InvalidArgument("run_qb: incomplete problem");
  const EdgeTopology& topo = *prob.topo;
  QbLinearSolver solver(prob.linear);
  SolverStateB state;
  state.W = prob.support->w0h_cell;
  state.W_prev_time = state.W;
  state.g = state.W;
  state.Q = EdgeFluxField(topo);
  const double w0_volume = integral(prob.support->w0h_cell);
  double w_bound = 0.0;
  for (double v : prob.support->w0h_cell.values) w_bound = std::max(w_bound, std::abs(v));
  double fmax = 0.0;
  for (double v : prob.source.values) fmax = std::max(fmax, v);
  const int n_steps = prob.params.num_steps();
  QbRun run;
  for (int n = 1; n <= n_steps; ++n) {
    const double t = n * prob.params.tau;
    try {
      state = qb_time_step(state, prob.source, prob.params, prob.stopping, *prob.support, topo, solver);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("time step " + std::to_string(n) + " (t = " + std::to_string(t) + "): " + e.what(),
                             e.residual());
    }
    QbStepRecord rec;
    rec.step = n;
    rec.t = t;
    rec.iterations = state.iter_count;
    rec.balance_residual = qb_balance_residual(state, prob.source, prob.params.tau);
    for (double v : state.W.values) {
      if (!std::isfinite(v)) throw NumericalError("non-finite surface value at step " + std::to_string(n));
      rec.max_abs_w = std::max(rec.max_abs_w, std::abs(v));
    }
    // Heuristic blow-up monitor: nothing can pile higher than support + all the sand.
    if (rec.max_abs_w > w_bound + t * fmax * topo.mesh->total_area() + 1.0)
      throw NumericalError("surface exploded at step " + std::to_string(n));
    rec.volume = integral(state.W) - w0_volume;
    run.steps.push_back(rec);
    if (on_step) on_step(state, rec);
    bool snap = n == n_steps;
    for (double ts : prob.snapshot_times) snap = snap || std::abs(ts - t) <= 1e-9 * std::max(1.0, t);
    if (snap) run.snapshots.push_back({t, state.W, state.Q});
  }
  run.final_state = std::move(state);
  return run;
}

}  // namespace sandpile

#endif  // SANDPILE_SOLVER_B_HPP
