#ifndef SANDPILE_SOLVER_A_HPP
#define SANDPILE_SOLVER_A_HPP

// P1 surface / P0 flux scheme, solved per time step by augmented Lagrangian
// splitting: linear solve for W, cellwise projection of the auxiliary gradient
// onto the ball of radius M(W), multiplier (flux) update. The slope bound is
// recomputed from the current W after every linear solve.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sandpile/errors.hpp"
#include "sandpile/fem.hpp"
#include "sandpile/linalg.hpp"
#include "sandpile/material.hpp"

namespace sandpile {

struct StoppingParamsA {
  double tol_w = 1e-6;
  double tol_phi = 5e-4;
  int max_iters = 5000;

  bool operator==(const StoppingParamsA&) const = default;

  void validate() const {
    if (!(tol_w > 0.0) || !(tol_phi > 0.0) || max_iters < 1)
      throw InvalidArgument("solver A stopping parameters must be positive");
  }
};

struct SolverStateA {
  NodalField W;            // current iterate W^{n,m}
  CellVectorField Phi;     // auxiliary gradient phi^{n,m}
  CellVectorField Q;       // flux / multiplier Q^{n,m}
  NodalField W_prev_time;  // W^{n-1}
  CellField Mh;            // slope bound used by the last projection
  double rho = 1.0;
  int iter_count = 0;
  double last_rel_dw = 0.0;
  double last_rel_dphi = 0.0;
};

inline SolverStateA make_initial_state_a(const NodalField& w0, double rho) {
  SolverStateA s;
  s.W = w0;
  s.W_prev_time = w0;
  s.Phi = CellVectorField(*w0.mesh);
  s.Q = CellVectorField(*w0.mesh);
  s.Mh = CellField(*w0.mesh);
  s.rho = rho;
  return s;
}

/// System matrix of the W-substep, factorized once for fixed (tau, rho).
class QaSystem {
public:
  QaSystem(const TriMesh& mesh, double tau, double rho)
      : mesh_(&mesh), tau_(tau), rho_(rho), matrix_(assemble_qa_matrix(mesh, tau, rho)),
        factor_(matrix_), mass_(sandpile::lumped_mass(mesh)) {}

  const TriMesh& mesh() const { return *mesh_; }
  double tau() const { return tau_; }
  double rho() const { return rho_; }
  const SparseSPD& matrix() const { return matrix_; }
  const std::vector<double>& lumped_mass() const { return mass_; }
  Vector solve(const Vector& b) const { return factor_.solve(b); }

private:
  const TriMesh* mesh_;
  double tau_, rho_;
  SparseSPD matrix_;
  CholeskyFactor factor_;
  std::vector<double> mass_;
};

/// W-substep: (1/tau)(W, eta)^h + rho (grad W, grad eta)
///   = (1/tau)(W_prev, eta)^h + rho (phi, grad eta) + (Q, grad eta) + (f, eta).
inline NodalField qa_linear_substep(const SolverStateA& state, const NodalField& f_n, const QaSystem& sys) {
  const TriMesh& mesh = sys.mesh();
  if (state.W.mesh != &mesh || f_n.mesh != &mesh) throw InvalidArgument("qa_linear_substep: mesh mismatch");
  const double tau = sys.tau(), rho = sys.rho();
  const auto& mass = sys.lumped_mass();
  std::vector<double> rhs_full = consistent_mass_times(f_n);
  for (int v = 0; v < mesh.num_vertices(); ++v) rhs_full[v] += mass[v] / tau * state.W_prev_time[v];
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tr = mesh.triangle(t);
    const auto& g = mesh.basis_gradients(t);
    const Vec2 load = mesh.area(t) * (rho * state.Phi[t] + state.Q[t]);
    for (int i = 0; i < 3; ++i) rhs_full[tr[i]] += dot(load, g[i]);
  }
  Vector rhs(mesh.num_interior_vertices());
  for (int k = 0; k < rhs.size(); ++k) rhs[k] = rhs_full[mesh.interior_vertices()[k]];
  const Vector x = sys.solve(rhs);
  NodalField w(mesh);
  for (int k = 0; k < x.size(); ++k) w[mesh.interior_vertices()[k]] = x[k];
  return w;
}

// Projection of phi_hat = grad W - Q_prev/rho onto the ball of radius Mh, per cell.
inline CellVectorField qa_projection_substep(const NodalField& w, const CellVectorField& q_prev,
                                             const CellField& mh, double rho) {
  const TriMesh& mesh = *w.mesh;
  CellVectorField phi(mesh);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Vec2 hat = (rho * p1_gradient_on(w, t) - q_prev[t]) / rho;
    const double len = norm(hat);
    phi[t] = (len <= mh[t]) ? hat : hat * (mh[t] / len);
  }
  return phi;
}

inline CellVectorField qa_multiplier_update(const CellVectorField& q_prev, const NodalField& w,
                                            const CellVectorField& phi, double rho) {
  const TriMesh& mesh = *w.mesh;
  CellVectorField q(mesh);
  for (int t = 0; t < mesh.num_triangles(); ++t) q[t] = q_prev[t] - rho * (p1_gradient_on(w, t) - phi[t]);
  return q;
}

namespace detail {

inline double nodal_l1(const TriMesh& mesh, const std::function<double(int)>& value) {
  double s = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tr = mesh.triangle(t);
    s += mesh.area(t) / 3.0 * (std::abs(value(tr[0])) + std::abs(value(tr[1])) + std::abs(value(tr[2])));
  }
  return s;
}

inline double cell_vector_l1(const TriMesh& mesh, const std::function<Vec2(int)>& value) {
  double s = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) s += mesh.area(t) * norm(value(t));
  return s;
}

// num/den < tol, with 0/0 counting as converged.
inline bool relative_below(double num, double den, double tol) {
  if (den == 0.0) return num == 0.0;
  return num / den < tol;
}

inline double safe_ratio(double num, double den) {
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

}  // namespace detail

struct QaChange {
  double rel_dw;
  double rel_dphi;
};

inline QaChange qa_relative_change(const SolverStateA& prev, const SolverStateA& curr) {
  const TriMesh& mesh = *curr.W.mesh;
  const double dw = detail::nodal_l1(mesh, [&](int v) { return curr.W[v] - prev.W[v]; });
  const double w = detail::nodal_l1(mesh, [&](int v) { return curr.W[v]; });
  const double dphi = detail::cell_vector_l1(mesh, [&](int t) { return curr.Phi[t] - prev.Phi[t]; });
  const double phi = detail::cell_vector_l1(mesh, [&](int t) { return curr.Phi[t]; });
  return {detail::safe_ratio(dw, w), detail::safe_ratio(dphi, phi)};
}

/// Relative L1 changes of W and of phi below their tolerances.
inline bool qa_converged(const SolverStateA& prev, const SolverStateA& curr, const StoppingParamsA& params) {
  const TriMesh& mesh = *curr.W.mesh;
  const double dw = detail::nodal_l1(mesh, [&](int v) { return curr.W[v] - prev.W[v]; });
  const double w = detail::nodal_l1(mesh, [&](int v) { return curr.W[v]; });
  const double dphi = detail::cell_vector_l1(mesh, [&](int t) { return curr.Phi[t] - prev.Phi[t]; });
  const double phi = detail::cell_vector_l1(mesh, [&](int t) { return curr.Phi[t]; });
  return detail::relative_below(dw, w, params.tol_w) && detail::relative_below(dphi, phi, params.tol_phi);
}

// Called after every splitting iteration with the updated state.
using QaObserver = std::function<void(const SolverStateA&)>;

/// One time step. `state` holds W^{n-1} in W and the previous step's phi and Q
/// as warm start; the returned state holds W^n, phi^n, Q^n.
inline SolverStateA qa_time_step(const SolverStateA& state, const NodalField& f_n, const ModelParams& params,
                                 const StoppingParamsA& stopping, const SupportData& support, const QaSystem& sys,
                                 const QaObserver& observer = {}) {
  stopping.validate();
  if (std::abs(sys.rho() - state.rho) > 0.0 || std::abs(sys.tau() - params.tau) > 1e-15 * params.tau)
    throw InvalidArgument("qa_time_step: system assembled with different tau or rho");
  SolverStateA curr = state;
  curr.W_prev_time = state.W;
  curr.iter_count = 0;
  for (int m = 1; m <= stopping.max_iters; ++m) {
    SolverStateA next = curr;
    next.W = qa_linear_substep(curr, f_n, sys);
    next.Mh = m_eps_h(p0_project(next.W), support, params);
    next.Phi = qa_projection_substep(next.W, curr.Q, next.Mh, curr.rho);
    next.Q = qa_multiplier_update(curr.Q, next.W, next.Phi, curr.rho);
    next.iter_count = m;
    const QaChange change = qa_relative_change(curr, next);
    next.last_rel_dw = change.rel_dw;
    next.last_rel_dphi = change.rel_dphi;
    const bool done = qa_converged(curr, next, stopping);
    curr = std::move(next);
    if (observer) observer(curr);
    if (done) return curr;
  }
  throw ConvergenceError("splitting iteration did not converge in " + std::to_string(stopping.max_iters) +
                             " iterations (relative change of W " + std::to_string(curr.last_rel_dw) +
                             ", of phi " + std::to_string(curr.last_rel_dphi) + ")",
                         curr.last_rel_dphi);
}

// ---------------------------------------------------------------------------
// Monitors on a converged step

// Flux magnitudes at or below this are rounding noise from the splitting
// iteration and are treated as no flux by the monitors.
inline constexpr double kNegligibleFlux = 1e-12;

inline double max_flux_norm(const CellVectorField& q) {
  double qmax = 0.0;
  for (const auto& v : q.values) qmax = std::max(qmax, norm(v));
  return qmax;
}

// |(M, |Q|) + (grad W, Q)| / (M, |Q|); zero when there is no flux.
inline double qa_complementarity_residual(const SolverStateA& s) {
  const TriMesh& mesh = *s.W.mesh;
  if (max_flux_norm(s.Q) <= kNegligibleFlux) return 0.0;
  double mq = 0.0, gq = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    mq += mesh.area(t) * s.Mh[t] * norm(s.Q[t]);
    gq += mesh.area(t) * dot(p1_gradient_on(s.W, t), s.Q[t]);
  }
  return mq == 0.0 ? std::abs(gq) : std::abs(mq + gq) / mq;
}

// max over cells of |grad W| - M_eps^h(P^h W); non-positive when the bound holds.
inline double qa_gradient_bound_excess(const SolverStateA& s, const SupportData& support, const ModelParams& params) {
  const CellField m = m_eps_h(p0_project(s.W), support, params);
  double worst = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < s.W.mesh->num_triangles(); ++t)
    worst = std::max(worst, norm(p1_gradient_on(s.W, t)) - m[t]);
  return worst;
}

struct ColinearityReport {
  double max_angle = 0.0;       // radians, between Q and -grad W
  double min_lambda = 0.0;      // -Q.grad W / |grad W|^2
  int cells_checked = 0;
};

// Cells with |Q| above `rel_cutoff * max|Q|` and above kNegligibleFlux only.
inline ColinearityReport qa_colinearity(const SolverStateA& s, double rel_cutoff = 1e-8) {
  const TriMesh& mesh = *s.W.mesh;
  const double cutoff = std::max(rel_cutoff * max_flux_norm(s.Q), kNegligibleFlux);
  ColinearityReport rep;
  rep.min_lambda = std::numeric_limits<double>::infinity();
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double qn = norm(s.Q[t]);
    if (qn <= cutoff) continue;
    const Vec2 g = p1_gradient_on(s.W, t);
    const double gn = norm(g);
    ++rep.cells_checked;
    if (gn == 0.0) {
      rep.max_angle = std::max(rep.max_angle, std::numbers::pi);
      continue;
    }
    const double c = std::clamp(-dot(s.Q[t], g) / (qn * gn), -1.0, 1.0);
    rep.max_angle = std::max(rep.max_angle, std::acos(c));
    rep.min_lambda = std::min(rep.min_lambda, -dot(s.Q[t], g) / (gn * gn));
  }
  if (rep.cells_checked == 0) rep.min_lambda = 0.0;
  return rep;
}

/// Residual of the discrete balance against every interior hat function:
/// ((W - W_prev)/tau, eta)^h - (Q, grad eta) - (f, eta), as a vector over vertices
/// (boundary entries zero).
inline std::vector<double> qa_balance_residual(const NodalField& w, const NodalField& w_prev,
                                               const CellVectorField& q, const NodalField& f_n, double tau) {
  const TriMesh& mesh = *w.mesh;
  const auto mass = lumped_mass(mesh);
  const auto fm = consistent_mass_times(f_n);
  std::vector<double> res(mesh.num_vertices(), 0.0);
  for (int v = 0; v < mesh.num_vertices(); ++v) res[v] = mass[v] * (w[v] - w_prev[v]) / tau - fm[v];
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tr = mesh.triangle(t);
    const auto& g = mesh.basis_gradients(t);
    for (int i = 0; i < 3; ++i) res[tr[i]] -= mesh.area(t) * dot(q[t], g[i]);
  }
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (mesh.is_boundary_vertex(v)) res[v] = 0.0;
  return res;
}

// ---------------------------------------------------------------------------
// Time loop

struct QaStepRecord {
  int step = 0;
  double t = 0.0;
  int iterations = 0;
  double complementarity = 0.0;
  double gradient_excess = 0.0;
  double volume = 0.0;
};

struct QaSnapshot {
  double t;
  NodalField W;
  CellVectorField Q;
};

struct QaRun {
  std::vector<QaStepRecord> steps;
  std::vector<QaSnapshot> snapshots;
  SolverStateA final_state;
};

struct QaProblem {
  const TriMesh* mesh = nullptr;
  const SupportData* support = nullptr;
  NodalField source;  // nodal source density (constant in time)
  ModelParams params;
  double rho = 1.0;
  StoppingParamsA stopping;
  std::vector<double> snapshot_times;  // final time is always recorded
};

using QaStepCallback = std::function<void(const SolverStateA&, const QaStepRecord&)>;

inline QaRun run_qa(const QaProblem& prob, const QaStepCallback& on_step = {}) {
  prob.params.validate();
  if (prob.mesh == nullptr || prob.support == nullptr) throw InvalidArgument("run_qa: incomplete problem");
  const TriMesh& mesh = *prob.mesh;
  const QaSystem sys(mesh, prob.params.tau, prob.rho);
  SolverStateA state = make_initial_state_a(prob.support->w0_nodal, prob.rho);
  state.Mh = m_eps_h(p0_project(state.W), *prob.support, prob.params);
  const int n_steps = prob.params.num_steps();
  QaRun run;
  for (int n = 1; n <= n_steps; ++n) {
    const double t = n * prob.params.tau;
    try {
      state = qa_time_step(state, prob.source, prob.params, prob.stopping, *prob.support, sys);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("time step " + std::to_string(n) + " (t = " + std::to_string(t) + "): " + e.what(),
                             e.residual());
    }
    QaStepRecord rec;
    rec.step = n;
    rec.t = t;
    rec.iterations = state.iter_count;
    rec.complementarity = qa_complementarity_residual(state);
    rec.gradient_excess = qa_gradient_bound_excess(state, *prob.support, prob.params);
    rec.volume = integral(state.W) - integral(prob.support->w0_nodal);
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

#endif  // SANDPILE_SOLVER_A_HPP
