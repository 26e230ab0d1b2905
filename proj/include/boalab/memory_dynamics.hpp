#pragma once

#include "boalab/propagation.hpp"

// Non-local effective dynamics: the memory kernel w^kappa, the reconstruction
// map Q_P, a trapezoidal predictor-corrector Volterra solver, and the
// explicit expansion terms w_1 f, w~_1(t) f_0, w_2^kappa[f].
//
// Everything is evaluated in the eigenbasis of Hbar restricted to Ran Pbar,
// where Ubar_{t-s} is a diagonal phase; time integrals then reduce to
// phase-shifted running sums, one O(r) update per node.

namespace boalab {

//==============================================================================
// Projected coupling: X psi0 (.), Rbar and friends in Ubar eigencoordinates.

struct ProjectedCoupling {
  NuclearGrid grid;
  int d = 1;
  double kappa = 0.1;
  VectorXd lambar;  // spectrum of Hbar on Ran Pbar
  MatrixXcd QV;     // dim x r: full-space eigenbasis of Hbar
  MatrixXcd Bt;     // r x N: f -> eigencoords of X psi0 f
  MatrixXcd Rt;     // r x r: Rbar in eigencoords
  MatrixXcd Mxx;    // r x r: Rbar X X^* in eigencoords

  long r() const { return lambar.size(); }

  VectorXcd phases(double t) const {
    VectorXcd ph(lambar.size());
    for (long j = 0; j < lambar.size(); ++j)
      ph[j] = std::exp(-kImag * (lambar[j] * t / kappa));
    return ph;
  }

  // <psi0, X^* (QV c)> as a nuclear function
  VectorXcd project_xstar(const VectorXcd &c) const {
    return Bt.adjoint() * c;
  }
};

inline ProjectedCoupling make_projected_coupling(const FiberedMultOp &H_bo,
                                                 const EigenBundle &b,
                                                 double kappa) {
  ProjectedCoupling pc;
  pc.grid = b.grid;
  pc.d = b.d;
  pc.kappa = kappa;

  const MatrixXcd Q = pbar_basis(b);
  DenseOperator H = assemble_H_kappa(H_bo, kappa);
  MatrixXcd Hsub = Q.adjoint() * H.mat * Q;
  Hsub = 0.5 * (Hsub + Hsub.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(Hsub);
  pc.lambar = es.eigenvalues();
  pc.QV = Q * es.eigenvectors();

  const long n = b.grid.n_points;
  MatrixXcd B(pc.QV.rows(), n);
  VectorXcd e = VectorXcd::Zero(n);
  for (long j = 0; j < n; ++j) {
    e.setZero();
    e[j] = 1.0;
    B.col(j) = apply_X_exact(b, kappa, embed(b.psi0, e)).data;
  }
  pc.Bt = pc.QV.adjoint() * B;

  const long r = pc.r();
  MatrixXcd RQ(pc.QV.rows(), r), MQ(pc.QV.rows(), r);
  for (long j = 0; j < r; ++j) {
    FiberedState col(b.grid, b.d);
    col.data = pc.QV.col(j);
    RQ.col(j) = apply_mult(b.Rbar, col).data;
    FiberedState t = apply_Xstar_exact(b, kappa, col);
    t = apply_X_exact(b, kappa, t);
    MQ.col(j) = apply_mult(b.Rbar, t).data;
  }
  pc.Rt = pc.QV.adjoint() * RQ;
  pc.Mxx = pc.QV.adjoint() * MQ;
  return pc;
}

//==============================================================================
// Time grid path

struct TimeGridPath {
  double dt = 0.0;
  std::vector<double> times;
  std::vector<VectorXcd> values;

  long nodes() const { return static_cast<long>(times.size()); }
};

inline TimeGridPath make_path(double tau, double dt) {
  TimeGridPath p;
  long M = (tau <= 0.0) ? 0 : std::lround(tau / dt);
  if (tau > 0.0 && M < 8)
    throw std::invalid_argument("make_path: need at least 8 time steps");
  p.dt = dt;
  for (long j = 0; j <= M; ++j) p.times.push_back(j * dt);
  p.values.resize(M + 1);
  return p;
}

//==============================================================================
// Memory kernel cache

struct MemoryKernelCache {
  ProjectedCoupling pc;
  double dt = 0.0;

  // Dense kernel matrix at a given lag: g -> <psi0, X^* Ubar_lag X psi0 g>.
  MatrixXcd kernel_matrix(long lag) const {
    const VectorXcd ph = pc.phases(lag * dt);
    return pc.Bt.adjoint() * ph.asDiagonal() * pc.Bt;
  }
};

inline MemoryKernelCache make_kernel_cache(const FiberedMultOp &H_bo,
                                           const EigenBundle &b, double kappa,
                                           double dt) {
  return MemoryKernelCache{make_projected_coupling(H_bo, b, kappa), dt};
}

// w^kappa[f](t_n) = -i kappa * trapz_{s in [0,t_n]}
//                     <psi0, X^* Ubar_{t_n - s} X psi0 f(s)>.
inline VectorXcd memory_w(const TimeGridPath &f, long n,
                          const MemoryKernelCache &cache) {
  const auto &pc = cache.pc;
  if (n < 0 || n >= f.nodes())
    throw std::invalid_argument("memory_w: node out of range");
  const long N = pc.grid.n_points;
  if (n == 0) return VectorXcd::Zero(N);
  VectorXcd acc = VectorXcd::Zero(pc.r());
  for (long j = 0; j <= n; ++j) {
    const double w = (j == 0 || j == n) ? 0.5 : 1.0;
    const VectorXcd c = pc.Bt * f.values[j];
    acc += w * f.dt *
           (pc.phases(f.times[n] - f.times[j]).array() * c.array()).matrix();
  }
  return Complex(0.0, -pc.kappa) * pc.project_xstar(acc);
}

//==============================================================================
// Volterra solver: i kappa df/dt = (T + E + kappa^2 v) f + w^kappa[f]

namespace detail {

inline double heff_spectral_radius(const EffectiveHamiltonian &h) {
  double kmax = 0.0;
  for (double k : h.grid.wavenumbers) kmax = std::max(kmax, std::abs(k));
  const double tmax = h.kappa * h.kappa * kmax * kmax * h.grid.m;
  return tmax + (h.E.cwiseAbs().maxCoeff() +
                 h.kappa * h.kappa * h.v.cwiseAbs().maxCoeff());
}

} // namespace detail

inline TimeGridPath solve_nonlocal(const VectorXcd &f0, double tau, double dt,
                                   const EffectiveHamiltonian &heff,
                                   const MemoryKernelCache &cache) {
  const auto &pc = cache.pc;
  const double kappa = pc.kappa;
  const double spec = detail::heff_spectral_radius(heff);
  if (dt * spec / kappa >= 0.5)
    throw std::invalid_argument(
        "solve_nonlocal: dt too large for the retained spectrum; need dt < " +
        std::to_string(0.5 * kappa / spec));

  TimeGridPath path = make_path(tau, dt);
  path.values[0] = f0;
  if (path.nodes() == 1) return path;
  const long M = path.nodes() - 1;
  const double f0n = nuclear_norm(pc.grid, f0);

  auto rhs = [&](const VectorXcd &f, const VectorXcd &w) {
    return ((heff.apply(f) + w) / (kImag * kappa)).eval();
  };

  // running phase-referenced sum: A_n = sum_{j<=n} e^{+i lam t_j / k} . c_j
  VectorXcd c0 = pc.Bt * f0;
  VectorXcd A = c0; // j = 0 term (t_0 = 0)
  auto mem_at = [&](long n, const VectorXcd &A_full, const VectorXcd &c_n) {
    // trapezoid: dt * (A_full - (c_0 + e^{+i lam t_n / k} . c_n)/2),
    // then advance all phases to t_n
    VectorXcd ph_n = pc.phases(-path.times[n]); // e^{+i lam t_n / k}
    VectorXcd S = dt * (A_full - 0.5 * (c0 + (ph_n.array() * c_n.array())
                                                 .matrix()));
    VectorXcd ph_back = pc.phases(path.times[n]);
    return (Complex(0.0, -kappa) *
            pc.project_xstar((ph_back.array() * S.array()).matrix()))
        .eval();
  };

  VectorXcd w_n = VectorXcd::Zero(pc.grid.n_points); // w at t_0 is 0
  for (long n = 0; n < M; ++n) {
    const VectorXcd r_n = rhs(path.values[n], w_n);
    const VectorXcd f_pred = path.values[n] + dt * r_n;

    const VectorXcd c_pred = pc.Bt * f_pred;
    VectorXcd A_pred =
        A + (pc.phases(-path.times[n + 1]).array() * c_pred.array()).matrix();
    const VectorXcd w_pred = mem_at(n + 1, A_pred, c_pred);

    const VectorXcd r_pred = rhs(f_pred, w_pred);
    path.values[n + 1] = path.values[n] + 0.5 * dt * (r_n + r_pred);

    const double step_change = (path.values[n + 1] - path.values[n]).norm();
    const double correction = (path.values[n + 1] - f_pred).norm();
    if (!path.values[n + 1].allFinite() ||
        nuclear_norm(pc.grid, path.values[n + 1]) > 20.0 * f0n ||
        (n > 0 && correction > std::max(1e-12, 2.0 * step_change)))
      throw std::runtime_error(
          "solve_nonlocal: fixed-point correction diverging, try dt <= " +
          std::to_string(0.25 * dt));

    const VectorXcd c_corr = pc.Bt * path.values[n + 1];
    A += (pc.phases(-path.times[n + 1]).array() * c_corr.array()).matrix();
    w_n = mem_at(n + 1, A, c_corr);
  }
  return path;
}

//==============================================================================
// Reconstruction map Q_P

// (Q_P f)(tau) = psi0 f(tau) - trapz_s Ubar_{tau-s} X psi0 f(s).
inline FiberedState reconstruct_QP(const TimeGridPath &f,
                                   const EigenBundle &b,
                                   const ProjectedCoupling &pc) {
  const long M = f.nodes() - 1;
  FiberedState out = embed(b.psi0, f.values[M]);
  if (M == 0) return out;
  VectorXcd acc = VectorXcd::Zero(pc.r());
  const double tau = f.times[M];
  for (long j = 0; j <= M; ++j) {
    const double w = (j == 0 || j == M) ? 0.5 : 1.0;
    const VectorXcd c = pc.Bt * f.values[j];
    acc += w * f.dt *
           (pc.phases(tau - f.times[j]).array() * c.array()).matrix();
  }
  out.data -= pc.QV * acc;
  return out;
}

//==============================================================================
// Expansion terms (w_1, w~_1(t), w_2^kappa) and the defining identity
// w^k[f](t) = (-i k)^2 (w_1 f(t) - w~_1(t) f_0) + (-i k)^3 w_2^k[f](t).

struct ExpansionTerms {
  VectorXcd w1_f;      // w_1 f(t)
  VectorXcd w1t_f0;    // w~_1(t) f_0
  VectorXcd w2k_f;     // w_2^kappa[f](t)
};

struct ExpansionContext {
  ProjectedCoupling pc;
  DiffFiberOp X, Xs, X3;
  MatrixXcd B2t;  // r x N: f -> eigencoords of X_2 psi0 f
  MatrixXcd M2x;  // r x r: Rbar X_2 X^* in eigencoords

  // coords of (X_3 + Rbar X X^* Rbar X) psi0 f
  VectorXcd u3p_of_f(const EigenBundle &b, const VectorXcd &fv) const {
    FiberedState s = embed(b.psi0, fv);
    FiberedState t = apply_mult(b.Rbar, X.apply(s));
    t = apply_mult(b.Rbar, X.apply(Xs.apply(t)));
    t.data += X3.apply(s).data;
    return pc.QV.adjoint() * t.data;
  }
};

inline ExpansionContext make_expansion_context(const FiberedMultOp &H_bo,
                                               const EigenBundle &b,
                                               double kappa) {
  ExpansionContext ctx;
  ctx.pc = make_projected_coupling(H_bo, b, kappa);
  ctx.X = coupling_X(b, kappa);
  ctx.Xs = adjoint(ctx.X);
  ctx.X3 = recursion_Xj(b, H_bo, kappa, 3);
  const DiffFiberOp X2 = recursion_Xj(b, H_bo, kappa, 2);
  const long n = b.grid.n_points;
  MatrixXcd B2(ctx.pc.QV.rows(), n);
  VectorXcd e = VectorXcd::Zero(n);
  for (long j = 0; j < n; ++j) {
    e.setZero();
    e[j] = 1.0;
    B2.col(j) = X2.apply(embed(b.psi0, e)).data;
  }
  ctx.B2t = ctx.pc.QV.adjoint() * B2;

  const long r = ctx.pc.r();
  MatrixXcd MQ(ctx.pc.QV.rows(), r);
  for (long j = 0; j < r; ++j) {
    FiberedState col(b.grid, b.d);
    col.data = ctx.pc.QV.col(j);
    FiberedState t = X2.apply(ctx.Xs.apply(col));
    MQ.col(j) = apply_mult(b.Rbar, t).data;
  }
  ctx.M2x = ctx.pc.QV.adjoint() * MQ;
  return ctx;
}

// All five terms of w_2^kappa evaluated at node n by shared trapezoid rule.
inline ExpansionTerms expansion_terms(const TimeGridPath &f,
                                      const VectorXcd &f0, long n,
                                      const EigenBundle &b,
                                      const ExpansionContext &ctx) {
  const auto &pc = ctx.pc;
  const double dt = f.dt;
  const double t = f.times[n];
  ExpansionTerms out;

  const VectorXcd cf_t = pc.Bt * f.values[n];
  const VectorXcd cf_0 = pc.Bt * f0;
  out.w1_f = pc.project_xstar(pc.Rt * cf_t);
  out.w1t_f0 = pc.project_xstar(
      (pc.phases(t).array() * (pc.Rt * cf_0).array()).matrix());

  // local pieces: w_2 f(t) and the Ubar_t part of w~_2(t) f_0
  const VectorXcd c2_t = ctx.B2t * f.values[n];
  const VectorXcd c2_0 = ctx.B2t * f0;
  const VectorXcd w2_f = pc.project_xstar(pc.Rt * c2_t);
  VectorXcd w2t_f0 = pc.project_xstar(
      (pc.phases(t).array() * (pc.Rt * c2_0).array()).matrix());

  // integral terms, all on the shared trapezoid grid
  VectorXcd I_single = VectorXcd::Zero(pc.grid.n_points);
  VectorXcd I_tilde2 = VectorXcd::Zero(pc.grid.n_points);
  VectorXcd I_dbl_a = VectorXcd::Zero(pc.grid.n_points);
  VectorXcd I_dbl_b = VectorXcd::Zero(pc.grid.n_points);
  VectorXcd I_triple = VectorXcd::Zero(pc.grid.n_points);

  if (n > 0) {
    const long r = pc.r();
    const VectorXcd step = pc.phases(dt);        // e^{-i lam dt / k}
    const VectorXcd Rc0 = pc.Rt * cf_0;

    // running sums for the inner integrals, advanced by one phase per node
    VectorXcd inA = VectorXcd::Zero(r);  // trapz e^{-i lam (r-s)/k} c_s
    VectorXcd inB = VectorXcd::Zero(r);  // trapz ... (Mxx inA)(s)
    std::vector<VectorXcd> cs(n + 1), c2s(n + 1);
    for (long j = 0; j <= n; ++j) {
      cs[j] = pc.Bt * f.values[j];
      c2s[j] = ctx.B2t * f.values[j];
    }

    std::vector<VectorXcd> innerA(n + 1), innerB(n + 1);
    innerA[0] = VectorXcd::Zero(r);
    innerB[0] = VectorXcd::Zero(r);
    VectorXcd sumA = 0.5 * cs[0]; // running trapezoid interior of A
    VectorXcd sumB = 0.5 * (pc.Mxx * innerA[0]);
    for (long j = 1; j <= n; ++j) {
      sumA = (step.array() * sumA.array()).matrix() + cs[j];
      innerA[j] = dt * (sumA - 0.5 * cs[j]);
      sumB = (step.array() * sumB.array()).matrix() + pc.Mxx * innerA[j];
      innerB[j] = dt * (sumB - 0.5 * (pc.Mxx * innerA[j]));
    }

    for (long j = 0; j <= n; ++j) {
      const double w = (j == 0 || j == n) ? 0.5 : 1.0;
      const VectorXcd ph = pc.phases(t - f.times[j]);
      // single: X_3 + Rbar X X^* Rbar X acting on psi0 f(r)
      const VectorXcd u3 = ctx.u3p_of_f(b, f.values[j]);
      I_single += w * dt * pc.project_xstar((ph.array() * u3.array()).matrix());
      // w~_2 integral: Rbar X X^* Ubar_r Rbar X psi0 f_0
      const VectorXcd mid =
          pc.Mxx * (pc.phases(f.times[j]).array() * Rc0.array()).matrix();
      I_tilde2 += w * dt * pc.project_xstar((ph.array() * mid.array()).matrix());
      // doubles and triple via the inner running sums
      const VectorXcd da = ctx.M2x * innerA[j];
      I_dbl_a += w * dt * pc.project_xstar((ph.array() * da.array()).matrix());
      const VectorXcd db = pc.Mxx * dt *
          [&] { // inner integral of X_2-type source
            VectorXcd s = VectorXcd::Zero(r);
            for (long l = 0; l <= j; ++l) {
              const double wl = (l == 0 || l == j) ? 0.5 : 1.0;
              s += wl * (pc.phases(f.times[j] - f.times[l]).array() *
                         c2s[l].array())
                           .matrix();
            }
            return s;
          }();
      I_dbl_b += w * dt * pc.project_xstar((ph.array() * db.array()).matrix());
      const VectorXcd dtr = pc.Mxx * innerB[j];
      I_triple += w * dt * pc.project_xstar((ph.array() * dtr.array()).matrix());
    }
  }

  w2t_f0 -= I_tilde2;
  // sign bookkeeping: composing the expansion twice gives the two length-2
  // terms the coefficient (-ik)(+ik) = +k^2 = -(-ik)^2, so they enter
  // w_2^kappa with minus signs (the single and triple terms with plus)
  out.w2k_f = -(w2_f - w2t_f0) + I_single - I_dbl_a - I_dbl_b + I_triple;
  return out;
}

} // namespace boalab
