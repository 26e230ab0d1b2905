#pragma once

#include "boalab/operator_algebra.hpp"

// Unitary time evolution e^{-i G t / kappa} for dense Hermitian generators,
// optionally restricted to the range of a projector (for Ubar_t). All
// propagators take physical t and divide by kappa internally.

namespace boalab {

enum class Backend { exact_diag, krylov };

inline Backend backend_from_string(const std::string &s) {
  if (s == "exact_diag") return Backend::exact_diag;
  if (s == "krylov") return Backend::krylov;
  throw std::invalid_argument("unknown backend: " + s);
}

struct Propagator {
  double kappa = 0.1;
  Backend backend = Backend::exact_diag;
  long dim = 0;

  // exact_diag data (in subspace coordinates when restricted)
  VectorXd evals;
  MatrixXcd evecs;

  // krylov data
  MatrixXcd generator;
  int krylov_dim = 48;

  // optional subspace restriction: orthonormal columns spanning Ran(proj);
  // acts as the identity on the orthogonal complement
  bool restricted = false;
  MatrixXcd Q;

  VectorXcd evolve_vec(const VectorXcd &psi, double t) const;
  FiberedState evolve(const FiberedState &psi, double t) const {
    FiberedState out = psi;
    out.data = evolve_vec(psi.data, t);
    return out;
  }

  // Dense matrix of the propagator at time t (identity on the orthogonal
  // complement when restricted).
  MatrixXcd dense(double t) const {
    VectorXcd ph(evals.size());
    for (long j = 0; j < evals.size(); ++j)
      ph[j] = std::exp(-kImag * (evals[j] * t / kappa));
    if (restricted) {
      const MatrixXcd QV = Q * evecs;
      return QV * ph.asDiagonal() * QV.adjoint() +
             (MatrixXcd::Identity(dim, dim) - Q * Q.adjoint());
    }
    if (backend != Backend::exact_diag)
      throw std::invalid_argument("dense(t): exact_diag backend only");
    return evecs * ph.asDiagonal() * evecs.adjoint();
  }
};

namespace detail {

// One Lanczos exponential step (full reorthogonalization).
inline VectorXcd lanczos_expm(const MatrixXcd &G, const VectorXcd &v0,
                              double theta, int m) {
  const long n = v0.size();
  const double beta0 = v0.norm();
  if (beta0 == 0.0) return v0;
  m = std::min<long>(m, n);
  MatrixXcd V(n, m);
  VectorXd alpha(m), beta(m);
  V.col(0) = v0 / beta0;
  int k_used = m;
  for (int k = 0; k < m; ++k) {
    VectorXcd w = G * V.col(k);
    alpha[k] = std::real(V.col(k).dot(w));
    w -= alpha[k] * V.col(k);
    if (k > 0) w -= beta[k - 1] * V.col(k - 1);
    for (int r = 0; r <= k; ++r) w -= V.col(r).dot(w) * V.col(r);
    if (k + 1 < m) {
      beta[k] = w.norm();
      if (beta[k] < 1e-14) { k_used = k + 1; break; }
      V.col(k + 1) = w / beta[k];
    }
  }
  MatrixXd T = MatrixXd::Zero(k_used, k_used);
  for (int k = 0; k < k_used; ++k) {
    T(k, k) = alpha[k];
    if (k + 1 < k_used) { T(k, k + 1) = beta[k]; T(k + 1, k) = beta[k]; }
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(T);
  VectorXcd phases(k_used);
  for (int k = 0; k < k_used; ++k)
    phases[k] = std::exp(-kImag * (es.eigenvalues()(k) * theta));
  VectorXcd coeff = es.eigenvectors().cast<Complex>() *
                    (phases.array() *
                     es.eigenvectors().row(0).transpose().cast<Complex>()
                         .array())
                        .matrix();
  return beta0 * (V.leftCols(k_used) * coeff);
}

} // namespace detail

inline VectorXcd Propagator::evolve_vec(const VectorXcd &psi, double t) const {
  if (psi.size() != dim)
    throw std::invalid_argument("evolve: state dimension mismatch");
  if (restricted) {
    const VectorXcd coeffs = Q.adjoint() * psi;
    const VectorXcd inside = Q * coeffs;
    if ((psi - inside).norm() > 1e-8 * std::max(1.0, psi.norm()))
      throw std::invalid_argument("evolve: state not in the subspace");
    VectorXcd c = evecs.adjoint() * coeffs;
    for (long j = 0; j < c.size(); ++j)
      c[j] *= std::exp(-kImag * (evals[j] * t / kappa));
    return Q * (evecs * c) + (psi - inside);
  }
  if (backend == Backend::exact_diag) {
    VectorXcd c = evecs.adjoint() * psi;
    for (long j = 0; j < c.size(); ++j)
      c[j] *= std::exp(-kImag * (evals[j] * t / kappa));
    return evecs * c;
  }
  // krylov: substep so each Lanczos solve stays well inside convergence
  const double theta_total = t / kappa;
  double gnorm = generator.cwiseAbs().rowwise().sum().maxCoeff(); // inf-norm
  int n_sub = std::max(1, static_cast<int>(std::ceil(
                              std::abs(theta_total) * gnorm /
                              (0.5 * krylov_dim))));
  VectorXcd cur = psi;
  for (int s = 0; s < n_sub; ++s)
    cur = detail::lanczos_expm(generator, cur, theta_total / n_sub,
                               krylov_dim);
  return cur;
}

inline Propagator make_propagator(const DenseOperator &gen, double kappa,
                                  Backend backend = Backend::exact_diag) {
  const double defect = gen.hermitian_defect();
  if (defect > 1e-10)
    throw std::invalid_argument("make_propagator: non-Hermitian generator, "
                                "defect " + std::to_string(defect));
  Propagator p;
  p.kappa = kappa;
  p.backend = backend;
  p.dim = gen.dim();
  if (backend == Backend::exact_diag) {
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(gen.mat);
    p.evals = es.eigenvalues();
    p.evecs = es.eigenvectors();
  } else {
    p.generator = 0.5 * (gen.mat + gen.mat.adjoint());
  }
  return p;
}

// Restricted propagator: generator confined to Ran(Q), identity elsewhere.
// Q must have orthonormal columns. The generator is checked to commute with
// the subspace (projector * gen * projector == gen on Ran Q).
inline Propagator make_subspace_propagator(const DenseOperator &gen,
                                           double kappa, const MatrixXcd &Q) {
  Propagator p;
  p.kappa = kappa;
  p.backend = Backend::exact_diag;
  p.dim = gen.dim();
  p.restricted = true;
  p.Q = Q;
  MatrixXcd Hsub = Q.adjoint() * gen.mat * Q;
  const MatrixXcd recon = Q * Hsub * Q.adjoint();
  if ((recon - gen.mat).cwiseAbs().maxCoeff() >
      1e-11 * std::max(1.0, gen.mat.cwiseAbs().maxCoeff()))
    throw std::invalid_argument(
        "make_subspace_propagator: generator is not projector-confined");
  Hsub = 0.5 * (Hsub + Hsub.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(Hsub);
  p.evals = es.eigenvalues();
  p.evecs = es.eigenvectors();
  return p;
}

//==============================================================================
// Subspace bases from the eigenbundle (block-diagonal, hence exact)

// Columns e_g (x) v_j(y_g), j >= 1: orthonormal basis of Ran Pbar.
inline MatrixXcd pbar_basis(const EigenBundle &b) {
  const long n = b.grid.n_points;
  const int d = b.d;
  MatrixXcd Q = MatrixXcd::Zero(n * d, n * (d - 1));
  for (long g = 0; g < n; ++g)
    for (int j = 1; j < d; ++j)
      Q.block(g * d, g * (d - 1) + (j - 1), d, 1) =
          b.evecs[g].col(j).cast<Complex>();
  return Q;
}

// Columns e_g (x) psi0(y_g): orthonormal basis of Ran P.
inline MatrixXcd p_basis(const EigenBundle &b) {
  const long n = b.grid.n_points;
  const int d = b.d;
  MatrixXcd Q = MatrixXcd::Zero(n * d, n);
  for (long g = 0; g < n; ++g)
    Q.block(g * d, g, d, 1) = b.psi0.fiber(g);
  return Q;
}

// Ubar_t = exp(-i Pbar H_kappa Pbar t / kappa) restricted to Ran Pbar.
inline Propagator make_ubar(const FiberedMultOp &H_bo, const EigenBundle &b,
                            double kappa) {
  DenseOperator H = assemble_H_kappa(H_bo, kappa);
  MatrixXcd Q = pbar_basis(b);
  DenseOperator Hbar;
  Hbar.mat = Q * (Q.adjoint() * H.mat * Q) * Q.adjoint();
  Hbar.hermitian = true;
  return make_subspace_propagator(Hbar, kappa, Q);
}

// U_t^P = exp(-i P H_kappa P t / kappa) restricted to Ran P.
inline Propagator make_up(const FiberedMultOp &H_bo, const EigenBundle &b,
                          double kappa) {
  DenseOperator H = assemble_H_kappa(H_bo, kappa);
  MatrixXcd Q = p_basis(b);
  DenseOperator HP;
  HP.mat = Q * (Q.adjoint() * H.mat * Q) * Q.adjoint();
  HP.hermitian = true;
  return make_subspace_propagator(HP, kappa, Q);
}

// Propagator for a nuclear-space effective Hamiltonian.
inline Propagator make_heff_propagator(const EffectiveHamiltonian &h) {
  DenseOperator gen;
  gen.mat = h.dense();
  gen.mat = 0.5 * (gen.mat + gen.mat.adjoint()).eval();
  gen.hermitian = true;
  return make_propagator(gen, h.kappa, Backend::exact_diag);
}

//==============================================================================
// Sobolev growth probe (Appendix-D style bounds as numerical sanity checks)

struct GrowthTable {
  std::vector<double> times;
  std::vector<double> ratios;     // ||U_t psi||_{H^s_k} / ||psi||_{H^s_k}
  double poly_exponent = 0.0;     // slope of log ratio vs log<t>
  double exp_rate = 0.0;          // slope of log ratio vs t
};

inline GrowthTable sobolev_growth_probe(const Propagator &prop,
                                        const FiberedState &psi, int s,
                                        const std::vector<double> &t_list,
                                        double kappa) {
  if (s > 3) throw std::invalid_argument("sobolev_growth_probe: s <= 3");
  GrowthTable table;
  const double base = sobolev_norm(psi, s, kappa);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double ex = 0, ey = 0, exx = 0, exy = 0;
  int n = 0;
  for (double t : t_list) {
    FiberedState evolved = prop.evolve(psi, t);
    const double ratio = sobolev_norm(evolved, s, kappa) / base;
    table.times.push_back(t);
    table.ratios.push_back(ratio);
    if (t > 0.0 && ratio > 0.0) {
      const double lx = std::log(std::sqrt(1.0 + t * t));
      const double ly = std::log(ratio);
      sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
      ex += t; ey += ly; exx += t * t; exy += t * ly;
      ++n;
    }
  }
  if (n >= 2) {
    table.poly_exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    table.exp_rate = (n * exy - ex * ey) / (n * exx - ex * ex);
  }
  return table;
}

} // namespace boalab
