#pragma once

#include "boalab/memory_dynamics.hpp"

// Non-abelian integration by parts, verified exactly on random finite
// matrices, plus the X_t representation of the propagator difference.
//
// With R = (A-B)^{-1} and S = R [A,B] R, the identities implemented here are
// the ones that follow from the exponent-derivative representation
//   e^{At} = d/dt(e^{At} R e^{-Bt}) e^{Bt} - e^{At} S,
// namely
//   int_0^t G e^{As} F ds = [G e^{As} R F]_0^t - int G e^{As} S F
//                           - int (G' e^{As} R F + G e^{As} R (B F + F')),
//   int_0^t F e^{-As} G ds = -[F R e^{-As} G]_0^t + int F S e^{-As} G
//                           + int ((F' - F B) R e^{-As} G + F R e^{-As} G').

namespace boalab {

//==============================================================================
// Anti-self-adjoint matrix pairs

struct MatrixPair {
  int n = 8;
  MatrixXcd A, B;
  std::uint64_t seed = 0;
};

namespace detail {

inline MatrixXcd random_anti_selfadjoint(int n, std::mt19937_64 &rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatrixXcd G(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) G(i, j) = Complex(gauss(rng), gauss(rng));
  MatrixXcd H = 0.5 * (G + G.adjoint()); // Hermitian
  return kImag * H / std::sqrt(static_cast<double>(n));
}

// e^{At} for anti-self-adjoint A via the Hermitian factor -iA.
struct AntiExp {
  VectorXd lam;
  MatrixXcd V;

  explicit AntiExp(const MatrixXcd &A) {
    MatrixXcd H = -kImag * A;
    H = 0.5 * (H + H.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(H);
    lam = es.eigenvalues();
    V = es.eigenvectors();
  }

  MatrixXcd at(double t) const {
    VectorXcd ph(lam.size());
    for (long j = 0; j < lam.size(); ++j)
      ph[j] = std::exp(kImag * (lam[j] * t));
    return V * ph.asDiagonal() * V.adjoint();
  }
};

} // namespace detail

inline MatrixPair make_matrix_pair(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MatrixPair p;
  p.n = n;
  p.seed = seed;
  for (int attempt = 0; attempt < 64; ++attempt) {
    p.A = detail::random_anti_selfadjoint(n, rng);
    p.B = detail::random_anti_selfadjoint(n, rng);
    Eigen::JacobiSVD<MatrixXcd> svd(p.A - p.B);
    const double cond = svd.singularValues()(0) /
                        svd.singularValues()(n - 1);
    if (cond < 1e6) return p;
  }
  throw std::runtime_error("make_matrix_pair: could not condition A - B");
}

//==============================================================================
// Polynomial matrix paths F_s = sum_k F_k s^k (derivatives exact)

struct MatrixPath {
  std::vector<MatrixXcd> coeff;

  MatrixXcd at(double s) const {
    MatrixXcd out = MatrixXcd::Zero(coeff[0].rows(), coeff[0].cols());
    double p = 1.0;
    for (const auto &c : coeff) { out += p * c; p *= s; }
    return out;
  }
  MatrixXcd deriv(double s) const {
    MatrixXcd out = MatrixXcd::Zero(coeff[0].rows(), coeff[0].cols());
    double p = 1.0;
    for (std::size_t k = 1; k < coeff.size(); ++k) {
      out += static_cast<double>(k) * p * coeff[k];
      p *= s;
    }
    return out;
  }
};

inline MatrixPath random_linear_path(int n, std::mt19937_64 &rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto rand_mat = [&](double scale) {
    MatrixXcd M(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) M(i, j) = Complex(gauss(rng), gauss(rng));
    return (scale / std::sqrt(static_cast<double>(n)) * M).eval();
  };
  return MatrixPath{{rand_mat(1.0), rand_mat(0.5)}};
}

//==============================================================================
// Gauss-Legendre nodes on [0, 1] (Newton iteration on P_n)

struct QuadRule {
  std::vector<double> x, w;
};

inline QuadRule gauss_legendre(int n) {
  QuadRule q;
  q.x.resize(n);
  q.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      pp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    q.x[i] = 0.5 * (1.0 + x);
    q.w[i] = 1.0 / ((1.0 - x * x) * pp * pp); // already scaled to [0,1]
  }
  return q;
}

//==============================================================================
// Verifications

// Exponent-derivative representation, with the derivative expanded
// analytically: e^{At} = A e^{At} R - e^{At} R B - e^{At} S.
inline double verify_expderrep(const MatrixPair &p,
                               const std::vector<double> &t_list) {
  const MatrixXcd R = (p.A - p.B).partialPivLu().solve(
      MatrixXcd::Identity(p.n, p.n));
  const MatrixXcd S = R * (p.A * p.B - p.B * p.A) * R;
  detail::AntiExp eA(p.A);
  double worst = 0.0;
  for (double t : t_list) {
    const MatrixXcd Et = eA.at(t);
    const MatrixXcd rhs = p.A * Et * R - Et * R * p.B - Et * S;
    worst = std::max(worst, (Et - rhs).norm());
  }
  return worst;
}

// Right-handed NAIP on polynomial paths, both sides by Gauss-Legendre.
inline double verify_naip(const MatrixPair &p, const MatrixPath &F,
                          const MatrixPath &G, double t, int n_quad) {
  if (n_quad < 64)
    throw std::invalid_argument("verify_naip: n_quad must be >= 64");
  const MatrixXcd R = (p.A - p.B).partialPivLu().solve(
      MatrixXcd::Identity(p.n, p.n));
  const MatrixXcd S = R * (p.A * p.B - p.B * p.A) * R;
  detail::AntiExp eA(p.A);
  const QuadRule q = gauss_legendre(n_quad);

  MatrixXcd lhs = MatrixXcd::Zero(p.n, p.n);
  MatrixXcd integrals = MatrixXcd::Zero(p.n, p.n);
  for (int i = 0; i < n_quad; ++i) {
    const double s = t * q.x[i];
    const double w = t * q.w[i];
    const MatrixXcd Es = eA.at(s);
    const MatrixXcd Fs = F.at(s), Gs = G.at(s);
    lhs += w * (Gs * Es * Fs);
    integrals += w * (-(Gs * Es * S * Fs)
                      - (G.deriv(s) * Es * R * Fs)
                      - (Gs * Es * R * (p.B * Fs + F.deriv(s))));
  }
  const MatrixXcd boundary =
      G.at(t) * eA.at(t) * R * F.at(t) - G.at(0.0) * R * F.at(0.0);
  return (lhs - boundary - integrals).norm();
}

// Left-handed NAIP.
inline double verify_left_naip(const MatrixPair &p, const MatrixPath &F,
                               const MatrixPath &G, double t, int n_quad) {
  if (n_quad < 64)
    throw std::invalid_argument("verify_left_naip: n_quad must be >= 64");
  const MatrixXcd R = (p.A - p.B).partialPivLu().solve(
      MatrixXcd::Identity(p.n, p.n));
  const MatrixXcd S = R * (p.A * p.B - p.B * p.A) * R;
  detail::AntiExp eA(p.A);
  const QuadRule q = gauss_legendre(n_quad);

  MatrixXcd lhs = MatrixXcd::Zero(p.n, p.n);
  MatrixXcd integrals = MatrixXcd::Zero(p.n, p.n);
  for (int i = 0; i < n_quad; ++i) {
    const double s = t * q.x[i];
    const double w = t * q.w[i];
    const MatrixXcd Ems = eA.at(-s);
    const MatrixXcd Fs = F.at(s), Gs = G.at(s);
    lhs += w * (Fs * Ems * Gs);
    integrals += w * ((Fs * S * Ems * Gs)
                      + ((F.deriv(s) - Fs * p.B) * R * Ems * Gs)
                      + (Fs * R * Ems * G.deriv(s)));
  }
  const MatrixXcd boundary =
      F.at(t) * R * eA.at(-t) * G.at(t) - F.at(0.0) * R * G.at(0.0);
  return (lhs + boundary - integrals).norm();
}

//==============================================================================
// X_t representation: (U_t - U_t^P) P = U_t X_t with
// X_t = -int_0^t Y_s Ubar_{-s} X U_s^P ds and
// Y_s = 1 - int_0^s U_{-a} X^* Ubar_a da
// (the minus follows from the Duhamel substitution -(i/k) P H Pbar = X^*).

struct XtRepResult {
  double residual = 0.0; // ||(U_t - U^P_t) psi - U_t X_t psi|| / ||psi||
  double xt_norm = 0.0;  // ||X_t psi|| / ||psi||
};

inline XtRepResult verify_Xt_representation(const FiberedMultOp &H_bo,
                                            const EigenBundle &b, double kappa,
                                            double t, double dt,
                                            const FiberedState &psi_in) {
  DenseOperator H = assemble_H_kappa(H_bo, kappa);
  Propagator U = make_propagator(H, kappa);
  Propagator UP = make_up(H_bo, b, kappa);
  Propagator Ubar = make_ubar(H_bo, b, kappa);
  // exact factored X = (i/k) Pbar T P so the representation is an exact
  // identity of the discrete operators (residual then pure quadrature)
  DenseOperator Xd;
  Xd.mat = (kImag / kappa) * (assemble_dense(b.Pbar).mat *
                              assemble_dense(kinetic_T(b.grid, b.d,
                                                       kappa)).mat *
                              assemble_dense(b.P).mat);
  DenseOperator Xsd;
  Xsd.mat = Xd.mat.adjoint();

  // psi restricted to Ran P
  FiberedState psi = psi_in;
  psi.data = embed(b.psi0, fiber_project(psi_in, b.psi0)).data;
  const double pnorm = l2_norm(psi);

  const long M = std::lround(t / dt);
  const long dim = H.dim();

  // running trapezoid of W_a = U_{-a} X^* Ubar_a (dense, updated in place)
  MatrixXcd cumW = MatrixXcd::Zero(dim, dim);
  auto W_at = [&](double a) {
    return (U.dense(-a) * Xsd.mat * Ubar.dense(a)).eval();
  };

  MatrixXcd W_prev = W_at(0.0);
  VectorXcd xt = VectorXcd::Zero(dim);
  for (long j = 0; j <= M && M > 0; ++j) {
    const double s = j * dt;
    if (j > 0) {
      MatrixXcd W_cur = W_at(s);
      cumW += 0.5 * dt * (W_prev + W_cur);
      W_prev.swap(W_cur);
    }
    const VectorXcd chi =
        Ubar.evolve_vec(Xd.mat * UP.evolve_vec(psi.data, s), -s);
    const VectorXcd integrand = chi - cumW * chi;
    const double w = (j == 0 || j == M) ? 0.5 : 1.0;
    xt -= w * dt * integrand;
  }

  XtRepResult out;
  const VectorXcd lhs = U.evolve_vec(psi.data, t) - UP.evolve_vec(psi.data, t);
  const VectorXcd rhs = U.evolve_vec(xt, t);
  const double qw = std::sqrt(psi.grid.quad_weight());
  out.residual = qw * (lhs - rhs).norm() / pnorm;
  out.xt_norm = qw * xt.norm() / pnorm;
  return out;
}

} // namespace boalab
