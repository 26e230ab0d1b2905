#pragma once

#include "boalab/model_zoo.hpp"

// Adiabatic ground-state bundle per grid point: E(y), real-gauged psi0(y),
// projections P(y), Pbar(y), reduced resolvent Rbar(y), Born-Huang v(y).

namespace boalab {

struct EigenBundle {
  NuclearGrid grid;
  int d = 1;
  VectorXd E;                    // ground energy per point
  FiberedState psi0;             // real-gauged ground state
  std::vector<MatrixXd> evecs;   // full eigenbasis per point (columns)
  std::vector<VectorXd> evals;   // full spectrum per point
  FiberedMultOp P, Pbar, Rbar;
  double delta = 0.0;            // measured uniform gap
  VectorXd v;                    // Born-Huang potential
  VectorXd a_max;                // |<psi0, d_j psi0>| per axis (gauge check)
};

namespace detail {

// Sign-propagation gauge: make adjacent ground states overlap positively,
// sequential along axis 0 then axis 1; fails if the loop holonomy is -1.
inline void fix_gauge(std::vector<MatrixXd> &evecs, const NuclearGrid &g) {
  auto psi = [&](long p) { return evecs[p].col(0); };
  auto flip = [&](long p) { evecs[p].col(0) *= -1.0; };

  // first point: largest-magnitude component positive
  {
    Eigen::Index imax;
    psi(0).cwiseAbs().maxCoeff(&imax);
    if (psi(0)(imax) < 0.0) flip(0);
  }
  const int n = g.n;
  if (g.m == 1) {
    for (long p = 1; p < g.n_points; ++p)
      if (psi(p - 1).dot(psi(p)) < 0.0) flip(p);
    if (psi(g.n_points - 1).dot(psi(0)) <= 0.0)
      throw std::runtime_error(
          "diagonalize_fibers: gauge holonomy is -1, no global real gauge");
  } else {
    for (long i1 = 1; i1 < n; ++i1) // row i0 = 0
      if (psi(i1 - 1).dot(psi(i1)) < 0.0) flip(i1);
    for (long i0 = 1; i0 < n; ++i0) // down each column
      for (long i1 = 0; i1 < n; ++i1)
        if (psi((i0 - 1) * n + i1).dot(psi(i0 * n + i1)) < 0.0)
          flip(i0 * n + i1);
    for (long i1 = 0; i1 < n; ++i1)
      if (psi((n - 1) * n + i1).dot(psi(i1)) <= 0.0)
        throw std::runtime_error(
            "diagonalize_fibers: gauge holonomy is -1 along axis 0");
    for (long i0 = 0; i0 < n; ++i0)
      if (psi(i0 * n + n - 1).dot(psi(i0 * n)) <= 0.0)
        throw std::runtime_error(
            "diagonalize_fibers: gauge holonomy is -1 along axis 1");
  }
}

} // namespace detail

// Diagonal kinetic correction v(y) = sum_j ||d_j psi0(y)||^2 with spectral
// derivatives; also reports a_j(y) = <psi0, d_j psi0>, which must vanish for
// a valid real gauge.
//
// With the plain kinetic convention T = -kappa^2 Laplacian used throughout,
// the projected identity reads P K P psi0 g = psi0 (K + kappa^2 v) g with
// exactly this v: projecting -kappa^2 Delta(psi0 g) onto psi0 yields
// -kappa^2 <psi0, Delta psi0> = +kappa^2 ||grad psi0||^2 (no 1/2; the
// familiar 1/2 belongs to the -kappa^2/2 Laplacian convention).
inline void born_huang(EigenBundle &b) {
  const auto &g = b.grid;
  b.v = VectorXd::Zero(g.n_points);
  b.a_max = VectorXd::Zero(g.m);
  for (int axis = 0; axis < g.m; ++axis) {
    MultiIndex e;
    e.a[axis] = 1;
    // plain derivative: D^alpha at kappa = 1 equals -i d/dy; multiply back by i
    FiberedState dpsi = apply_fourier_multiplier(
        b.psi0, d_alpha_multiplier(g, e, 1.0));
    for (long p = 0; p < g.n_points; ++p) {
      // d/dy psi0 = i * (D psi0)|_{kappa=1}
      const VectorXcd dp = kImag * dpsi.fiber(p);
      b.v[p] += dp.squaredNorm();
      const double a = std::abs(b.psi0.fiber(p).dot(dp));
      b.a_max[axis] = std::max(b.a_max[axis], a);
    }
  }
  for (int axis = 0; axis < g.m; ++axis)
    if (b.a_max[axis] > 1e-6)
      throw std::runtime_error("born_huang: gauge broken, |<psi0,d psi0>| = " +
                               std::to_string(b.a_max[axis]));
}

// Per-point diagonalization with real gauge; builds P, Pbar, Rbar and v.
inline EigenBundle diagonalize_fibers(const FiberedMultOp &H_bo) {
  if (H_bo.max_hermitian_defect() > 1e-13 || H_bo.max_imag_part() > 1e-13)
    throw std::invalid_argument("diagonalize_fibers: H_bo not real-symmetric");
  const auto &g = H_bo.grid;
  const int d = H_bo.d;

  EigenBundle b;
  b.grid = g;
  b.d = d;
  b.E = VectorXd(g.n_points);
  b.evecs.resize(g.n_points);
  b.evals.resize(g.n_points);

  double gap = std::numeric_limits<double>::infinity();
  for (long p = 0; p < g.n_points; ++p) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(H_bo.blocks[p].real());
    b.evals[p] = es.eigenvalues();
    b.evecs[p] = es.eigenvectors();
    b.E[p] = b.evals[p](0);
    const double local_gap = b.evals[p](1) - b.evals[p](0);
    if (local_gap < 1e-10)
      throw std::runtime_error(
          "diagonalize_fibers: ground eigenvalue degenerate at a grid point");
    gap = std::min(gap, local_gap);
  }
  b.delta = gap;

  detail::fix_gauge(b.evecs, g);

  b.psi0 = FiberedState(g, d);
  b.P = FiberedMultOp(g, d);
  b.Pbar = FiberedMultOp(g, d);
  b.Rbar = FiberedMultOp(g, d);
  for (long p = 0; p < g.n_points; ++p) {
    const VectorXd psi = b.evecs[p].col(0);
    b.psi0.fiber(p) = psi.cast<Complex>();
    MatrixXd P = psi * psi.transpose();
    b.P.blocks[p] = P.cast<Complex>();
    b.Pbar.blocks[p] = (MatrixXd::Identity(d, d) - P).cast<Complex>();
    MatrixXd R = MatrixXd::Zero(d, d);
    for (int j = 1; j < d; ++j)
      R += b.evecs[p].col(j) * b.evecs[p].col(j).transpose() /
           (b.evals[p](j) - b.evals[p](0));
    b.Rbar.blocks[p] = R.cast<Complex>();
  }

  born_huang(b);
  return b;
}

// Riesz projection by contour quadrature: P(y) = (2 pi i)^-1 \oint (z-H)^-1 dz
// on a circle of the given radius around E(y). Returns max_y ||P_riesz - P||.
inline double riesz_projection_check(const FiberedMultOp &H_bo,
                                     const EigenBundle &b, int n_contour,
                                     double radius) {
  if (n_contour < 4)
    throw std::invalid_argument("riesz_projection_check: need >= 4 points");
  if (radius >= 0.5 * b.delta)
    throw std::invalid_argument(
        "riesz_projection_check: contour radius must be < delta/2");
  const auto &g = b.grid;
  const int d = b.d;
  double worst = 0.0;
  for (long p = 0; p < g.n_points; ++p) {
    // contour must not encircle any other eigenvalue
    for (int j = 1; j < d; ++j)
      if (std::abs(b.evals[p](j) - b.E[p]) <= radius)
        throw std::invalid_argument(
            "riesz_projection_check: contour intersects/encircles spectrum");
    MatrixXcd acc = MatrixXcd::Zero(d, d);
    for (int q = 0; q < n_contour; ++q) {
      const double th = 2.0 * M_PI * q / n_contour;
      const Complex z = b.E[p] + radius * std::exp(kImag * th);
      const Complex dz = radius * kImag * std::exp(kImag * th) *
                         (2.0 * M_PI / n_contour);
      MatrixXcd res = (z * MatrixXcd::Identity(d, d) - H_bo.blocks[p])
                          .partialPivLu()
                          .solve(MatrixXcd::Identity(d, d));
      acc += res * dz;
    }
    acc /= 2.0 * M_PI * kImag;
    worst = std::max(worst, (acc - b.P.blocks[p]).operatorNorm());
  }
  return worst;
}

} // namespace boalab
