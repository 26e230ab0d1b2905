#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <array>
#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

// Discretization of the fibered space L^2(R^m, H_el): a periodic nuclear grid
// tensored with a d-dimensional electronic fiber. Derivatives are the
// kappa-scaled D = -i*kappa*d/dy, applied as Fourier multipliers.

namespace boalab {

using Complex = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

inline constexpr Complex kImag{0.0, 1.0};

//==============================================================================
// Multi-index over nuclear axes (m <= 2)

struct MultiIndex {
  std::array<int, 2> a{0, 0};

  MultiIndex() = default;
  MultiIndex(int a0) : a{a0, 0} {}
  MultiIndex(int a0, int a1) : a{a0, a1} {}

  int order() const { return a[0] + a[1]; }
  bool operator==(const MultiIndex &o) const { return a == o.a; }
  bool operator<(const MultiIndex &o) const { return a < o.a; }
  MultiIndex operator+(const MultiIndex &o) const {
    return MultiIndex(a[0] + o.a[0], a[1] + o.a[1]);
  }
};

// All multi-indices over m axes with |alpha| = s.
inline std::vector<MultiIndex> multi_indices_of_order(int m, int s) {
  std::vector<MultiIndex> out;
  if (m == 1) {
    out.push_back(MultiIndex(s));
  } else {
    for (int a0 = s; a0 >= 0; --a0) out.push_back(MultiIndex(a0, s - a0));
  }
  return out;
}

//==============================================================================
// NuclearGrid

struct NuclearGrid {
  int m = 1;            // nuclear dimension
  int n = 0;            // points per axis (power of two)
  double length = 0.0;  // box length per axis
  double spacing = 0.0; // length / n
  long n_points = 0;    // n^m
  std::vector<double> wavenumbers; // per-axis, FFT ordering

  double quad_weight() const { return std::pow(spacing, m); }
  double coord(long i) const { return spacing * static_cast<double>(i); }

  bool operator==(const NuclearGrid &o) const {
    return m == o.m && n == o.n && length == o.length;
  }
};

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

inline NuclearGrid make_grid(int m, int n, double length) {
  if (m != 1 && m != 2)
    throw std::invalid_argument("make_grid: m must be 1 or 2");
  if (!is_power_of_two(n))
    throw std::invalid_argument("make_grid: N must be power of two");
  if (n < 16) throw std::invalid_argument("make_grid: N must be >= 16");
  if (!(length > 0.0)) throw std::invalid_argument("make_grid: L must be > 0");

  NuclearGrid g;
  g.m = m;
  g.n = n;
  g.length = length;
  g.spacing = length / n;
  g.n_points = 1;
  for (int j = 0; j < m; ++j) g.n_points *= n;

  const double dk = 2.0 * M_PI / length;
  g.wavenumbers.resize(n);
  for (int j = 0; j < n; ++j)
    g.wavenumbers[j] = dk * (j < n / 2 ? j : j - n);
  return g;
}

//==============================================================================
// FiberedState: grid-indexed vector of complex fiber vectors.
// Layout: data[g * d + a], grid index g, fiber index a.
// For m = 2, g = i0 * n + i1 (axis 0 slow, axis 1 fast).

struct FiberedState {
  NuclearGrid grid;
  int d = 1;
  VectorXcd data;

  FiberedState() = default;
  FiberedState(const NuclearGrid &g, int d_)
      : grid(g), d(d_), data(VectorXcd::Zero(g.n_points * d_)) {}

  long size() const { return data.size(); }
  Complex &at(long g, int a) { return data[g * d + a]; }
  const Complex &at(long g, int a) const { return data[g * d + a]; }
  Eigen::VectorBlock<VectorXcd> fiber(long g) { return data.segment(g * d, d); }
  Eigen::VectorBlock<const VectorXcd> fiber(long g) const {
    return data.segment(g * d, d);
  }
};

inline void check_finite(const FiberedState &s, const char *where) {
  if (!s.data.allFinite())
    throw std::runtime_error(std::string(where) + ": state has NaN/Inf");
}

//==============================================================================
// Inner products and norms (quadrature weight h^m)

inline Complex inner(const FiberedState &a, const FiberedState &b) {
  return a.grid.quad_weight() * a.data.dot(b.data);
}

inline double l2_norm(const FiberedState &a) {
  return std::sqrt(a.grid.quad_weight()) * a.data.norm();
}

inline Complex nuclear_inner(const NuclearGrid &g, const VectorXcd &a,
                             const VectorXcd &b) {
  return g.quad_weight() * a.dot(b);
}

inline double nuclear_norm(const NuclearGrid &g, const VectorXcd &a) {
  return std::sqrt(g.quad_weight()) * a.norm();
}

//==============================================================================
// Spectral transforms. Fourier multipliers act per fiber component.

namespace detail {

// In-place FFT of every line along `axis` of a single fiber component held in
// a contiguous grid-sized buffer.
inline void fft_lines(VectorXcd &buf, const NuclearGrid &g, int axis,
                      bool forward) {
  Eigen::FFT<double> fft;
  const int n = g.n;
  std::vector<Complex> line(n), out(n);
  if (g.m == 1) {
    for (int j = 0; j < n; ++j) line[j] = buf[j];
    if (forward) fft.fwd(out, line); else fft.inv(out, line);
    for (int j = 0; j < n; ++j) buf[j] = out[j];
    return;
  }
  // m == 2: axis 0 has stride n, axis 1 is contiguous
  const long stride = (axis == 0) ? n : 1;
  const long n_lines = n;
  for (long l = 0; l < n_lines; ++l) {
    const long base = (axis == 0) ? l : l * n;
    for (int j = 0; j < n; ++j) line[j] = buf[base + j * stride];
    if (forward) fft.fwd(out, line); else fft.inv(out, line);
    for (int j = 0; j < n; ++j) buf[base + j * stride] = out[j];
  }
}

} // namespace detail

// Applies the Fourier multiplier mult(g) (indexed like grid points, in FFT
// ordering) to each fiber component of psi.
inline FiberedState apply_fourier_multiplier(const FiberedState &psi,
                                             const VectorXcd &mult) {
  FiberedState out(psi.grid, psi.d);
  VectorXcd buf(psi.grid.n_points);
  for (int a = 0; a < psi.d; ++a) {
    for (long g = 0; g < psi.grid.n_points; ++g) buf[g] = psi.at(g, a);
    for (int axis = 0; axis < psi.grid.m; ++axis)
      detail::fft_lines(buf, psi.grid, axis, true);
    buf.array() *= mult.array();
    for (int axis = 0; axis < psi.grid.m; ++axis)
      detail::fft_lines(buf, psi.grid, axis, false);
    for (long g = 0; g < psi.grid.n_points; ++g) out.at(g, a) = buf[g];
  }
  return out;
}

// Multiplier for D^alpha = prod_j (-i kappa d/dy_j)^{alpha_j}: (kappa k)^alpha.
// The Nyquist mode is zeroed for odd derivative orders (it has no conjugate
// partner on the grid).
inline VectorXcd d_alpha_multiplier(const NuclearGrid &g, const MultiIndex &al,
                                    double kappa) {
  VectorXcd mult(g.n_points);
  const int nq = g.n / 2;
  for (long p = 0; p < g.n_points; ++p) {
    double v = 1.0;
    long rem = p;
    for (int axis = g.m - 1; axis >= 0; --axis) {
      const int idx = static_cast<int>(rem % g.n);
      rem /= g.n;
      const int ord = al.a[axis];
      if (ord == 0) continue;
      if (idx == nq && (ord % 2) != 0) { v = 0.0; break; }
      v *= std::pow(kappa * g.wavenumbers[idx], ord);
    }
    mult[p] = v;
  }
  return mult;
}

struct ScaledDerivativeSpec {
  double kappa = 0.1;
  MultiIndex alpha;
};

// D^alpha psi, spectral, exact on band-limited data.
inline FiberedState apply_D_alpha(const FiberedState &psi,
                                  const ScaledDerivativeSpec &spec) {
  if (spec.alpha.order() > 4)
    throw std::invalid_argument("apply_D_alpha: |alpha| must be <= 4");
  if (!(spec.kappa > 0.0) || !(spec.kappa < 1.0))
    throw std::invalid_argument("apply_D_alpha: kappa must be in (0,1)");
  check_finite(psi, "apply_D_alpha");
  return apply_fourier_multiplier(psi, d_alpha_multiplier(psi.grid, spec.alpha,
                                                          spec.kappa));
}

inline FiberedState apply_D_alpha(const FiberedState &psi,
                                  const MultiIndex &alpha, double kappa) {
  return apply_D_alpha(psi, ScaledDerivativeSpec{kappa, alpha});
}

// Kinetic multiplier for T = -kappa^2 Laplacian = sum_j D_j^2: (kappa|k|)^2.
inline VectorXcd kinetic_multiplier(const NuclearGrid &g, double kappa) {
  VectorXcd mult = VectorXcd::Zero(g.n_points);
  for (long p = 0; p < g.n_points; ++p) {
    double v = 0.0;
    long rem = p;
    for (int axis = g.m - 1; axis >= 0; --axis) {
      const int idx = static_cast<int>(rem % g.n);
      rem /= g.n;
      const double kk = kappa * g.wavenumbers[idx];
      v += kk * kk;
    }
    mult[p] = v;
  }
  return mult;
}

inline FiberedState apply_T(const FiberedState &psi, double kappa) {
  return apply_fourier_multiplier(psi, kinetic_multiplier(psi.grid, kappa));
}

//==============================================================================
// kappa-scaled Sobolev norm: (sum_{|alpha|=s} ||D^alpha psi||^2 + ||psi||^2)^1/2

inline double sobolev_norm(const FiberedState &psi, int s, double kappa) {
  if (s < 0 || s > 4)
    throw std::invalid_argument("sobolev_norm: order must be in [0,4]");
  const double base = l2_norm(psi);
  if (s == 0) return base;
  double acc = base * base;
  for (const auto &al : multi_indices_of_order(psi.grid.m, s)) {
    const double na = l2_norm(apply_D_alpha(psi, al, kappa));
    acc += na * na;
  }
  return std::sqrt(acc);
}

inline double nuclear_sobolev_norm(const NuclearGrid &g, const VectorXcd &f,
                                   int s, double kappa) {
  FiberedState tmp(g, 1);
  tmp.data = f;
  return sobolev_norm(tmp, s, kappa);
}

//==============================================================================
// Fiber projection f(y) = <psi0(y), Psi(y)> and its embedding inverse

inline void require_pointwise_normalized(const FiberedState &psi0,
                                         double tol = 1e-10) {
  for (long g = 0; g < psi0.grid.n_points; ++g) {
    if (std::abs(psi0.fiber(g).norm() - 1.0) > tol)
      throw std::invalid_argument(
          "fiber_project: psi0 not pointwise normalized");
  }
}

inline VectorXcd fiber_project(const FiberedState &Psi,
                               const FiberedState &psi0) {
  if (!(Psi.grid == psi0.grid) || Psi.d != psi0.d)
    throw std::invalid_argument("fiber_project: incompatible spaces");
  require_pointwise_normalized(psi0);
  VectorXcd f(Psi.grid.n_points);
  for (long g = 0; g < Psi.grid.n_points; ++g)
    f[g] = psi0.fiber(g).dot(Psi.fiber(g));
  return f;
}

inline FiberedState embed(const FiberedState &psi0, const VectorXcd &f) {
  FiberedState out(psi0.grid, psi0.d);
  for (long g = 0; g < psi0.grid.n_points; ++g)
    out.fiber(g) = psi0.fiber(g) * f[g];
  return out;
}

//==============================================================================
// Utilities

// Fraction of the state's mass within one spacing of the box boundary.
inline double mass_near_boundary(const FiberedState &psi) {
  const auto &g = psi.grid;
  double boundary = 0.0, total = 0.0;
  for (long p = 0; p < g.n_points; ++p) {
    const double w = psi.fiber(p).squaredNorm();
    total += w;
    bool near = false;
    long rem = p;
    for (int axis = g.m - 1; axis >= 0; --axis) {
      const long idx = rem % g.n;
      rem /= g.n;
      if (idx == 0 || idx == g.n - 1) near = true;
    }
    if (near) boundary += w;
  }
  return total > 0.0 ? boundary / total : 0.0;
}

inline double nuclear_mass_near_boundary(const NuclearGrid &g,
                                         const VectorXcd &f) {
  FiberedState tmp(g, 1);
  tmp.data = f;
  return mass_near_boundary(tmp);
}

// Seeded random band-limited state: Gaussian spectral envelope with a hard
// cutoff at k_cut (so products of a few such states and smooth coefficients
// stay alias-free), normalized in L^2.
inline FiberedState random_smooth_state(const NuclearGrid &g, int d,
                                        std::uint64_t seed,
                                        double k_cut = 0.0) {
  if (k_cut <= 0.0) k_cut = 0.25 * M_PI / g.spacing;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  FiberedState coeff(g, d);
  for (int a = 0; a < d; ++a) {
    for (long p = 0; p < g.n_points; ++p) {
      double k2 = 0.0;
      long rem = p;
      for (int axis = g.m - 1; axis >= 0; --axis) {
        const int idx = static_cast<int>(rem % g.n);
        rem /= g.n;
        k2 += g.wavenumbers[idx] * g.wavenumbers[idx];
      }
      const Complex xi(gauss(rng), gauss(rng));
      const double env =
          (k2 > k_cut * k_cut) ? 0.0
                               : std::exp(-4.0 * k2 / (k_cut * k_cut));
      coeff.at(p, a) = xi * env;
    }
  }
  // back to position space: inverse transform of the coefficients
  FiberedState out(g, d);
  VectorXcd buf(g.n_points);
  for (int a = 0; a < d; ++a) {
    for (long p = 0; p < g.n_points; ++p) buf[p] = coeff.at(p, a);
    for (int axis = 0; axis < g.m; ++axis)
      detail::fft_lines(buf, g, axis, false);
    for (long p = 0; p < g.n_points; ++p) out.at(p, a) = buf[p];
  }
  const double nrm = l2_norm(out);
  if (nrm > 0.0) out.data /= nrm;
  return out;
}

inline VectorXcd random_smooth_nuclear(const NuclearGrid &g,
                                       std::uint64_t seed,
                                       double k_cut = 0.0) {
  return random_smooth_state(g, 1, seed, k_cut).data;
}

// Normalized Gaussian wavepacket exp(-(y-c)^2/(4 w^2)) * exp(i k0 y).
inline VectorXcd gaussian_packet(const NuclearGrid &g, double center,
                                 double width, double momentum) {
  if (g.m != 1)
    throw std::invalid_argument("gaussian_packet: 1D grids only");
  VectorXcd f(g.n_points);
  for (long p = 0; p < g.n_points; ++p) {
    const double y = g.coord(p) - center;
    f[p] = std::exp(-y * y / (4.0 * width * width)) *
           std::exp(kImag * (momentum * g.coord(p)));
  }
  f /= std::sqrt(g.quad_weight()) * f.norm();
  return f;
}

} // namespace boalab
