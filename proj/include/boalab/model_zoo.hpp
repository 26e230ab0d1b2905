#pragma once

#include "boalab/grid.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <map>
#include <string>

// Model fibered Hamiltonians H_bo = \int^+ H(y) dy with a uniform spectral
// gap above a simple ground level, certified numerically.

namespace boalab {

//==============================================================================
// FiberedMultOp: grid-indexed d x d blocks, i.e. a decomposable operator.

struct FiberedMultOp {
  NuclearGrid grid;
  int d = 1;
  std::vector<MatrixXcd> blocks; // n_points blocks of d x d

  FiberedMultOp() = default;
  FiberedMultOp(const NuclearGrid &g, int d_)
      : grid(g), d(d_), blocks(g.n_points, MatrixXcd::Zero(d_, d_)) {}

  static FiberedMultOp identity(const NuclearGrid &g, int d_) {
    FiberedMultOp op(g, d_);
    for (auto &b : op.blocks) b = MatrixXcd::Identity(d_, d_);
    return op;
  }

  // Pointwise scalar function times identity.
  static FiberedMultOp from_scalar(const NuclearGrid &g, int d_,
                                   const VectorXd &s) {
    FiberedMultOp op(g, d_);
    for (long p = 0; p < g.n_points; ++p)
      op.blocks[p] = s[p] * MatrixXcd::Identity(d_, d_);
    return op;
  }

  double max_hermitian_defect() const {
    double defect = 0.0;
    for (const auto &b : blocks)
      defect = std::max(defect, (b - b.adjoint()).cwiseAbs().maxCoeff());
    return defect;
  }

  double max_imag_part() const {
    double im = 0.0;
    for (const auto &b : blocks)
      im = std::max(im, b.imag().cwiseAbs().maxCoeff());
    return im;
  }

  double max_block_norm() const {
    double v = 0.0;
    for (const auto &b : blocks) v = std::max(v, b.operatorNorm());
    return v;
  }
};

inline FiberedState apply_mult(const FiberedMultOp &op,
                               const FiberedState &psi) {
  if (!(op.grid == psi.grid) || op.d != psi.d)
    throw std::invalid_argument("apply_mult: incompatible spaces");
  FiberedState out(psi.grid, psi.d);
  for (long g = 0; g < psi.grid.n_points; ++g)
    out.fiber(g) = op.blocks[g] * psi.fiber(g).eval();
  return out;
}

inline FiberedMultOp operator*(const FiberedMultOp &a, const FiberedMultOp &b) {
  FiberedMultOp out(a.grid, a.d);
  for (long g = 0; g < a.grid.n_points; ++g)
    out.blocks[g] = a.blocks[g] * b.blocks[g];
  return out;
}

inline FiberedMultOp operator+(const FiberedMultOp &a, const FiberedMultOp &b) {
  FiberedMultOp out = a;
  for (long g = 0; g < a.grid.n_points; ++g) out.blocks[g] += b.blocks[g];
  return out;
}

inline FiberedMultOp operator-(const FiberedMultOp &a, const FiberedMultOp &b) {
  FiberedMultOp out = a;
  for (long g = 0; g < a.grid.n_points; ++g) out.blocks[g] -= b.blocks[g];
  return out;
}

inline FiberedMultOp operator*(Complex c, const FiberedMultOp &a) {
  FiberedMultOp out = a;
  for (auto &b : out.blocks) b *= c;
  return out;
}

inline FiberedMultOp adjoint(const FiberedMultOp &a) {
  FiberedMultOp out = a;
  for (long g = 0; g < a.grid.n_points; ++g)
    out.blocks[g] = a.blocks[g].adjoint().eval();
  return out;
}

// Entry-wise spectral derivative d^alpha of a decomposable operator.
inline FiberedMultOp derivative(const FiberedMultOp &op,
                                const MultiIndex &alpha) {
  // plain d/dy multiplier: (i k)^alpha
  const auto &g = op.grid;
  VectorXcd mult(g.n_points);
  const int nq = g.n / 2;
  for (long p = 0; p < g.n_points; ++p) {
    Complex v = 1.0;
    long rem = p;
    for (int axis = g.m - 1; axis >= 0; --axis) {
      const int idx = static_cast<int>(rem % g.n);
      rem /= g.n;
      const int ord = alpha.a[axis];
      if (ord == 0) continue;
      if (idx == nq && (ord % 2) != 0) { v = 0.0; break; }
      v *= std::pow(kImag * g.wavenumbers[idx], ord);
    }
    mult[p] = v;
  }
  FiberedMultOp out(g, op.d);
  VectorXcd buf(g.n_points);
  for (int i = 0; i < op.d; ++i)
    for (int j = 0; j < op.d; ++j) {
      for (long p = 0; p < g.n_points; ++p) buf[p] = op.blocks[p](i, j);
      for (int axis = 0; axis < g.m; ++axis)
        detail::fft_lines(buf, g, axis, true);
      buf.array() *= mult.array();
      for (int axis = 0; axis < g.m; ++axis)
        detail::fft_lines(buf, g, axis, false);
      for (long p = 0; p < g.n_points; ++p) out.blocks[p](i, j) = buf[p];
    }
  return out;
}

//==============================================================================
// ModelSpec

enum class ModelKind { decoupled, avoided_crossing, shifted_levels,
                       smeared_diatomic };

inline ModelKind model_kind_from_string(const std::string &s) {
  if (s == "decoupled") return ModelKind::decoupled;
  if (s == "avoided_crossing") return ModelKind::avoided_crossing;
  if (s == "shifted_levels") return ModelKind::shifted_levels;
  if (s == "smeared_diatomic") return ModelKind::smeared_diatomic;
  throw std::invalid_argument("unknown model kind: " + s);
}

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::decoupled: return "decoupled";
    case ModelKind::avoided_crossing: return "avoided_crossing";
    case ModelKind::shifted_levels: return "shifted_levels";
    case ModelKind::smeared_diatomic: return "smeared_diatomic";
  }
  return "?";
}

struct ModelSpec {
  ModelKind kind = ModelKind::avoided_crossing;
  int d = 2;                  // fiber dimension (= el_grid for smeared)
  double delta_floor = 1.0;   // declared gap floor
  // avoided_crossing
  double coupling = 0.6;      // amplitude of the tanh-shaped bump Delta(y)
  double sharpness = 1.5;     // steepness of the bump
  // shifted_levels
  double level_amp = 0.2;     // amplitude of the level wobble
  double level_coupling = 0.1;
  // smeared_diatomic
  double charge = 1.0;        // mobile nucleus charge Z
  double charge_fixed = 2.0;  // clamped nucleus charge
  double sigma = 1.0;         // soft-kernel width (form-factor scale)

  void validate() const {
    if (delta_floor <= 0.0)
      throw std::invalid_argument("ModelSpec: delta_floor must be > 0");
    if (d < 2) throw std::invalid_argument("ModelSpec: d must be >= 2");
    if (kind == ModelKind::shifted_levels && d < 3)
      throw std::invalid_argument("ModelSpec: shifted_levels needs d >= 3");
    if (kind == ModelKind::smeared_diatomic) {
      if (sigma <= 0.0)
        throw std::invalid_argument("ModelSpec: sigma must be > 0");
      if (!is_power_of_two(d))
        throw std::invalid_argument(
            "ModelSpec: electronic grid size must be a power of two");
    }
  }
};

//==============================================================================
// Model construction

namespace detail {

// Smooth periodic bump: plateaus at +-1, crosses zero. Period L in y.
inline double tanh_bump(double y, double length, double sharpness) {
  return std::tanh(sharpness * std::sin(2.0 * M_PI * y / length));
}

// Smooth periodic soft-Coulomb kernel; ~ 1/sqrt(r^2 + sigma^2) for |r| << L.
inline double soft_kernel_periodic(double r, double length, double sigma) {
  const double chord = (length / M_PI) * std::sin(M_PI * r / length);
  return 1.0 / std::sqrt(chord * chord + sigma * sigma);
}

// Spectral -1/2 Laplacian on a d-point periodic electronic grid of length L.
inline MatrixXd electronic_kinetic(int d, double length) {
  const double dk = 2.0 * M_PI / length;
  VectorXd k2(d);
  for (int j = 0; j < d; ++j) {
    const double k = dk * (j < d / 2 ? j : j - d);
    k2[j] = 0.5 * k * k;
  }
  // T = F^* diag(k^2/2) F, assembled column by column (real circulant)
  Eigen::FFT<double> fft;
  MatrixXd T(d, d);
  std::vector<Complex> col(d), hat(d);
  for (int c = 0; c < d; ++c) {
    for (int j = 0; j < d; ++j) col[j] = (j == c) ? 1.0 : 0.0;
    fft.fwd(hat, col);
    for (int j = 0; j < d; ++j) hat[j] *= k2[j];
    fft.inv(col, hat);
    for (int j = 0; j < d; ++j) T(j, c) = col[j].real();
  }
  T = 0.5 * (T + T.transpose()).eval();
  return T;
}

inline double grid_coord_axis0(const NuclearGrid &g, long p) {
  long rem = p;
  for (int axis = g.m - 1; axis >= 1; --axis) rem /= g.n;
  return g.coord(rem % g.n);
}

// y-profile argument used by 2-level models: for m = 1 just y, for m = 2 a
// smooth periodic combination of both axes.
inline double profile_phase(const NuclearGrid &g, long p) {
  if (g.m == 1) return std::sin(2.0 * M_PI * g.coord(p) / g.length);
  const long i1 = p % g.n;
  const long i0 = (p / g.n) % g.n;
  const double y0 = g.coord(i0), y1 = g.coord(i1);
  return std::sin(2.0 * M_PI * y0 / g.length) +
         0.5 * std::sin(2.0 * M_PI * y1 / g.length + 1.0);
}

} // namespace detail

// Builds H_bo for the given model as a real-symmetric FiberedMultOp.
inline FiberedMultOp build_model(const ModelSpec &spec,
                                 const NuclearGrid &grid) {
  spec.validate();
  FiberedMultOp H(grid, spec.d);

  switch (spec.kind) {
    case ModelKind::decoupled: {
      MatrixXcd H0 = MatrixXcd::Zero(spec.d, spec.d);
      for (int j = 0; j < spec.d; ++j) H0(j, j) = static_cast<double>(j);
      for (auto &b : H.blocks) b = H0;
      break;
    }
    case ModelKind::avoided_crossing: {
      if (spec.d != 2)
        throw std::invalid_argument("avoided_crossing: d must be 2");
      const double c = 0.5 * spec.delta_floor;
      // mean of sqrt(Delta^2 + c^2): subtracted so E(y) hovers around 0
      double mean = 0.0;
      std::vector<double> delta(grid.n_points);
      for (long p = 0; p < grid.n_points; ++p) {
        delta[p] = spec.coupling * std::tanh(spec.sharpness *
                                             detail::profile_phase(grid, p));
        mean += std::sqrt(delta[p] * delta[p] + c * c);
      }
      mean /= static_cast<double>(grid.n_points);
      for (long p = 0; p < grid.n_points; ++p) {
        MatrixXcd b(2, 2);
        b << delta[p] + mean, c, c, -delta[p] + mean;
        H.blocks[p] = b;
      }
      break;
    }
    case ModelKind::shifted_levels: {
      const double spacing =
          spec.delta_floor + 2.0 * spec.level_amp + 4.0 * spec.level_coupling;
      for (long p = 0; p < grid.n_points; ++p) {
        const double ph = detail::profile_phase(grid, p);
        MatrixXcd b = MatrixXcd::Zero(spec.d, spec.d);
        for (int j = 0; j < spec.d; ++j)
          b(j, j) = j * spacing +
                    spec.level_amp * std::sin(ph * (1.0 + 0.3 * j) + 0.7 * j);
        for (int j = 0; j + 1 < spec.d; ++j) {
          const double w = spec.level_coupling * std::cos(ph + 0.5 * j);
          b(j, j + 1) = w;
          b(j + 1, j) = w;
        }
        H.blocks[p] = b;
      }
      break;
    }
    case ModelKind::smeared_diatomic: {
      if (grid.m != 1)
        throw std::invalid_argument("smeared_diatomic: 1D nuclear grids only");
      const int d = spec.d;
      const double Lx = grid.length; // electron box commensurate with y-box
      const MatrixXd Tx = detail::electronic_kinetic(d, Lx);
      const double hx = Lx / d;
      for (long p = 0; p < grid.n_points; ++p) {
        const double y = grid.coord(p);
        MatrixXcd b = Tx.cast<Complex>();
        for (int j = 0; j < d; ++j) {
          const double x = hx * j;
          const double ven =
              -spec.charge_fixed *
                  detail::soft_kernel_periodic(x, Lx, spec.sigma) -
              spec.charge *
                  detail::soft_kernel_periodic(x - y, Lx, spec.sigma);
          b(j, j) += ven;
        }
        const double vn = spec.charge * spec.charge_fixed *
                          detail::soft_kernel_periodic(y, Lx, spec.sigma);
        b.diagonal().array() += vn;
        H.blocks[p] = b;
      }
      break;
    }
  }

  if (H.max_hermitian_defect() > 1e-13 || H.max_imag_part() > 1e-13)
    throw std::runtime_error("build_model: block failed real-symmetric check");
  return H;
}

//==============================================================================
// Assumption certificate

struct AssumptionCertificate {
  double delta = 0.0;              // measured uniform gap [A4]
  double simplicity_margin = 0.0;  // ground-level simplicity [A3]
  std::vector<double> deriv_norms; // max_y ||d^alpha H(y)||, |alpha| = 1..n [A1]
  bool passed = false;
  std::string message;
};

inline AssumptionCertificate verify_assumptions(const FiberedMultOp &H_bo,
                                                int n_deriv,
                                                double delta_min = 1e-6) {
  if (n_deriv > 4)
    throw std::invalid_argument("verify_assumptions: n_deriv must be <= 4");
  AssumptionCertificate cert;
  double gap = std::numeric_limits<double>::infinity();
  for (const auto &b : H_bo.blocks) {
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(b, Eigen::EigenvaluesOnly);
    gap = std::min(gap, es.eigenvalues()(1) - es.eigenvalues()(0));
  }
  cert.delta = gap;
  cert.simplicity_margin = gap;

  for (int s = 1; s <= n_deriv; ++s) {
    double mx = 0.0;
    for (const auto &al : multi_indices_of_order(H_bo.grid.m, s))
      mx = std::max(mx, derivative(H_bo, al).max_block_norm());
    cert.deriv_norms.push_back(mx);
  }

  cert.passed = gap >= delta_min;
  cert.message = cert.passed
                     ? "assumptions verified"
                     : "gap " + std::to_string(gap) + " below delta_min " +
                           std::to_string(delta_min);
  if (!cert.passed) throw std::runtime_error("verify_assumptions: " +
                                             cert.message);
  return cert;
}

} // namespace boalab
