#include "boalab/spectral_bundle.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace boalab;
using Catch::Approx;

namespace {

ModelSpec ac_spec(double floor_ = 1.0, double coupling = 0.5) {
  ModelSpec s;
  s.kind = ModelKind::avoided_crossing;
  s.d = 2;
  s.delta_floor = floor_;
  s.coupling = coupling;
  return s;
}

double bundle_invariant_defect(const FiberedMultOp &H, const EigenBundle &b) {
  double worst = 0.0;
  const int d = b.d;
  const MatrixXcd I = MatrixXcd::Identity(d, d);
  for (long p = 0; p < b.grid.n_points; ++p) {
    const auto &P = b.P.blocks[p];
    const auto &Pb = b.Pbar.blocks[p];
    const auto &R = b.Rbar.blocks[p];
    const auto &Hb = H.blocks[p];
    worst = std::max(worst, (P * P - P).operatorNorm());
    worst = std::max(worst, (P - P.adjoint()).operatorNorm());
    worst = std::max(worst, (P * Pb).operatorNorm());
    worst = std::max(worst, (Hb * P - P * Hb).operatorNorm());
    worst = std::max(worst, (R * (Hb - b.E[p] * I) - Pb).operatorNorm());
    worst = std::max(worst, (R * P).operatorNorm());
  }
  return worst;
}

} // namespace

TEST_CASE("decoupled bundle is exact") {
  const auto g = make_grid(1, 32, 16.0);
  ModelSpec spec;
  spec.kind = ModelKind::decoupled;
  spec.d = 2;
  auto H = build_model(spec, g);
  auto b = diagonalize_fibers(H);
  CHECK(b.delta == Approx(1.0));
  for (long p = 0; p < g.n_points; ++p) {
    CHECK(std::abs(b.E[p]) < 1e-14);
    CHECK(std::abs(b.psi0.at(p, 0) - 1.0) < 1e-14);
    CHECK(std::abs(b.psi0.at(p, 1)) < 1e-14);
    CHECK(std::abs(b.Rbar.blocks[p](1, 1) - 1.0) < 1e-14);
    CHECK(std::abs(b.Rbar.blocks[p](0, 0)) < 1e-14);
  }
  CHECK(b.v.cwiseAbs().maxCoeff() < 1e-18);
}

TEST_CASE("flat two-level model: Rbar = Pbar / 2") {
  const auto g = make_grid(1, 32, 16.0);
  auto spec = ac_spec(2.0, 0.0); // eigenvalues +-1 around the mean shift
  auto H = build_model(spec, g);
  auto b = diagonalize_fibers(H);
  CHECK(b.delta == Approx(2.0));
  for (long p = 0; p < g.n_points; ++p)
    CHECK((b.Rbar.blocks[p] - 0.5 * b.Pbar.blocks[p]).operatorNorm() < 1e-13);
}

TEST_CASE("bundle invariants on the zoo") {
  const auto g = make_grid(1, 128, 16.0);
  std::vector<ModelSpec> specs;
  specs.push_back(ac_spec());
  {
    ModelSpec s;
    s.kind = ModelKind::shifted_levels;
    s.d = 4;
    s.delta_floor = 0.8;
    specs.push_back(s);
  }
  {
    ModelSpec s;
    s.kind = ModelKind::smeared_diatomic;
    s.d = 32;
    s.delta_floor = 0.05;
    specs.push_back(s);
  }
  for (const auto &spec : specs) {
    auto H = build_model(spec, g);
    auto b = diagonalize_fibers(H);
    INFO("model " << to_string(spec.kind));
    CHECK(bundle_invariant_defect(H, b) < 1e-12);
    // ||Rbar(y)|| <= 1/delta and psi0 normalized
    for (long p = 0; p < g.n_points; ++p) {
      CHECK(b.Rbar.blocks[p].operatorNorm() <= 1.0 / b.delta + 1e-10);
      CHECK(std::abs(b.psi0.fiber(p).norm() - 1.0) < 1e-12);
    }
    // gauge continuity including the wrap-around
    for (long p = 0; p < g.n_points; ++p) {
      const long q = (p + 1) % g.n_points;
      CHECK(std::real(b.psi0.fiber(p).dot(b.psi0.fiber(q))) > 0.0);
    }
    CHECK(b.v.minCoeff() >= 0.0);
  }
}

TEST_CASE("Rbar residual oracle on smeared diatomic") {
  const auto g = make_grid(1, 128, 16.0);
  ModelSpec spec;
  spec.kind = ModelKind::smeared_diatomic;
  spec.d = 32;
  spec.delta_floor = 0.05;
  auto H = build_model(spec, g);
  auto b = diagonalize_fibers(H);
  std::mt19937_64 rng(4242);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const long p = rng() % g.n_points;
    VectorXcd x(spec.d);
    for (int j = 0; j < spec.d; ++j) x[j] = Complex(gauss(rng), gauss(rng));
    const VectorXcd lhs =
        b.Rbar.blocks[p] *
        ((H.blocks[p] - b.E[p] * MatrixXcd::Identity(spec.d, spec.d)) * x);
    const VectorXcd rhs = b.Pbar.blocks[p] * x;
    REQUIRE((lhs - rhs).norm() < 1e-10 * x.norm());
  }
}

TEST_CASE("born_huang closed form for a rotating frame") {
  // H(y) = cos(theta) sz + sin(theta) sx has ground state
  // (-sin(theta/2), cos(theta/2)) and v = theta'^2 / 4.
  const auto g = make_grid(1, 128, 16.0);
  const double amp = 0.7;
  FiberedMultOp H(g, 2);
  for (long p = 0; p < g.n_points; ++p) {
    const double th = amp * std::sin(2.0 * M_PI * g.coord(p) / g.length);
    MatrixXcd b(2, 2);
    b << std::cos(th), std::sin(th), std::sin(th), -std::cos(th);
    H.blocks[p] = b;
  }
  auto b = diagonalize_fibers(H);
  for (long p = 0; p < g.n_points; ++p) {
    const double thp = amp * (2.0 * M_PI / g.length) *
                       std::cos(2.0 * M_PI * g.coord(p) / g.length);
    CHECK(b.v[p] == Approx(thp * thp / 4.0).margin(1e-10));
  }
}

TEST_CASE("riesz projection matches the eigensolver projection") {
  const auto g = make_grid(1, 32, 16.0);

  SECTION("decoupled, spectrally-accurate contour") {
    ModelSpec spec;
    spec.kind = ModelKind::decoupled;
    spec.d = 2;
    auto H = build_model(spec, g);
    auto b = diagonalize_fibers(H);
    CHECK(riesz_projection_check(H, b, 64, 0.4) < 1e-12);
    // few quadrature points: larger but finite residual
    const double coarse = riesz_projection_check(H, b, 4, 0.4);
    CHECK(coarse > 1e-12);
    CHECK(std::isfinite(coarse));
  }

  SECTION("avoided crossing") {
    const auto gf = make_grid(1, 128, 16.0);
    auto H = build_model(ac_spec(), gf);
    auto b = diagonalize_fibers(H);
    CHECK(riesz_projection_check(H, b, 64, 0.45 * b.delta) < 1e-10);
  }

  SECTION("contour encircling both eigenvalues rejected") {
    auto H = build_model(ac_spec(2.0, 0.0), g);
    auto b = diagonalize_fibers(H);
    CHECK_THROWS_AS(riesz_projection_check(H, b, 64, 1.5),
                    std::invalid_argument);
  }
}

TEST_CASE("2D bundle gauge") {
  const auto g = make_grid(2, 32, 8.0);
  auto spec = ac_spec(1.0, 0.3);
  spec.sharpness = 0.8;
  auto H = build_model(spec, g);
  auto b = diagonalize_fibers(H);
  CHECK(b.delta >= 1.0 - 1e-12);
  CHECK(b.v.minCoeff() >= 0.0);
  CHECK(bundle_invariant_defect(H, b) < 1e-12);
}
