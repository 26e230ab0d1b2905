#include "boalab/grid.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace boalab;
using Catch::Approx;

namespace {

// 4th-order centered finite-difference second derivative, periodic.
VectorXcd fd2_periodic(const VectorXcd &f, double h) {
  const long n = f.size();
  VectorXcd out(n);
  auto at = [&](long j) { return f[((j % n) + n) % n]; };
  for (long j = 0; j < n; ++j)
    out[j] = (-at(j - 2) + 16.0 * at(j - 1) - 30.0 * at(j) +
              16.0 * at(j + 1) - at(j + 2)) /
             (12.0 * h * h);
  return out;
}

FiberedState plane_wave(const NuclearGrid &g, int d, double k0) {
  FiberedState s(g, d);
  for (long p = 0; p < g.n_points; ++p)
    for (int a = 0; a < d; ++a)
      s.at(p, a) = std::exp(kImag * (k0 * g.coord(p))) / std::sqrt(double(d));
  const double nrm = l2_norm(s);
  s.data /= nrm;
  return s;
}

} // namespace

TEST_CASE("make_grid spacing and validation") {
  CHECK(make_grid(1, 256, 40.0).spacing == Approx(0.15625));
  CHECK(make_grid(1, 16, 16.0).spacing == Approx(1.0));
  CHECK(make_grid(2, 16, 8.0).n_points == 256);
  CHECK_THROWS_AS(make_grid(1, 100, 40.0), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(3, 16, 8.0), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(1, 8, 8.0), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(1, 16, -1.0), std::invalid_argument);
}

TEST_CASE("apply_D_alpha basics") {
  const auto g = make_grid(1, 64, 16.0);
  const double kappa = 0.1;

  SECTION("derivative of a constant vanishes") {
    FiberedState c(g, 2);
    c.data.setConstant(Complex(0.7, -0.2));
    auto d1 = apply_D_alpha(c, MultiIndex(1), kappa);
    CHECK(l2_norm(d1) < 1e-14);
  }

  SECTION("plane wave is a Fourier eigenfunction") {
    const double k0 = 2.0 * M_PI / g.length * 3; // exact grid wavenumber
    auto pw = plane_wave(g, 1, k0);
    auto d1 = apply_D_alpha(pw, MultiIndex(1), kappa);
    FiberedState expect = pw;
    expect.data *= kappa * k0;
    CHECK((d1.data - expect.data).norm() < 1e-12);
  }

  SECTION("order cap") {
    auto pw = plane_wave(g, 1, 0.0);
    CHECK_THROWS_AS(apply_D_alpha(pw, MultiIndex(5), kappa),
                    std::invalid_argument);
  }
}

TEST_CASE("spectral second derivative matches finite-difference oracle") {
  const auto g = make_grid(1, 512, 40.0);
  const double kappa = 0.2;
  FiberedState s(g, 1);
  for (long p = 0; p < g.n_points; ++p) {
    const double y = g.coord(p) - 20.0;
    s.at(p, 0) = std::exp(-y * y / 16.0) * std::exp(kImag * (0.8 * y));
  }
  const auto d2 = apply_D_alpha(s, MultiIndex(2), kappa);
  // D^2 = -kappa^2 d^2/dy^2
  const VectorXcd oracle = -kappa * kappa * fd2_periodic(s.data, g.spacing);
  const double rel = (d2.data - oracle).norm() / d2.data.norm();
  CHECK(rel < 1e-6);
}

TEST_CASE("Parseval and composition of derivatives") {
  const auto g = make_grid(1, 128, 20.0);
  auto s = random_smooth_state(g, 2, 42);

  SECTION("norm preserved by round-trip transform") {
    auto id = apply_fourier_multiplier(s, VectorXcd::Ones(g.n_points));
    CHECK(std::abs(l2_norm(id) - l2_norm(s)) < 1e-12 * l2_norm(s));
  }

  SECTION("D^a D^b = D^{a+b} on band-limited states") {
    const double kappa = 0.15;
    auto d1 = apply_D_alpha(apply_D_alpha(s, MultiIndex(1), kappa),
                            MultiIndex(2), kappa);
    auto d3 = apply_D_alpha(s, MultiIndex(3), kappa);
    CHECK((d1.data - d3.data).norm() < 1e-10 * std::max(1.0, d3.data.norm()));
  }
}

TEST_CASE("sobolev_norm") {
  const auto g = make_grid(1, 64, 16.0);
  const double kappa = 0.1;

  SECTION("s = 0 equals the L2 norm") {
    auto s = random_smooth_state(g, 3, 7);
    CHECK(sobolev_norm(s, 0, kappa) == Approx(l2_norm(s)));
  }

  SECTION("normalized constant has unit H^2 norm") {
    FiberedState c(g, 1);
    c.data.setConstant(1.0);
    c.data /= l2_norm(c);
    CHECK(sobolev_norm(c, 2, kappa) == Approx(1.0).epsilon(1e-12));
  }

  SECTION("plane wave H^1 norm is sqrt(1 + (kappa k0)^2)") {
    const double k0 = 2.0 * M_PI / g.length * 5;
    auto pw = plane_wave(g, 1, k0);
    CHECK(sobolev_norm(pw, 1, kappa) ==
          Approx(std::sqrt(1.0 + kappa * kappa * k0 * k0)).epsilon(1e-10));
  }

  SECTION("monotone above the L2 norm") {
    auto s = random_smooth_state(g, 2, 99);
    for (int ord = 1; ord <= 4; ++ord)
      CHECK(sobolev_norm(s, ord, kappa) >= sobolev_norm(s, 0, kappa) - 1e-14);
  }
}

TEST_CASE("fiber projection and embedding") {
  const auto g = make_grid(1, 64, 16.0);
  const int d = 3;
  // a pointwise-normalized real frame as psi0
  FiberedState psi0(g, d);
  for (long p = 0; p < g.n_points; ++p) {
    const double th = 0.3 * std::sin(2.0 * M_PI * g.coord(p) / g.length);
    psi0.at(p, 0) = std::cos(th);
    psi0.at(p, 1) = std::sin(th);
    psi0.at(p, 2) = 0.0;
  }

  SECTION("project(embed(f)) = f") {
    VectorXcd f = random_smooth_nuclear(g, 5);
    auto round = fiber_project(embed(psi0, f), psi0);
    CHECK((round - f).norm() < 1e-12 * f.norm());
  }

  SECTION("orthogonal states project to zero, projection contracts") {
    FiberedState orth(g, d);
    for (long p = 0; p < g.n_points; ++p) {
      orth.at(p, 0) = -psi0.at(p, 1);
      orth.at(p, 1) = psi0.at(p, 0);
    }
    CHECK(fiber_project(orth, psi0).norm() < 1e-13);

    auto Psi = random_smooth_state(g, d, 11);
    const VectorXcd f = fiber_project(Psi, psi0);
    CHECK(l2_norm(embed(psi0, f)) <= l2_norm(Psi) + 1e-12);
  }

  SECTION("unnormalized psi0 rejected") {
    FiberedState bad = psi0;
    bad.at(3, 0) *= 1.5;
    auto Psi = random_smooth_state(g, d, 12);
    CHECK_THROWS_AS(fiber_project(Psi, bad), std::invalid_argument);
  }
}

TEST_CASE("2D grids: derivatives and norms") {
  const auto g = make_grid(2, 16, 8.0);
  const double kappa = 0.2;
  auto s = random_smooth_state(g, 2, 21);

  SECTION("mixed partials commute") {
    auto dxy = apply_D_alpha(apply_D_alpha(s, MultiIndex(1, 0), kappa),
                             MultiIndex(0, 1), kappa);
    auto dyx = apply_D_alpha(s, MultiIndex(1, 1), kappa);
    CHECK((dxy.data - dyx.data).norm() < 1e-12);
  }

  SECTION("kinetic multiplier equals sum of second derivatives") {
    auto t = apply_T(s, kappa);
    auto sum = apply_D_alpha(s, MultiIndex(2, 0), kappa);
    sum.data += apply_D_alpha(s, MultiIndex(0, 2), kappa).data;
    CHECK((t.data - sum.data).norm() < 1e-12);
  }
}

TEST_CASE("gaussian packet is normalized and interior") {
  const auto g = make_grid(1, 256, 40.0);
  VectorXcd f = gaussian_packet(g, 20.0, 1.0, 1.0);
  CHECK(nuclear_norm(g, f) == Approx(1.0).epsilon(1e-12));
  CHECK(nuclear_mass_near_boundary(g, f) < 1e-8);
}
