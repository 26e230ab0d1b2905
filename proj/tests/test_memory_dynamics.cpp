#include "boalab/memory_dynamics.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace boalab;
using Catch::Approx;

namespace {

struct Lab {
  NuclearGrid grid;
  FiberedMultOp H;
  EigenBundle b;
  double kappa;
  Propagator U;          // full dynamics
  VectorXcd f0;
  FiberedState psi0_f0;

  Lab(ModelKind kind, int n, double kappa_) : kappa(kappa_) {
    grid = make_grid(1, n, 16.0);
    ModelSpec spec;
    spec.kind = kind;
    spec.d = 2;
    spec.delta_floor = 1.0;
    spec.coupling = (kind == ModelKind::decoupled) ? 0.0 : 0.5;
    H = build_model(spec, grid);
    b = diagonalize_fibers(H);
    U = make_propagator(assemble_H_kappa(H, kappa), kappa);
    f0 = gaussian_packet(grid, 8.0, 1.0, 1.0);
    psi0_f0 = embed(b.psi0, f0);
  }

  // exact projected full solution on a uniform grid
  TimeGridPath projected_path(double tau, double dt) const {
    TimeGridPath p = make_path(tau, dt);
    for (long j = 0; j < p.nodes(); ++j) {
      FiberedState ev = U.evolve(psi0_f0, p.times[j]);
      p.values[j] = fiber_project(ev, b.psi0);
    }
    return p;
  }
};

} // namespace

TEST_CASE("memory kernel basics") {
  Lab lab(ModelKind::avoided_crossing, 64, 0.1);
  auto cache = make_kernel_cache(lab.H, lab.b, lab.kappa, 1.0 / 128);

  SECTION("zero time-lag kernel is Hermitian and finite") {
    MatrixXcd k0 = cache.kernel_matrix(0);
    CHECK(k0.allFinite());
    CHECK((k0 - k0.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("w at t = 0 is exactly zero") {
    auto f = lab.projected_path(0.25, 1.0 / 128);
    CHECK(memory_w(f, 0, cache).norm() == 0.0);
  }

  SECTION("decoupled model: memory vanishes identically") {
    Lab dec(ModelKind::decoupled, 64, 0.1);
    auto dcache = make_kernel_cache(dec.H, dec.b, dec.kappa, 1.0 / 128);
    auto f = dec.projected_path(0.25, 1.0 / 128);
    CHECK(memory_w(f, f.nodes() - 1, dcache).norm() < 1e-14);
  }

  SECTION("causality: future values do not affect w(t)") {
    auto f = lab.projected_path(0.5, 1.0 / 128);
    const long mid = (f.nodes() - 1) / 2;
    const VectorXcd before = memory_w(f, mid, cache);
    for (long j = mid + 1; j < f.nodes(); ++j)
      f.values[j].setConstant(Complex(7.0, -3.0));
    const VectorXcd after = memory_w(f, mid, cache);
    CHECK((before - after).norm() == 0.0);
  }
}

TEST_CASE("memory kernel Richardson self-convergence") {
  Lab lab(ModelKind::avoided_crossing, 64, 0.1);
  const double tau = 0.5;
  // reference at dt/8
  auto eval_w = [&](double dt) {
    auto cache = make_kernel_cache(lab.H, lab.b, lab.kappa, dt);
    auto f = lab.projected_path(tau, dt);
    return memory_w(f, f.nodes() - 1, cache);
  };
  const double dt = 1.0 / 256;
  const VectorXcd w1 = eval_w(dt);
  const VectorXcd w2 = eval_w(dt / 2);
  const VectorXcd wref = eval_w(dt / 8);
  const double e1 = (w1 - wref).norm();
  const double e2 = (w2 - wref).norm();
  // trapezoid: errors vs a dt/8 reference shrink by (4 - 1/16-ish) ~ 4
  CHECK(e1 / e2 == Approx(4.0).epsilon(0.30));
}

TEST_CASE("nonlocal solver") {
  const double kappa = 0.1;

  SECTION("decoupled model equals the exact local propagator") {
    Lab dec(ModelKind::decoupled, 64, kappa);
    auto cache = make_kernel_cache(dec.H, dec.b, kappa, 1.0 / 8192);
    auto heff = build_heff(dec.b, dec.grid, kappa, 1);
    const double tau = 0.5;
    auto path = solve_nonlocal(dec.f0, tau, 1.0 / 8192, heff, cache);
    auto Ueff = make_heff_propagator(heff);
    const VectorXcd exact = Ueff.evolve_vec(dec.f0, tau);
    CHECK((path.values.back() - exact).norm() * std::sqrt(
              dec.grid.quad_weight()) < 1e-8);
  }

  SECTION("tau = 0 returns the initial value only") {
    Lab lab(ModelKind::avoided_crossing, 64, kappa);
    auto cache = make_kernel_cache(lab.H, lab.b, kappa, 1.0 / 64);
    auto heff = build_heff(lab.b, lab.grid, kappa, 1);
    auto path = solve_nonlocal(lab.f0, 0.0, 1.0 / 64, heff, cache);
    CHECK(path.nodes() == 1);
    CHECK((path.values[0] - lab.f0).norm() == 0.0);
  }

  SECTION("stability precondition rejects large dt") {
    Lab lab(ModelKind::avoided_crossing, 64, kappa);
    auto cache = make_kernel_cache(lab.H, lab.b, kappa, 0.25);
    auto heff = build_heff(lab.b, lab.grid, kappa, 1);
    CHECK_THROWS_AS(solve_nonlocal(lab.f0, 1.0, 0.25, heff, cache),
                    std::invalid_argument);
  }

  SECTION("equivalence with projected full dynamics, both directions") {
    Lab lab(ModelKind::avoided_crossing, 64, kappa);
    auto heff = build_heff(lab.b, lab.grid, kappa, 1);
    const double tau = 1.0;
    const double qw = std::sqrt(lab.grid.quad_weight());

    auto run = [&](double dt) {
      auto cache = make_kernel_cache(lab.H, lab.b, kappa, dt);
      auto path = solve_nonlocal(lab.f0, tau, dt, heff, cache);
      // direction 1: f_solver vs <psi0, U_t psi0 f0>
      FiberedState full = lab.U.evolve(lab.psi0_f0, tau);
      const VectorXcd fproj = fiber_project(full, lab.b.psi0);
      const double d1 = qw * (path.values.back() - fproj).norm();
      // direction 2: Q_P f_solver vs U_t psi0 f0
      FiberedState qp = reconstruct_QP(path, lab.b, cache.pc);
      const double d2 = qw * (qp.data - full.data).norm();
      return std::make_pair(d1, d2);
    };

    auto [d1a, d2a] = run(1.0 / 256);
    auto [d1b, d2b] = run(1.0 / 512);
    CHECK(d1a < 1e-4);
    CHECK(d2a < 1e-4);
    // second-order self-convergence
    CHECK(d1a / d1b > 3.0);
    CHECK(d1a / d1b < 5.0);
    CHECK(d2a / d2b > 3.0);
    CHECK(d2a / d2b < 5.0);
  }
}

TEST_CASE("Q_P reconstruction") {
  const double kappa = 0.1;

  SECTION("decoupled: Q_P f = psi0 f exactly") {
    Lab dec(ModelKind::decoupled, 64, kappa);
    auto pc = make_projected_coupling(dec.H, dec.b, kappa);
    auto f = dec.projected_path(0.5, 1.0 / 64);
    FiberedState qp = reconstruct_QP(f, dec.b, pc);
    FiberedState direct = embed(dec.b.psi0, f.values.back());
    CHECK((qp.data - direct.data).norm() < 1e-13);
  }

  SECTION("single-node path returns psi0 f0") {
    Lab lab(ModelKind::avoided_crossing, 64, kappa);
    auto pc = make_projected_coupling(lab.H, lab.b, kappa);
    TimeGridPath p;
    p.dt = 0.1;
    p.times = {0.0};
    p.values = {lab.f0};
    FiberedState qp = reconstruct_QP(p, lab.b, pc);
    CHECK((qp.data - lab.psi0_f0.data).norm() < 1e-14);
  }
}

TEST_CASE("expansion terms and the defining identity") {
  const double kappa = 0.1;

  SECTION("decoupled: all terms vanish") {
    Lab dec(ModelKind::decoupled, 64, kappa);
    auto ctx = make_expansion_context(dec.H, dec.b, kappa);
    auto f = dec.projected_path(0.5, 1.0 / 64);
    auto terms = expansion_terms(f, dec.f0, f.nodes() - 1, dec.b, ctx);
    CHECK(terms.w1_f.norm() < 1e-13);
    CHECK(terms.w1t_f0.norm() < 1e-13);
    CHECK(terms.w2k_f.norm() < 1e-13);
  }

  SECTION("t = 0: w_1 f(0) = w~_1(0) f_0") {
    Lab lab(ModelKind::avoided_crossing, 64, kappa);
    auto ctx = make_expansion_context(lab.H, lab.b, kappa);
    auto f = lab.projected_path(0.25, 1.0 / 64);
    auto terms = expansion_terms(f, lab.f0, 0, lab.b, ctx);
    CHECK((terms.w1_f - terms.w1t_f0).norm() < 1e-13);
  }

  SECTION("w^k[f](t) = (-ik)^2 (w_1 f - w~_1 f_0) + (-ik)^3 w_2^k[f]") {
    Lab lab(ModelKind::avoided_crossing, 64, kappa);
    auto ctx = make_expansion_context(lab.H, lab.b, kappa);
    const double tau = 0.5;
    const double qw = std::sqrt(lab.grid.quad_weight());

    auto residual = [&](double dt) {
      auto cache = MemoryKernelCache{ctx.pc, dt};
      auto f = lab.projected_path(tau, dt);
      const long n = f.nodes() - 1;
      const VectorXcd w = memory_w(f, n, cache);
      auto terms = expansion_terms(f, lab.f0, n, lab.b, ctx);
      const Complex mik(0.0, -kappa);
      const VectorXcd recon = mik * mik * (terms.w1_f - terms.w1t_f0) +
                              mik * mik * mik * terms.w2k_f;
      return qw * (w - recon).norm();
    };

    const double r1 = residual(1.0 / 256);
    const double r2 = residual(1.0 / 512);
    CHECK(r1 < 1e-6);
    // both sides share the trapezoid order; residual shrinks ~4x
    CHECK(r1 / r2 > 2.5);
    CHECK(r1 / r2 < 6.0);
  }
}
