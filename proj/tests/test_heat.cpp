#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "wfcpl/heat.hpp"
#include "wfcpl/orchestrator.hpp"

using namespace wfcpl;
using namespace wfcpl::heat;

namespace {

ManufacturedSolution pol(int alpha) { return {ManufacturedSolution::Kind::Pol, alpha}; }
ManufacturedSolution tri() { return {ManufacturedSolution::Kind::Tri, 1}; }

HeatSetup setup_of(Side side, Integrator integ, ManufacturedSolution ms) {
  HeatSetup s;
  s.side = side;
  s.integrator = integ;
  s.msol = ms;
  return s;
}

// The exact data one side receives on x = 1: temperature for the Dirichlet
// solver, du/dx for the Neumann solver. Degree `p` with p substeps.
Waveform exact_boundary(Side side, const ManufacturedSolution& ms, const TimeWindow& w, std::size_t p,
                        std::size_t cells = 20) {
  std::vector<Vector> vals;
  for (std::size_t i = 0; i <= p; ++i) {
    const double t = w.substep_time(i, p);
    Vector v(cells + 1);
    for (std::size_t j = 0; j <= cells; ++j) {
      const double y = static_cast<double>(j) / static_cast<double>(cells);
      v[j] = side == Side::Dirichlet ? u_exact(1.0, y, t, ms) : 2.0 * ms.g(t);
    }
    vals.push_back(v);
  }
  return build_waveform(make_samples(w, vals), p);
}

double fd_residual(double x, double y, double t, const ManufacturedSolution& ms) {
  const double e = 1e-4;
  // Quadratic in space, so a wide second difference loses nothing but roundoff.
  const double h = 1e-2;
  const double ut = (u_exact(x, y, t + e, ms) - u_exact(x, y, t - e, ms)) / (2 * e);
  const double uxx = (u_exact(x + h, y, t, ms) - 2 * u_exact(x, y, t, ms) + u_exact(x - h, y, t, ms)) / (h * h);
  const double uyy = (u_exact(x, y + h, t, ms) - 2 * u_exact(x, y, t, ms) + u_exact(x, y - h, t, ms)) / (h * h);
  return ut - uxx - uyy - source_f(x, y, t, ms);
}

}  // namespace

TEST(ManufacturedSolution, Values) {
  EXPECT_EQ(u_exact(0, 0, 0, tri()), 1.0);
  EXPECT_EQ(u_exact(0, 0, 0, pol(2)), 1.0);
  EXPECT_EQ(u_exact(1, 1, 0, tri()), 4.0);
  EXPECT_DOUBLE_EQ(u_exact(2, 0, 1, pol(1)), 1.0 + 2.0 * 4.0 + 1.2);
  EXPECT_DOUBLE_EQ(source_f(0, 0, 0, pol(1)), -6.8);
  EXPECT_DOUBLE_EQ(source_f(1, 0.3, 0, tri()), -3.8);
}

TEST(ManufacturedSolution, SourceMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (const auto& ms : {tri(), pol(1), pol(2), pol(3)}) {
    for (int k = 0; k < 100; ++k) EXPECT_NEAR(fd_residual(u(rng), u(rng) / 2, u(rng), ms), 0.0, 1e-6);
  }
}

TEST(HeatSolver, FivePointStencil) {
  HeatSolver s(setup_of(Side::Monolithic, Integrator::IE, tri()));
  EXPECT_EQ(s.unknowns(), 39u * 19u);
  EXPECT_EQ(s.interface_size(), 21u);
  const auto& L = s.laplacian();
  const double inv_h2 = 400.0;
  // Unknown of node (i, j) = (j - 1) * 39 + (i - 1) for the monolithic grid.
  const Eigen::Index row = 9 * 39 + 19;
  EXPECT_NEAR(L.coeff(row, row), -4.0 * inv_h2, 1e-9);
  for (Eigen::Index nb : {row - 1, row + 1, row - 39, row + 39}) EXPECT_NEAR(L.coeff(row, nb), inv_h2, 1e-9);
  EXPECT_NEAR(Eigen::VectorXd(L * Eigen::VectorXd::Ones(L.cols()))[row], 0.0, 1e-9);
}

struct ExactCase {
  Integrator integ;
  int alpha;
  std::size_t p;
};

class Exactness : public ::testing::TestWithParam<std::tuple<ExactCase, Side>> {};

TEST_P(Exactness, PropagatesExactSolution) {
  const auto [c, side] = GetParam();
  HeatSetup setup = setup_of(side, c.integ, pol(c.alpha));
  setup.sdc_sweeps = 40;
  HeatSolver s(setup);
  s.set_exact(0.0);
  double t = 0.0;
  for (double dt : {0.1, 0.25, 0.5}) {
    const TimeWindow w(t, dt);
    const Waveform bnd = exact_boundary(side == Side::Dirichlet ? Side::Dirichlet : Side::Neumann, setup.msol, w, c.p);
    s.advance(dt, w.end(), side == Side::Monolithic ? nullptr : &bnd);
    t = w.end();
    EXPECT_LT(s.l2_error(t), 1e-12) << "t=" << t;
  }
}

std::string exact_case_name(const ::testing::TestParamInfo<std::tuple<ExactCase, Side>>& info) {
  static const char* integ[] = {"IE", "TR", "SDC"};
  static const char* sides[] = {"Dirichlet", "Neumann", "Monolithic"};
  return std::string(integ[static_cast<int>(std::get<0>(info.param).integ)]) + "_" +
         sides[static_cast<int>(std::get<1>(info.param))];
}

INSTANTIATE_TEST_SUITE_P(
    Integrators, Exactness,
    ::testing::Combine(::testing::Values(ExactCase{Integrator::IE, 1, 1}, ExactCase{Integrator::TR, 2, 2},
                                         ExactCase{Integrator::SDC, 3, 3}),
                       ::testing::Values(Side::Dirichlet, Side::Neumann, Side::Monolithic)),
    exact_case_name);

TEST(HeatSolver, TrExactForLinearInTime) {
  HeatSetup setup = setup_of(Side::Monolithic, Integrator::TR, pol(0));
  HeatSolver s(setup);
  // alpha = 0: g = 1, so u is linear in t.
  s.set_exact(0.0);
  s.step_tr(0.5, 0.5, nullptr);
  EXPECT_LT(s.l2_error(0.5), 1e-12);
}

TEST(HeatSolver, SdcWithoutSweepsIsTwoEulerHalfSteps) {
  HeatSolver a(setup_of(Side::Monolithic, Integrator::SDC, tri()));
  HeatSolver b(setup_of(Side::Monolithic, Integrator::IE, tri()));
  a.step_sdc(0.4, 0.4, 0, nullptr);
  b.step_ie(0.2, 0.2, nullptr);
  b.step_ie(0.2, 0.4, nullptr);
  for (std::size_t i = 0; i < a.state().u.size(); ++i) EXPECT_NEAR(a.state().u[i], b.state().u[i], 1e-13);
}

TEST(HeatSolver, ImplicitEulerIsFirstOrder) {
  std::vector<double> errs;
  for (std::size_t steps : {4u, 8u, 16u}) {
    HeatSolver s(setup_of(Side::Monolithic, Integrator::IE, tri()));
    const double dt = 1.0 / static_cast<double>(steps);
    for (std::size_t k = 1; k <= steps; ++k) s.step_ie(dt, static_cast<double>(k) * dt, nullptr);
    errs.push_back(s.l2_error(1.0));
  }
  EXPECT_NEAR(errs[0] / errs[1], 2.0, 0.2);
  EXPECT_NEAR(errs[1] / errs[2], 2.0, 0.2);
}

TEST(HeatSolver, SdcIsHighOrder) {
  std::vector<double> errs;
  for (std::size_t steps : {4u, 8u}) {
    HeatSetup setup = setup_of(Side::Monolithic, Integrator::SDC, tri());
    HeatSolver s(setup);
    const double dt = 1.0 / static_cast<double>(steps);
    for (std::size_t k = 1; k <= steps; ++k) s.advance(dt, static_cast<double>(k) * dt, nullptr);
    errs.push_back(s.l2_error(1.0));
  }
  EXPECT_GT(errs[0] / errs[1], 12.0);
}

TEST(HeatSolver, InterfaceExtraction) {
  HeatSolver n(setup_of(Side::Neumann, Integrator::IE, tri()));
  n.set_exact(0.0);
  const Vector temp = n.interface_temperature();
  ASSERT_EQ(temp.size(), 21u);
  EXPECT_EQ(temp[0], 1.0);
  n.set_exact(0.7);
  for (std::size_t j = 0; j <= 20; ++j) {
    EXPECT_NEAR(n.interface_temperature()[j], u_exact(1.0, n.y(j), 0.7, tri()), 1e-15);
  }

  HeatSolver d(setup_of(Side::Dirichlet, Integrator::IE, tri()));
  d.set_exact(0.7);
  for (double f : d.interface_flux()) EXPECT_NEAR(f, 2.0 * std::sin(0.7), 1e-12);

  HeatState linear = d.state();
  for (std::size_t j = 0; j <= d.ny(); ++j) {
    for (std::size_t i = 0; i <= d.nx(); ++i) linear.u[d.node(i, j)] = 3.0 - 1.5 * d.x(i) + d.y(j);
  }
  d.set_state(linear);
  for (double f : d.interface_flux()) EXPECT_NEAR(f, -1.5, 1e-12);
  for (auto& v : linear.u) v = 4.0;
  d.set_state(linear);
  for (double f : d.interface_flux()) EXPECT_NEAR(f, 0.0, 1e-12);

  EXPECT_THROW(d.interface_temperature(), Error);
  try {
    n.interface_flux();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::WrongSide);
  }
}

TEST(HeatSolver, L2ErrorOfConstantOffset) {
  HeatSolver d(setup_of(Side::Dirichlet, Integrator::IE, tri()));
  d.set_exact(0.3);
  EXPECT_EQ(d.l2_error(0.3), 0.0);
  HeatState s = d.state();
  for (auto& v : s.u) v += 0.25;
  d.set_state(s);
  EXPECT_NEAR(d.l2_error(0.3), 0.25, 1e-14);

  HeatSolver n(setup_of(Side::Neumann, Integrator::IE, tri()));
  n.set_exact(0.3);
  HeatState sn = n.state();
  for (auto& v : sn.u) v -= 0.25;
  n.set_state(sn);
  EXPECT_NEAR(l2_error(d, n, 0.3), 0.25 * std::sqrt(2.0), 1e-14);
}

TEST(HeatParticipant, RollbackIsBitIdentical) {
  for (Integrator integ : {Integrator::IE, Integrator::TR, Integrator::SDC}) {
    HeatParticipant p(setup_of(Side::Neumann, integ, tri()), 3);
    const TimeWindow w(0.0, 0.5);
    const Waveform bnd = exact_boundary(Side::Neumann, tri(), w, 3);
    p.checkpoint();
    const SampleSet a = p.solve_window(w, bnd);
    const HeatState after = p.solver().state();
    p.restore();
    const SampleSet b = p.solve_window(w, bnd);
    EXPECT_EQ(a, b);
    EXPECT_EQ(after, p.solver().state());
    EXPECT_EQ(a.substeps(), 3u);
  }
}

TEST(HeatParticipant, RejectsMonolithicAndWrongSizes) {
  EXPECT_THROW(HeatParticipant(setup_of(Side::Monolithic, Integrator::IE, tri()), 1), Error);
  HeatParticipant p(setup_of(Side::Dirichlet, Integrator::IE, tri()), 1);
  const TimeWindow w(0.0, 0.1);
  try {
    p.solve_window(w, constant_extrapolation(Vector(5, 0.0), w));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LayoutMismatch);
  }
}

TEST(HeatCoupled, PartitionedMatchesMonolithicAtTightTolerance) {
  for (Integrator integ : {Integrator::IE, Integrator::TR}) {
    CouplingConfig cfg;
    cfg.dt_window = 0.1;
    cfg.t_end = 0.5;
    cfg.tol_rel = 1e-12;
    HeatParticipant d(setup_of(Side::Dirichlet, integ, pol(1)), 1);
    HeatParticipant n(setup_of(Side::Neumann, integ, pol(1)), 1);
    const auto res = run_simulation(d, n, cfg);
    ASSERT_FALSE(res.aborted);

    HeatSolver mono(setup_of(Side::Monolithic, integ, pol(1)));
    for (std::size_t k = 1; k <= 5; ++k) mono.advance(0.1, static_cast<double>(k) * 0.1, nullptr);
    const double part = l2_error(d.solver(), n.solver(), 0.5);
    EXPECT_LT(std::abs(part - mono.l2_error(0.5)), 1e-10);
    EXPECT_LT(part, 1e-10);
  }
}
