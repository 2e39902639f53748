#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "wfcpl/accel.hpp"

using namespace wfcpl;

namespace {

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidConfig;
}

SecantHistory history_of(std::vector<Vector> V, std::vector<Vector> W) {
  SecantHistory h;
  h.V = std::move(V);
  h.W = std::move(W);
  return h;
}

AccelConfig unweighted() {
  AccelConfig c;
  c.weighting = Weighting::None;
  return c;
}

// Runs the accelerated fixed point iteration of H(x) = Ax + b and returns the
// number of H evaluations needed to reach ||H(x) - x|| < tol.
std::size_t qn_iterations(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, AccelConfig cfg, double tol,
                          std::size_t max_it, const Eigen::VectorXd* expected = nullptr) {
  const auto d = static_cast<std::size_t>(b.size());
  Accelerator acc(cfg, 1, d);
  Vector x(d, 0.0);
  for (std::size_t k = 1; k <= max_it; ++k) {
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), b.size());
    const Eigen::VectorXd hx = A * xv + b;
    const Vector x_tilde(hx.data(), hx.data() + hx.size());
    if ((hx - xv).norm() < tol) {
      if (expected) {
        EXPECT_LT((xv - *expected).norm(), 1e-10);
      }
      return k;
    }
    x = acc.next(x, x_tilde);
  }
  return max_it + 1;
}

}  // namespace

TEST(ViewResidual, Examples) {
  const Vector n{1, 2, 3}, o{0, 0, 0};
  EXPECT_EQ(view_residual(n, o, 1, ResidualView::AllSubsteps), (Vector{1, 2, 3}));
  EXPECT_EQ(view_residual(n, o, 1, ResidualView::LastSubstep), Vector{3});
  EXPECT_EQ(view_residual(n, o, 1, ResidualView::EndValue), Vector{3});
  const Vector a{1, 2}, b{0.5, 0.5};
  EXPECT_EQ(view_residual(a, b, 2, ResidualView::AllSubsteps), view_residual(a, b, 2, ResidualView::LastSubstep));
  EXPECT_EQ(code_of([&] { view_residual(n, o, 2, ResidualView::AllSubsteps); }), ErrorCode::LayoutMismatch);
  EXPECT_EQ(code_of([&] { view_residual(n, Vector{0, 0}, 1, ResidualView::AllSubsteps); }), ErrorCode::LayoutMismatch);
}

TEST(Relax, Examples) {
  EXPECT_EQ(relax(Vector{7.0}, Vector{0.1}, 1.0), Vector{0.1});
  EXPECT_EQ(relax(Vector{0.0}, Vector{2.0}, 0.5), Vector{1.0});
  EXPECT_EQ(code_of([] { relax(Vector{0.0}, Vector{1.0, 2.0}, 0.5); }), ErrorCode::LengthMismatch);
  EXPECT_EQ(code_of([] { relax(Vector{0.0}, Vector{1.0}, 0.0); }), ErrorCode::InvalidConfig);
}

TEST(Relax, LinearRecurrenceContractsByThreeQuarters) {
  double x = 0.0;
  double err = 2.0;
  for (int k = 0; k < 30; ++k) {
    x = relax(Vector{x}, Vector{0.5 * x + 1.0}, 0.5)[0];
    const double e = std::abs(x - 2.0);
    EXPECT_NEAR(e / err, 0.75, 1e-9);
    err = e;
  }
}

TEST(QnAppend, DifferenceColumns) {
  SecantHistory h;
  qn_append(h, Vector{2.0}, Vector{1.0});
  EXPECT_EQ(h.columns(), 0u);
  qn_append(h, Vector{3.0}, Vector{0.5});
  ASSERT_EQ(h.columns(), 1u);
  EXPECT_EQ(h.V[0], Vector{-0.5});
  EXPECT_EQ(h.W[0], Vector{1.0});
  qn_append(h, Vector{5.0}, Vector{0.25});
  ASSERT_EQ(h.columns(), 2u);
  EXPECT_EQ(h.W[1], Vector{2.0});
  EXPECT_EQ(code_of([&] { qn_append(h, Vector{1.0, 2.0}, Vector{0.1, 0.2}); }), ErrorCode::DimensionChange);
}

TEST(QnSolve, SingleColumnNormalEquation) {
  auto h = history_of({{1.0, 0.0}}, {{3.0, -1.0}});
  const Vector dx = qn_solve(h, Vector{2.0, 2.0}, unweighted());
  EXPECT_NEAR(dx[0], -6.0, 1e-15);
  EXPECT_NEAR(dx[1], 2.0, 1e-15);
}

TEST(QnSolve, OrthonormalColumns) {
  const double s = 1.0 / std::sqrt(2.0);
  auto h = history_of({{s, s, 0.0}, {s, -s, 0.0}}, {{1.0, 0.0}, {0.0, 1.0}});
  const Vector R{1.0, 3.0, 5.0};
  const Vector dx = qn_solve(h, R, unweighted());
  EXPECT_NEAR(dx[0], -(s * 1.0 + s * 3.0), 1e-14);
  EXPECT_NEAR(dx[1], -(s * 1.0 - s * 3.0), 1e-14);
}

TEST(QnSolve, Errors) {
  SecantHistory empty;
  EXPECT_EQ(code_of([&] { qn_solve(empty, Vector{1.0}, unweighted()); }), ErrorCode::EmptyHistory);
  auto zero = history_of({{0.0, 0.0}}, {{1.0}});
  EXPECT_EQ(code_of([&] { qn_solve(zero, Vector{1.0, 1.0}, unweighted()); }), ErrorCode::RankDeficient);
}

TEST(QnSolve, LinearFixedPointTerminates) {
  Eigen::MatrixXd A = Eigen::Vector3d(0.9, 0.5, 0.1).asDiagonal();
  const Eigen::VectorXd b = Eigen::Vector3d(1, 1, 1);
  const Eigen::VectorXd exact = (Eigen::MatrixXd::Identity(3, 3) - A).lu().solve(b);
  // Four QN updates: the fifth evaluation of H sees ||R|| < 1e-12.
  EXPECT_LE(qn_iterations(A, b, unweighted(), 1e-12, 50, &exact), 5u);
}

TEST(Qr2Filter, Examples) {
  auto same = history_of({{1.0, 2.0}, {1.0, 2.0}}, {{1.0}, {2.0}});
  auto f = qr2_filter(same, 1e-3);
  EXPECT_EQ(f.rank(), 1u);
  EXPECT_EQ(same.columns(), 1u);
  EXPECT_EQ(same.W.size(), 1u);
  EXPECT_EQ(same.W[0], Vector{2.0});  // the newest survives

  auto ortho = history_of({{1.0, 0.0}, {0.0, 1.0}}, {{1.0}, {2.0}});
  EXPECT_EQ(qr2_filter(ortho, 0.999).rank(), 2u);

  // Newest column [1,0] first; [1,1e-4] then leaves a 1e-4 remainder.
  auto near = history_of({{1.0, 1e-4}, {1.0, 0.0}}, {{7.0}, {8.0}});
  f = qr2_filter(near, 1e-3);
  EXPECT_EQ(f.rank(), 1u);
  ASSERT_EQ(near.columns(), 1u);
  EXPECT_EQ(near.V[0], (Vector{1.0, 0.0}));
  EXPECT_EQ(near.W[0], Vector{8.0});
  EXPECT_EQ(f.order, std::vector<std::size_t>{0});
}

TEST(Qr2Filter, KeepsVAndWInStep) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 50; ++trial) {
    SecantHistory h;
    for (int c = 0; c < 6; ++c) {
      Vector v(4), w(3);
      for (auto& x : v) x = nd(rng);
      for (auto& x : w) x = nd(rng);
      if (c % 3 == 2) v = h.V.back();
      h.V.push_back(v);
      h.W.push_back(w);
    }
    const auto f = qr2_filter(h, 1e-3);
    EXPECT_EQ(h.V.size(), h.W.size());
    EXPECT_EQ(f.rank(), h.columns());
    EXPECT_LE(f.rank(), 4u);
  }
}

TEST(ResidualSumWeights, Examples) {
  EXPECT_EQ(residual_sum_weights(Vector{2.0, 4.0}), (Vector{0.5, 0.25}));
  EXPECT_EQ(residual_sum_weights(Vector{0.0})[0], 1.0 / kWeightFloor);

  SecantHistory h;
  h.block_layout = {1, 1};
  h.accumulate_residual(Vector{1.0, 3.0});
  h.accumulate_residual(Vector{1.0, 1.0});
  EXPECT_EQ(h.residual_sums, (Vector{2.0, 4.0}));
  EXPECT_EQ(row_scaling(h, residual_sum_weights(h.residual_sums)), (Vector{0.5, 0.25}));
}

TEST(ResidualSumWeights, UniformScalingLeavesSolutionUnchanged) {
  const std::vector<Vector> V{{1.0, 2.0, 0.5, -1.0}, {0.3, -1.0, 2.0, 0.1}};
  const std::vector<Vector> W{{1.0, 0.0}, {0.0, 1.0}};
  const Vector R{0.2, -0.4, 1.0, 0.7};

  auto plain = history_of(V, W);
  const Vector a = qn_solve(plain, R, unweighted());

  auto single = history_of(V, W);
  single.block_layout = {4};
  single.residual_sums = {3.7};
  AccelConfig weighted;
  const Vector b = qn_solve(single, R, weighted);

  auto equal = history_of(V, W);
  equal.block_layout = {2, 2};
  equal.residual_sums = {5.0, 5.0};
  const Vector c = qn_solve(equal, R, weighted);

  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i], b[i], 1e-12);
    EXPECT_NEAR(a[i], c[i], 1e-12);
  }
}

TEST(QnSolveProperty, NormalEquationsOfWeightedSystem) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> pos(0.1, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t blocks = 1 + trial % 4, block = 1 + trial % 3, r = blocks * block;
    const std::size_t k = 1 + static_cast<std::size_t>(trial) % std::min<std::size_t>(r, 5);
    SecantHistory h;
    for (std::size_t c = 0; c < k; ++c) {
      Vector v(r), w(r);
      for (auto& x : v) x = nd(rng);
      for (auto& x : w) x = nd(rng);
      h.V.push_back(v);
      h.W.push_back(w);
    }
    h.block_layout.assign(blocks, block);
    h.residual_sums.resize(blocks);
    for (auto& s : h.residual_sums) s = pos(rng);
    Vector R(r);
    for (auto& x : R) x = nd(rng);

    SecantHistory filtered = h;
    const Vector rows = row_scaling(h, residual_sum_weights(h.residual_sums));
    const auto f = qr2_filter(filtered, 1e-3, rows);

    const Vector dx = qn_solve(h, R, AccelConfig{});
    ASSERT_EQ(h.columns(), f.rank());
    // Recover alpha from dx = W alpha using the kept W columns.
    Eigen::MatrixXd Wm(r, static_cast<Eigen::Index>(h.columns())), Vm(r, Wm.cols());
    for (std::size_t c = 0; c < h.columns(); ++c) {
      for (std::size_t i = 0; i < r; ++i) {
        Wm(i, c) = h.W[c][i];
        Vm(i, c) = h.V[c][i] * rows[i];
      }
    }
    const Eigen::VectorXd alpha = Wm.colPivHouseholderQr().solve(Eigen::Map<const Eigen::VectorXd>(dx.data(), r));
    Eigen::VectorXd Rf(r);
    for (std::size_t i = 0; i < r; ++i) Rf[i] = R[i] * rows[i];
    const double lhs = (Vm.transpose() * (Vm * alpha + Rf)).norm();
    EXPECT_LE(lhs, 1e-10 * Rf.norm() * std::max(1.0, Vm.norm())) << "trial " << trial;
  }
}

TEST(AcceleratorProperty, LinearFiniteTermination) {
  std::mt19937_64 rng(1234);
  std::normal_distribution<double> nd;
  for (int d = 1; d <= 6; ++d) {
    for (int trial = 0; trial < 20; ++trial) {
      // A = Q diag(lambda) Q^T with spectral radius < 1.
      Eigen::MatrixXd M(d, d);
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) M(i, j) = nd(rng);
      }
      const Eigen::MatrixXd Q = M.householderQr().householderQ();
      Eigen::VectorXd lambda(d), b(d);
      for (int i = 0; i < d; ++i) {
        lambda[i] = 0.9 * std::tanh(nd(rng));
        b[i] = nd(rng);
      }
      const Eigen::MatrixXd A = Q * lambda.asDiagonal() * Q.transpose();
      AccelConfig cfg = unweighted();
      cfg.qr2_epsilon = 1e-14;
      // d+1 accelerated iterates, hence at most d+2 evaluations of H.
      EXPECT_LE(qn_iterations(A, b, cfg, 1e-12, 40), static_cast<std::size_t>(d + 2)) << "d=" << d;
    }
  }
}

TEST(Accelerator, FullFpAndFirstIterationRelaxation) {
  AccelConfig fp;
  fp.scheme = AccelScheme::FullFP;
  Accelerator a(fp, 1, 2);
  EXPECT_EQ(a.next(Vector{0, 0}, Vector{3, 4}), (Vector{3, 4}));

  Accelerator q(AccelConfig{}, 1, 2);
  EXPECT_EQ(q.next(Vector{0, 0}, Vector{2, 4}), (Vector{1, 2}));
  EXPECT_EQ(q.history().columns(), 0u);
  q.next(Vector{1, 2}, Vector{1.5, 2.5});
  EXPECT_EQ(q.history().columns(), 1u);
  q.reset();
  EXPECT_EQ(q.history().columns(), 0u);
  EXPECT_EQ(q.history().residual_sums, (Vector{0.0, 0.0}));

  EXPECT_EQ(code_of([&] { q.next(Vector{0}, Vector{1}); }), ErrorCode::LayoutMismatch);
}
