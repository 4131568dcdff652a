#include <random>

#include <gtest/gtest.h>

#include "hjbscan/lqt_par.hpp"
#include "hjbscan/lqt_seq.hpp"
#include "hjbscan/oracle.hpp"
#include "test_support.hpp"

namespace hjbscan {
namespace {

using testing::element_gap;
using testing::kScalarA01;
using testing::kScalarCJ01;

const LqtProblem kScalar = scalar_lqr_problem(1.0);

void expect_scalar_element(const CondValueParams& e, double s, double tau, double tol) {
  const oracle::ScalarCondParams cf = oracle::scalar_cond_params(s, tau);
  EXPECT_NEAR(e.A(0, 0), cf.A, tol);
  EXPECT_NEAR(e.b[0], cf.b, tol);
  EXPECT_NEAR(e.C(0, 0), cf.C, tol);
  EXPECT_NEAR(e.eta[0], cf.eta, tol);
  EXPECT_NEAR(e.J(0, 0), cf.J, tol);
}

TEST(InitElementBackward, ZeroWidthIsIdentity) {
  const CondValueParams e = init_element_backward(kScalar, 0.5, 0.5, 10);
  EXPECT_TRUE(testing::bitwise_equal(e, CondValueParams::identity(1, 0.5)));
}

TEST(InitElementBackward, ScalarUnitBlock) {
  const CondValueParams e = init_element_backward(kScalar, 0.0, 1.0, 1000);
  EXPECT_NEAR(e.C(0, 0), kScalarCJ01, 1e-5);
  EXPECT_NEAR(e.J(0, 0), kScalarCJ01, 1e-5);
  EXPECT_NEAR(e.A(0, 0), kScalarA01, 1e-5);
  EXPECT_EQ(e.b[0], 0.0);
  EXPECT_EQ(e.eta[0], 0.0);
  EXPECT_EQ(e.s, 0.0);
  EXPECT_EQ(e.tau, 1.0);
}

TEST(InitElementBackward, HalfBlocksCombineToUnitBlock) {
  const CondValueParams full = combine(init_element_backward(kScalar, 0.0, 0.5, 500),
                                       init_element_backward(kScalar, 0.5, 1.0, 500));
  expect_scalar_element(full, 0.0, 1.0, 1e-8);
}

TEST(InitElementForward, ZeroWidthIsIdentity) {
  EXPECT_TRUE(testing::bitwise_equal(init_element_forward(kScalar, 0.3, 0.3, 4), CondValueParams::identity(1, 0.3)));
}

TEST(InitElementForward, AgreesWithBackward) {
  const CondValueParams f = init_element_forward(kScalar, 0.0, 1.0, 1000);
  const CondValueParams b = init_element_backward(kScalar, 0.0, 1.0, 1000);
  EXPECT_LE(element_gap(f, b), 1e-6);
  expect_scalar_element(f, 0.0, 1.0, 1e-6);
}

TEST(InitElementForward, InitialSlopeOfC) {
  const LqtProblem p = testing::default_tracking_problem();
  const CondValueParams id = CondValueParams::identity(4, 2.0);
  const VectorXd d = conditional_forward_derivative(p, 2.0, detail::pack_cond(id));
  const Eigen::Map<const MatrixXd> dC(d.data() + 16 + 4, 4, 4);
  const MatrixXd K = p.L(2.0) * p.U(2.0).llt().solve(p.L(2.0).transpose());
  EXPECT_LT((dC - K).norm(), 1e-14);
}

TEST(InitElement, TrackingBlocksAreSymmetricPsd) {
  const LqtProblem p = testing::default_tracking_problem();
  for (auto init : {&init_element_backward, &init_element_forward}) {
    const CondValueParams e = init(p, 10.0, 10.5, 40, 0);
    for (const MatrixXd* m : {&e.C, &e.J}) {
      EXPECT_EQ((*m - m->transpose()).norm(), 0.0);
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(*m);
      EXPECT_GE(es.eigenvalues().minCoeff(), -1e-9 * testing::max_abs(*m));
    }
  }
}

TEST(InitElement, NonFiniteErrorNamesBlock) {
  LqtProblem p = scalar_lqr_problem(1.0);
  p.X = [](double t) { return MatrixXd::Constant(1, 1, t > 0.2 ? std::nan("") : 1.0); };
  try {
    init_element_backward(p, 0.0, 1.0, 10, 7);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("block 7"), std::string::npos);
  }
}

TEST(FinalElement, ZeroTerminalWeight) {
  const CondValueParams e = final_element(scalar_lqr_problem(0.0), 1.0);
  EXPECT_EQ(e.A.norm() + e.b.norm() + e.C.norm() + e.eta.norm() + e.J.norm(), 0.0);
  EXPECT_TRUE(e.terminal);
}

TEST(FinalElement, ScalarTerminalWeight) {
  const CondValueParams e = final_element(scalar_lqr_problem(1.7), 1.0);
  EXPECT_EQ(e.J(0, 0), 1.7);
  EXPECT_EQ(e.eta[0], 0.0);
}

TEST(FinalElement, TrackingIsIdentityWeight) {
  const LqtProblem p = testing::default_tracking_problem();
  const CondValueParams e = final_element(p, 50.0);
  EXPECT_TRUE(e.J.isIdentity());
  EXPECT_TRUE(e.eta.isApprox(p.rf));
  EXPECT_EQ(e.A.norm(), 0.0);
}

TEST(Combine, IdentityIsExactOnBothSides) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const CondValueParams e = testing::random_element(rng, 3, 1.0, 2.0);
    const CondValueParams left = combine(CondValueParams::identity(3, 1.0), e);
    const CondValueParams right = combine(e, CondValueParams::identity(3, 2.0));
    EXPECT_TRUE(testing::bitwise_equal(left, e));
    EXPECT_TRUE(testing::bitwise_equal(right, e));
  }
}

TEST(Combine, AssociativeOnRandomTriples) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 5;
    const CondValueParams a = testing::random_element(rng, n, 0.0, 1.0);
    const CondValueParams b = testing::random_element(rng, n, 1.0, 2.0);
    const CondValueParams c = testing::random_element(rng, n, 2.0, 3.0);
    ASSERT_LE(element_gap(combine(combine(a, b), c), combine(a, combine(b, c))), 1e-8) << "trial " << trial;
  }
}

TEST(Combine, WithFinalElementGivesValueFunction) {
  const oracle::ScalarLqrClosedForm cf(1.0, 1.0);
  for (double t : {0.0, 0.25, 0.5, 0.9}) {
    const oracle::ScalarCondParams c = oracle::scalar_cond_params(t, 1.0);
    const CondValueParams e{MatrixXd::Constant(1, 1, c.A), VectorXd::Zero(1), MatrixXd::Constant(1, 1, c.C),
                            VectorXd::Zero(1), MatrixXd::Constant(1, 1, c.J), t, 1.0, false};
    const CondValueParams out = combine(e, final_element(kScalar, 1.0));
    EXPECT_EQ(out.A(0, 0), 0.0);
    EXPECT_EQ(out.b[0], 0.0);
    EXPECT_EQ(out.C(0, 0), 0.0);
    EXPECT_NEAR(out.J(0, 0), cf.S(t), 1e-10);
    EXPECT_EQ(out.eta[0], 0.0);
    EXPECT_TRUE(out.terminal);
  }
}

TEST(Combine, RejectsNonAdjacentIntervals) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(combine(testing::random_element(rng, 2, 0, 1), testing::random_element(rng, 2, 1.5, 2)),
               std::invalid_argument);
}

TEST(Combine, IllConditionedCarriesEstimate) {
  // I + C1 J2 = 1 - 1 = 0 needs C1 J2 = -1, which valid PSD elements never
  // produce; build it directly.
  CondValueParams a = CondValueParams::identity(1, 0.0);
  a.tau = 1.0;
  a.C(0, 0) = -1.0;
  CondValueParams b = CondValueParams::identity(1, 1.0);
  b.tau = 2.0;
  b.J(0, 0) = 1.0;
  try {
    combine(a, b);
    FAIL() << "expected IllConditionedError";
  } catch (const IllConditionedError& e) {
    EXPECT_GT(e.condition_estimate(), kMaxConditionEstimate);
  }
}

TEST(BackwardValuePass, SingleBlockMatchesSequential) {
  const LqtProblem p = testing::default_tracking_problem(2.0);
  const TimeGrid grid = make_uniform_grid(0.0, 2.0, 1, 20);
  const auto par = backward_value_pass(p, grid, Execution{});
  const auto seq = riccati_backward(p, grid);
  EXPECT_LE(testing::rel_gap(par.edge_values[0].S, seq.node(0).S), 1e-6);
  EXPECT_LE(testing::rel_gap(par.edge_values[0].v, seq.node(0).v), 1e-6);
}

TEST(BackwardValuePass, ScalarSixteenBlocksMatchClosedForm) {
  const oracle::ScalarLqrClosedForm cf(1.0, 1.0);
  const TimeGrid grid = make_uniform_grid(0.0, 1.0, 16, 10);
  for (auto init : {ElementInit::kBackward, ElementInit::kForward}) {
    const auto r = backward_value_pass(kScalar, grid, Execution{}, init);
    ASSERT_EQ(r.edge_values.size(), 17u);
    for (int k = 0; k <= 16; ++k) {
      EXPECT_NEAR(r.edge_values[k].S(0, 0), cf.S(grid.edge(k)), 1e-6 * cf.S(grid.edge(k)));
      EXPECT_EQ(r.edge_values[k].t, grid.edge(k));
    }
  }
}

TEST(BackwardValuePass, TrackingMatchesSequentialAtEdges) {
  const LqtProblem p = testing::default_tracking_problem();
  const TimeGrid grid = make_uniform_grid(0.0, 50.0, 100, 10);
  WorkerPool pool(2);
  const auto r = backward_value_pass(p, grid, Execution{Backend::kParallel, &pool});
  const auto seq = riccati_backward(p, grid);
  double gap_S = 0.0, gap_v = 0.0, scale_S = 0.0, scale_v = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const ValueParams& s = seq.node(k * 10);
    gap_S = std::max(gap_S, testing::max_abs(r.edge_values[k].S - s.S));
    gap_v = std::max(gap_v, testing::max_abs(r.edge_values[k].v - s.v));
    scale_S = std::max(scale_S, testing::max_abs(s.S));
    scale_v = std::max(scale_v, testing::max_abs(s.v));
  }
  EXPECT_LE(gap_S / scale_S, 1e-6);
  EXPECT_LE(gap_v / scale_v, 1e-6);
  EXPECT_EQ(r.stats.up_sweep_levels, scan_depth(101));
}

TEST(BackwardValuePass, TerminalSuffixesHaveZeroABC) {
  const LqtProblem p = testing::default_tracking_problem(5.0);
  const auto r = backward_value_pass(p, make_uniform_grid(0.0, 5.0, 13, 5), Execution{});
  for (const auto& e : r.suffixes) {
    const double scale = std::max(1.0, testing::max_abs(e.J));
    EXPECT_LE(testing::max_abs(e.A), 1e-9 * scale);
    EXPECT_LE(testing::max_abs(e.b), 1e-9 * scale);
    EXPECT_LE(testing::max_abs(e.C), 1e-9 * scale);
    EXPECT_TRUE(e.terminal);
  }
}

TEST(ForwardConditionalPass, HeadIsFirstElement) {
  const auto r = forward_conditional_pass(kScalar, make_uniform_grid(0.0, 1.0, 4, 10), Execution{});
  EXPECT_TRUE(testing::bitwise_equal(r.prefixes.front(), r.elements.front()));
}

TEST(ForwardConditionalPass, ScalarFullIntervalClosedForm) {
  const auto r = forward_conditional_pass(kScalar, make_uniform_grid(0.0, 1.0, 8, 10), Execution{});
  expect_scalar_element(r.prefixes.back(), 0.0, 1.0, 1e-8);
  for (int k = 0; k < 8; ++k) expect_scalar_element(r.prefixes[k], 0.0, (k + 1) / 8.0, 1e-8);
}

TEST(ForwardConditionalPass, TrackingReassociation) {
  const LqtProblem p = testing::default_tracking_problem();
  const auto elems = block_elements(p, make_uniform_grid(0.0, 50.0, 100, 10), ElementInit::kBackward, Execution{});
  for (int j : {0, 40, 97}) {
    const CondValueParams l = combine(combine(elems[j], elems[j + 1]), elems[j + 2]);
    const CondValueParams r = combine(elems[j], combine(elems[j + 1], elems[j + 2]));
    EXPECT_LE(element_gap(l, r), 1e-8) << "block " << j;
  }
}

TEST(ForwardConditionalPass, ParallelBitwiseEqualsSequential) {
  const LqtProblem p = testing::default_tracking_problem();
  const TimeGrid grid = make_uniform_grid(0.0, 50.0, 37, 4);
  WorkerPool pool(3);
  const auto seq = forward_conditional_pass(p, grid, Execution{});
  const auto par = forward_conditional_pass(p, grid, Execution{Backend::kParallel, &pool});
  for (std::size_t k = 0; k < seq.prefixes.size(); ++k) {
    ASSERT_TRUE(testing::bitwise_equal(seq.prefixes[k], par.prefixes[k])) << k;
  }
}

TEST(DensifyBlock, SingleStepIsEdgePlusOneStep) {
  const TimeGrid grid = make_uniform_grid(0.0, 1.0, 1, 1);
  const ValueParams edge = terminal_value(kScalar, 1.0);
  const ValueSequence d = densify_block(kScalar, edge, grid, 0);
  ASSERT_EQ(d.num_nodes(), 2);
  EXPECT_EQ(d.node(1).S, edge.S);
  EXPECT_EQ(d.node(0).t, 0.0);
}

TEST(DensifyBlock, MatchesSequentialSweep) {
  const LqtProblem p = testing::default_tracking_problem();
  const TimeGrid grid = make_uniform_grid(0.0, 50.0, 100, 10);
  const auto seq = riccati_backward(p, grid);
  // Start each block from the sequential edge value: this isolates the densification.
  for (int j : {0, 50, 99}) {
    const ValueSequence d = densify_block(p, seq.node((j + 1) * 10), grid, j);
    for (int i = 0; i < d.num_nodes(); ++i) {
      const ValueParams& s = seq.node(j * 10 + i);
      EXPECT_LE(testing::rel_gap(d.node(i).S, s.S), 1e-8);
      EXPECT_LE(testing::rel_gap(d.node(i).v, s.v), 1e-8);
    }
  }
}

TEST(DensifyAll, ScalarInteriorMatchesClosedForm) {
  const oracle::ScalarLqrClosedForm cf(1.0, 1.0);
  const TimeGrid grid = make_uniform_grid(0.0, 1.0, 4, 25);
  const auto back = backward_value_pass(kScalar, grid, Execution{});
  const ValueSequence d = densify_all(kScalar, grid, back.edge_values, Execution{});
  ASSERT_EQ(d.samples.size(), 2u * grid.num_steps() + 1);
  for (const auto& vp : d.samples) EXPECT_NEAR(vp.S(0, 0), cf.S(vp.t), 1e-6);
}

TEST(HalfSplitConsistency, ForwardAndBackwardHalvesCombine) {
  // Each block split in two: the left half from the forward equations, the
  // right half from the backward equations.
  const LqtProblem p = testing::default_tracking_problem();
  for (double s : {0.0, 20.0, 49.5}) {
    const double mid = s + 0.25, tau = s + 0.5;
    const CondValueParams split = combine(init_element_forward(p, s, mid, 40), init_element_backward(p, mid, tau, 40));
    EXPECT_LE(element_gap(split, init_element_backward(p, s, tau, 80)), 1e-8) << s;
  }
}

}  // namespace
}  // namespace hjbscan
