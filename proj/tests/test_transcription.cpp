// Copyright 2026 The Lanefree Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at

//     https://www.apache.org/licenses/LICENSE-2.0

// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lanefree/transcription.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>
#include <set>

#include "collocation_newton.hpp"
#include "lanefree/derivative_check.hpp"

namespace lanefree {
namespace {

const std::string kScenarioDir = LANEFREE_SCENARIO_DIR;

Scenario Load(const std::string& name) { return LoadScenario(kScenarioDir + "/" + name + ".json"); }

// Variable count from first principles: horizon, per-vehicle node states and
// interval inputs, one 10-entry dual block per (vehicle, node, boundary) and
// per (pair, node).
int CountVariables(int cavs, int intervals, int degree, int boundaries) {
  const int nodes = intervals * degree + 1;
  const int pairs = cavs * (cavs - 1) / 2;
  const int dual = 4 + 4 + 2;
  return 1 + cavs * (nodes * 6 + intervals * 2) + cavs * nodes * boundaries * dual + pairs * nodes * dual;
}

TEST(Layout, VariableCountMatchesIndependentCount) {
  const Scenario sc = Load("four_symmetric");
  for (int n = 1; n <= 4; ++n) {
    const CrossingNlp nlp(SubScenario(sc, n), TranscriptionConfig{});
    EXPECT_EQ(nlp.num_variables(), CountVariables(n, 15, 5, 4)) << n;
    EXPECT_EQ(nlp.num_nodes(), 76);
  }
  EXPECT_EQ(CrossingNlp(SubScenario(sc, 1), TranscriptionConfig{}).num_variables(), 3527);
  // A second vehicle adds its own block of 3526 plus one pair block of 760.
  EXPECT_EQ(CrossingNlp(SubScenario(sc, 2), TranscriptionConfig{}).num_variables(), 3527 + 3526 + 760);
}

TEST(Layout, BlocksTileVariablesAndRows) {
  const CrossingNlp nlp(Load("two_crossing"), TranscriptionConfig{});
  int next = 0;
  for (const auto& b : nlp.VariableBlocks()) {
    EXPECT_EQ(b.offset, next) << b.name;
    next += b.size;
  }
  EXPECT_EQ(next, nlp.num_variables());
  next = 0;
  std::vector<std::string> names;
  for (const auto& b : nlp.ConstraintBlocks()) {
    EXPECT_EQ(b.offset, next) << b.name;
    next += b.size;
    names.push_back(b.name);
  }
  EXPECT_EQ(next, nlp.num_constraints());
  EXPECT_EQ(names, (std::vector<std::string>{"initial", "dynamics", "continuity", "terminal", "road", "pair",
                                             "gap_links"}));
}

IndexBlock Named(const std::vector<IndexBlock>& blocks, const std::string& name) {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  ADD_FAILURE() << "no block " << name;
  return {};
}

TEST(Layout, OnlyPairRowsCoupleVehicles) {
  TranscriptionConfig tc;
  tc.gap_links = {{true, 2, 1, 30}, {false, 3, 0, 30}};
  const CrossingNlp nlp(Load("four_symmetric"), tc);
  const int n = nlp.num_cavs();
  // Owner of every column: -1 for tf and pair duals, else the vehicle.
  std::vector<int> owner(nlp.num_variables(), -1);
  for (int c = 0; c < n; ++c) {
    for (int g = 0; g < nlp.num_nodes(); ++g) {
      for (int s = 0; s < kNumStates; ++s) owner[nlp.state_index(c, g, s)] = c;
      for (int r = 0; r < 4; ++r) {
        for (int q = 0; q < kRectDualSize; ++q) owner[nlp.road_dual_index(c, g, r) + q] = c;
      }
    }
    for (int k = 0; k < 15; ++k) {
      for (int u = 0; u < kNumInputs; ++u) owner[nlp.input_index(c, k, u)] = c;
    }
  }
  std::vector<std::set<int>> row_owners(nlp.num_constraints());
  const auto& pat = nlp.JacobianPattern();
  for (size_t e = 0; e < pat.nnz(); ++e) {
    if (owner[pat.cols[e]] >= 0) row_owners[pat.rows[e]].insert(owner[pat.cols[e]]);
  }
  const int pair_start = Named(nlp.ConstraintBlocks(), "pair").offset;
  for (int r = 0; r < nlp.num_constraints(); ++r) {
    if (r < pair_start) {
      EXPECT_LE(row_owners[r].size(), 1u) << "row " << r;
    } else {
      EXPECT_LE(row_owners[r].size(), 2u) << "row " << r;
    }
  }
}

TEST(Guess, HorizonFromPathLengthAndMeanSpeed) {
  const Scenario sc = Load("straight_70m_single");
  const CrossingNlp nlp(sc, TranscriptionConfig{});
  const double mean_speed = 0.5 * (sc.cavs[0].v0 + sc.cavs[0].bounds.v_max);
  EXPECT_NEAR(nlp.HorizonGuess(), 70.0 / mean_speed, 1e-12);
  EXPECT_NEAR(nlp.HorizonGuess(), 4.0, 1e-12);
}

TEST(Guess, DualEqualitiesHoldAtInitialGuess) {
  for (const char* name : {"two_crossing", "four_symmetric", "right_turn_family"}) {
    const CrossingNlp nlp(Load(name), TranscriptionConfig{});
    const Eigen::VectorXd x = nlp.InitialGuess();
    Eigen::VectorXd c;
    nlp.Constraints(x, c);
    const auto blocks = nlp.ConstraintBlocks();
    const int start = blocks[4].offset;
    for (int r = start; r < nlp.num_constraints(); ++r) {
      const int local = (r - start) % kDualRows;
      if (local >= 1 && local <= 4) {
        ASSERT_LE(std::abs(c(r)), 1e-9) << name << " row " << r;
      } else if (local == 5) {
        ASSERT_GE(c(r), -1e-12) << name << " row " << r;
      }
    }
    // Initial and terminal rows are met by construction.
    for (int r = blocks[0].offset; r < blocks[0].offset + blocks[0].size; ++r) EXPECT_NEAR(c(r), 0.0, 1e-12);
    for (int r = blocks[3].offset; r < blocks[3].offset + blocks[3].size; ++r) EXPECT_NEAR(c(r), 0.0, 1e-12);
  }
}

TEST(Extract, RoundTripsNodeValuesAndHorizon) {
  const CrossingNlp nlp(Load("two_crossing"), TranscriptionConfig{});
  Eigen::VectorXd x = nlp.InitialGuess();
  x(0) = 4.337;
  for (int c = 0; c < 2; ++c) {
    for (int g = 0; g < nlp.num_nodes(); ++g) {
      x(nlp.state_index(c, g, kYawRate)) = 0.01 * std::sin(g + c);
      x(nlp.state_index(c, g, kSideslip)) = 0.02 * std::cos(3 * g);
    }
  }
  const CrossingSolution sol = nlp.Extract(x);
  EXPECT_DOUBLE_EQ(sol.tf, 4.337);
  EXPECT_DOUBLE_EQ(sol.times.front(), 0.0);
  EXPECT_DOUBLE_EQ(sol.times.back(), 4.337);
  EXPECT_EQ(sol.node_times.size(), 76u);
  EXPECT_DOUBLE_EQ(sol.node_times.back(), 4.337);
  for (int c = 0; c < 2; ++c) {
    ASSERT_EQ(sol.cavs[c].states.size(), sol.times.size());
    for (int g = 0; g < nlp.num_nodes(); ++g) {
      const auto at = nlp.Interpolate(x, c, nlp.node_tau(g));
      for (int s = 0; s < kNumStates; ++s) {
        EXPECT_EQ(sol.cavs[c].node_states[g][s], x(nlp.state_index(c, g, s)));
        EXPECT_NEAR(at[s], x(nlp.state_index(c, g, s)), 1e-9);
      }
    }
  }
  EXPECT_THROW(nlp.Extract(x.head(10)), TranscriptionError);
}

TEST(Objective, ConstantIntegrandIntegratesExactly) {
  Scenario sc = Load("straight_70m_single");
  sc.gains.alpha = 0.0;
  sc.gains.q.setIdentity();
  sc.gains.form = LagrangeForm::kRealTime;
  const CrossingNlp nlp(sc, TranscriptionConfig{});
  Eigen::VectorXd x = nlp.InitialGuess();
  x(0) = 5.5;
  const Eigen::Vector3d e(0.3, -1.2, 0.05);
  for (int g = 0; g < nlp.num_nodes(); ++g) {
    x(nlp.state_index(0, g, kPosX)) = sc.cavs[0].zf.x + e(0);
    x(nlp.state_index(0, g, kPosY)) = sc.cavs[0].zf.y + e(1);
    x(nlp.state_index(0, g, kHeading)) = sc.cavs[0].zf.theta + e(2);
  }
  EXPECT_NEAR(nlp.Objective(x), 5.5 * e.squaredNorm(), 1e-10);
  sc.gains.form = LagrangeForm::kTimeAveraged;
  sc.gains.alpha = 1.0;
  const CrossingNlp avg(sc, TranscriptionConfig{});
  EXPECT_NEAR(avg.Objective(x), 5.5 * 5.5 + e.squaredNorm(), 1e-10);
}

TEST(Objective, AgreesWithSolutionEvaluation) {
  const Scenario sc = Load("four_symmetric");
  const CrossingNlp nlp(sc, TranscriptionConfig{});
  const Eigen::VectorXd x = nlp.InitialGuess();
  EXPECT_NEAR(nlp.Objective(x), ObjectiveValue(nlp.Extract(x), sc), 1e-10);
}

TEST(Collocation, ReproducesConstantAccelerationMotion) {
  Scenario sc = Load("straight_70m_single");
  sc.cavs[0].z0 = {-3.0, 1.0, 0.4};
  const double a = 1.7, tf = 4.5;
  const CrossingNlp nlp(SubScenario(sc, 1), testing::FreeEndConfig());
  double res = 1.0;
  const Eigen::VectorXd x = testing::IntegrateFixedInputs(nlp, tf, {a, 0.0}, &res);
  EXPECT_LT(res, 1e-10);
  double worst = 0.0;
  for (int i = 0; i <= 450; ++i) {
    const double t = tf * i / 450.0;
    const auto got = nlp.Interpolate(x, 0, t / tf);
    const auto want = testing::ConstantAccelState(sc.cavs[0], a, t);
    for (int s = 0; s < kNumStates; ++s) worst = std::max(worst, std::abs(got[s] - want[s]));
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(Collocation, LegendreSchemeAlsoReproducesMotion) {
  Scenario sc = Load("straight_70m_single");
  TranscriptionConfig tc = testing::FreeEndConfig(4, 3);
  tc.kind = CollocationKind::kLegendre;
  const CrossingNlp nlp(sc, tc);
  double res = 1.0;
  const Eigen::VectorXd x = testing::IntegrateFixedInputs(nlp, 3.0, {-1.0, 0.0}, &res);
  EXPECT_LT(res, 1e-10);
  const auto end = nlp.StateAt(x, 0, nlp.num_nodes() - 1);
  const auto want = testing::ConstantAccelState(sc.cavs[0], -1.0, 3.0);
  for (int s = 0; s < kNumStates; ++s) EXPECT_NEAR(end[s], want[s], 1e-9);
}

TEST(Derivatives, AnalyticAgreesWithDifferencesAtGuess) {
  for (const char* name : {"straight_70m_single", "two_crossing"}) {
    const CrossingNlp nlp(Load(name), TranscriptionConfig{});
    Eigen::VectorXd x = nlp.InitialGuess();
    // Move off the symmetric guess so every Jacobian entry is exercised.
    for (int i = 1; i < x.size(); ++i) x(i) += 1e-3 * std::sin(0.7 * i);
    DerivativeCheckOptions opt;
    opt.check_hessian = true;
    const DerivativeReport rep = CheckDerivatives(nlp, x, opt);
    EXPECT_TRUE(rep.ok()) << name << " max rel error " << rep.max_rel_error;
  }
}

TEST(Config, RejectsInvalidSettings) {
  const Scenario sc = Load("two_crossing");
  TranscriptionConfig tc;
  tc.intervals = 0;
  EXPECT_THROW(CrossingNlp(sc, tc), TranscriptionError);
  tc = TranscriptionConfig{};
  tc.degree = 12;
  EXPECT_THROW(CrossingNlp(sc, tc), TranscriptionError);
  EXPECT_THROW(CrossingNlp(Scenario{}, TranscriptionConfig{}), TranscriptionError);
}

TEST(Bounds, NodeZeroIsFreeAndDualsNonnegative) {
  const CrossingNlp nlp(Load("two_crossing"), TranscriptionConfig{});
  Eigen::VectorXd xl, xu, gl, gu;
  nlp.GetBounds(xl, xu, gl, gu);
  EXPECT_EQ(xl(nlp.state_index(0, 0, kSpeed)), -kInf);
  EXPECT_EQ(xl(nlp.state_index(0, 1, kSpeed)), 0.5);
  EXPECT_EQ(xu(nlp.state_index(1, 5, kSpeed)), 25.0);
  const int p = nlp.pair_dual_index(0, 7);
  for (int q = 0; q < 8; ++q) EXPECT_EQ(xl(p + q), 0.0);
  EXPECT_EQ(xl(p + 8), -kInf);
  EXPECT_DOUBLE_EQ(xl(0), 0.1);
  EXPECT_DOUBLE_EQ(xu(0), 60.0);
}

TEST(GapLinks, LayoutGrowsByMultipliersAndRows) {
  const Scenario sc = Load("two_crossing");
  const CrossingNlp plain(sc, TranscriptionConfig{});
  TranscriptionConfig tc;
  tc.gap_links = {{false, 0, 1, 40}, {false, 1, 0, 41}, {true, 0, 3, 12}};
  const CrossingNlp linked(sc, tc);
  // Four multipliers per body; the separator is borrowed, the norm row kept.
  EXPECT_EQ(linked.num_variables(), plain.num_variables() + 3 * 8);
  EXPECT_EQ(linked.num_constraints(), plain.num_constraints() + 3 * 5);
  EXPECT_EQ(Named(linked.ConstraintBlocks(), "gap_links").size, 15);

  tc.link_all_gaps = true;
  const CrossingNlp all(sc, tc);
  const int conditions = 2 * 4 + 1;
  EXPECT_EQ(all.num_variables(), plain.num_variables() + conditions * 75 * 8);
}

TEST(GapLinks, LinkRowsReadTheEarlierSeparator) {
  TranscriptionConfig tc;
  tc.gap_links = {{false, 0, 1, 40}};
  const CrossingNlp nlp(Load("two_crossing"), tc);
  const int row0 = Named(nlp.ConstraintBlocks(), "gap_links").offset;
  const int s_col = nlp.pair_dual_index(0, 40) + 8;
  std::set<int> gap_cols, eq_cols;
  const auto& pat = nlp.JacobianPattern();
  for (size_t e = 0; e < pat.nnz(); ++e) {
    if (pat.rows[e] == row0) gap_cols.insert(pat.cols[e]);
    if (pat.rows[e] == row0 + 1) eq_cols.insert(pat.cols[e]);
  }
  EXPECT_TRUE(eq_cols.contains(s_col));
  EXPECT_FALSE(eq_cols.contains(nlp.pair_dual_index(0, 41) + 8));
  // The gap row reads the poses of node 41.
  EXPECT_TRUE(gap_cols.contains(nlp.state_index(0, 41, kPosX)));
  EXPECT_TRUE(gap_cols.contains(nlp.state_index(1, 41, kHeading)));
  EXPECT_FALSE(gap_cols.contains(nlp.state_index(0, 40, kPosX)));
}

TEST(GapLinks, GuessSatisfiesLinkEqualities) {
  TranscriptionConfig tc;
  tc.link_all_gaps = true;
  for (const char* name : {"two_crossing", "right_turn_family"}) {
    const CrossingNlp nlp(Load(name), tc);
    Eigen::VectorXd c;
    nlp.Constraints(nlp.InitialGuess(), c);
    const IndexBlock b = Named(nlp.ConstraintBlocks(), "gap_links");
    for (int r = b.offset; r < b.offset + b.size; ++r) {
      const int local = (r - b.offset) % 5;
      if (local >= 1) {
        ASSERT_LE(std::abs(c(r)), 1e-9) << name << " row " << r;
      }
    }
  }
}

TEST(GapLinks, DerivativesAgreeWithDifferences) {
  TranscriptionConfig tc;
  tc.gap_links = {{false, 0, 1, 40}, {false, 0, 1, 41}, {true, 1, 0, 20}};
  const CrossingNlp nlp(Load("two_crossing"), tc);
  Eigen::VectorXd x = nlp.InitialGuess();
  for (int i = 1; i < x.size(); ++i) x(i) += 1e-3 * std::sin(0.7 * i);
  DerivativeCheckOptions opt;
  opt.check_hessian = true;
  const DerivativeReport rep = CheckDerivatives(nlp, x, opt);
  EXPECT_TRUE(rep.ok()) << rep.max_rel_error;
}

TEST(GapLinks, MalformedLinksAreRejected) {
  const Scenario sc = Load("two_crossing");
  for (const GapLink& bad : {GapLink{false, 0, 0, 10}, GapLink{false, 0, 2, 10}, GapLink{true, 0, 4, 10},
                             GapLink{false, 0, 1, 75}, GapLink{false, 0, 1, -1}}) {
    TranscriptionConfig tc;
    tc.gap_links = {bad};
    EXPECT_THROW(CrossingNlp(sc, tc), TranscriptionError) << bad.first << " " << bad.second << " " << bad.node;
  }
  TranscriptionConfig tc;
  tc.gap_links = {{false, 0, 1, 10}, {false, 0, 1, 10}};
  EXPECT_THROW(CrossingNlp(sc, tc), TranscriptionError);
}

// The property links rely on: if one direction separates two translating
// rectangles with gap g at both ends of a straight motion, the true distance
// stays at least g throughout.
TEST(GapLinks, SharedSeparatorBoundsDistanceAlongTranslation) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pos(-6.0, 6.0), ang(-std::numbers::pi, std::numbers::pi),
      len(0.5, 4.0);
  int accepted = 0;
  double worst = kInf;
  while (accepted < 200) {
    const double lp = len(rng), wp = len(rng), lq = len(rng), wq = len(rng);
    const ConvexPolytope p0 = ConvexPolytope::Box(-lp / 2, lp / 2, -wp / 2, wp / 2);
    const ConvexPolytope q0 = ConvexPolytope::Box(-lq / 2, lq / 2, -wq / 2, wq / 2);
    const double tp = ang(rng), tq = ang(rng), phi = ang(rng);
    const Vec2 s(std::cos(phi), std::sin(phi));
    const Vec2 pa(pos(rng), pos(rng)), pb(pos(rng), pos(rng)), qa(pos(rng), pos(rng)), qb(pos(rng), pos(rng));
    auto gap = [&](const Vec2& p, const Vec2& q) {
      const ConvexPolytope a = PolytopeAtPose(p0, {p.x(), p.y(), tp});
      const ConvexPolytope b = PolytopeAtPose(q0, {q.x(), q.y(), tq});
      DualBlock d;
      d.s = s;
      d.lambda_fwd = FaceAlignedMultipliers(a, -s);
      d.lambda_rev = FaceAlignedMultipliers(b, s);
      return PairResiduals(a, b, d, 0.0).gap;
    };
    const double g = std::min(gap(pa, qa), gap(pb, qb));
    if (g <= 0.0) continue;
    ++accepted;
    for (int k = 0; k <= 40; ++k) {
      const double f = k / 40.0;
      const Vec2 p = (1 - f) * pa + f * pb, q = (1 - f) * qa + f * qb;
      const double dist = MinDistanceOracle(PolytopeAtPose(p0, {p.x(), p.y(), tp}),
                                            PolytopeAtPose(q0, {q.x(), q.y(), tq}));
      worst = std::min(worst, dist - g);
    }
  }
  EXPECT_GE(worst, -1e-9);
}

}  // namespace
}  // namespace lanefree
