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

#include "lanefree/solver.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "lanefree/derivative_check.hpp"
#include "lanefree/harness.hpp"

namespace lanefree {
namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

DenseNlp BoundedParabola() {
  DenseNlp p(1, 0);
  p.SetObjective([](const Vec& x) { return (x(0) - 3) * (x(0) - 3); },
                 [](const Vec& x) { return Vec::Constant(1, 2 * (x(0) - 3)); })
      .SetConstraints([](const Vec&) { return Vec(0); }, [](const Vec&) { return Mat(0, 1); })
      .SetLagrangianHessian([](const Vec&, double s, const Vec&) { return Mat::Constant(1, 1, 2 * s); })
      .SetVariableBounds(Vec::Constant(1, 5.0), Vec::Constant(1, kInf));
  return p;
}

// min x1^2 + x1 x2 + 2 x2^2 - x1  s.t.  x1 + x2 = 1, 2 x1 - 2 x2 = 0.4.
DenseNlp EqualityQp() {
  DenseNlp p(2, 2);
  Mat h(2, 2);
  h << 2, 1, 1, 4;
  Mat a(2, 2);
  a << 1, 1, 2, -2;
  p.SetObjective([h](const Vec& x) { return 0.5 * x.dot(h * x) - x(0); },
                 [h](const Vec& x) { return Vec(h * x - Vec::Unit(2, 0)); })
      .SetConstraints([a](const Vec& x) { return Vec(a * x); }, [a](const Vec&) { return a; })
      .SetLagrangianHessian([h](const Vec&, double s, const Vec&) { return Mat(s * h); })
      .SetConstraintBounds(Vec::Map(std::array<double, 2>{1.0, 0.4}.data(), 2),
                           Vec::Map(std::array<double, 2>{1.0, 0.4}.data(), 2));
  return p;
}

// min x + y  s.t.  x^2 + y^2 <= 2, optimum (-1, -1) with multiplier 1/2.
DenseNlp DiscLinear() {
  DenseNlp p(2, 1);
  p.SetObjective([](const Vec& x) { return x.sum(); }, [](const Vec&) { return Vec::Ones(2); })
      .SetConstraints([](const Vec& x) { return Vec::Constant(1, x.squaredNorm()); },
                      [](const Vec& x) { return Mat(2 * x.transpose()); })
      .SetLagrangianHessian([](const Vec&, double, const Vec& y) { return Mat(2 * y(0) * Mat::Identity(2, 2)); })
      .SetConstraintBounds(Vec::Constant(1, -kInf), Vec::Constant(1, 2.0));
  return p;
}

TEST(InteriorPoint, ActiveVariableBound) {
  const auto r = InteriorPointSolver().Solve(BoundedParabola(), Vec::Constant(1, 10.0), SolverConfig{});
  EXPECT_EQ(r.outcome.status, SolveStatus::kOptimal);
  EXPECT_NEAR(r.x(0), 5.0, 1e-6);
  EXPECT_NEAR(r.outcome.objective, 4.0, 1e-5);
}

TEST(InteriorPoint, EqualityQpMatchesKktSolution) {
  Mat h(2, 2);
  h << 2, 1, 1, 4;
  Mat a(2, 2);
  a << 1, 1, 2, -2;
  Mat kkt = Mat::Zero(4, 4);
  kkt.topLeftCorner(2, 2) = h;
  kkt.topRightCorner(2, 2) = a.transpose();
  kkt.bottomLeftCorner(2, 2) = a;
  Vec rhs(4);
  rhs << 1, 0, 1, 0.4;
  const Vec sol = kkt.fullPivLu().solve(rhs);

  const auto r = InteriorPointSolver().Solve(EqualityQp(), Vec::Zero(2), SolverConfig{});
  ASSERT_EQ(r.outcome.status, SolveStatus::kOptimal);
  EXPECT_NEAR(r.x(0), sol(0), 1e-8);
  EXPECT_NEAR(r.x(1), sol(1), 1e-8);
  EXPECT_NEAR(r.y(0), sol(2), 1e-6);
  EXPECT_NEAR(r.y(1), sol(3), 1e-6);
}

TEST(InteriorPoint, NonlinearInequality) {
  const auto r = InteriorPointSolver().Solve(DiscLinear(), Vec::Zero(2), SolverConfig{});
  ASSERT_EQ(r.outcome.status, SolveStatus::kOptimal);
  EXPECT_NEAR(r.x(0), -1.0, 1e-6);
  EXPECT_NEAR(r.x(1), -1.0, 1e-6);
  EXPECT_NEAR(std::abs(r.y(0)), 0.5, 1e-5);
}

TEST(InteriorPoint, InconsistentEqualitiesAreNotReportedOptimal) {
  DenseNlp p(1, 2);
  p.SetObjective([](const Vec& x) { return x(0) * x(0); }, [](const Vec& x) { return Vec::Constant(1, 2 * x(0)); })
      .SetConstraints([](const Vec& x) { return Vec::Constant(2, x(0)); }, [](const Vec&) { return Mat::Ones(2, 1); })
      .SetLagrangianHessian([](const Vec&, double s, const Vec&) { return Mat::Constant(1, 1, 2 * s); })
      .SetConstraintBounds(Vec::Map(std::array<double, 2>{0.0, 1.0}.data(), 2),
                           Vec::Map(std::array<double, 2>{0.0, 1.0}.data(), 2));
  SolverConfig cfg;
  cfg.max_iterations = 200;
  const auto r = InteriorPointSolver().Solve(p, Vec::Zero(1), cfg);
  EXPECT_NE(r.outcome.status, SolveStatus::kOptimal);
  EXPECT_NE(r.outcome.status, SolveStatus::kAcceptable);
}

TEST(InteriorPoint, MeritDecreasesOnEveryAcceptedStep) {
  const auto r = InteriorPointSolver().Solve(DiscLinear(), Vec::Constant(2, 3.0), SolverConfig{});
  ASSERT_FALSE(r.log.empty());
  for (const auto& rec : r.log) EXPECT_LE(rec.merit_after, rec.merit_before + 1e-12) << "iteration " << rec.iter;
  std::ostringstream os;
  WriteIterationLog(os, r.log);
  EXPECT_EQ(std::ranges::count(os.str(), '\n'), static_cast<long>(r.log.size()) + 1);
}

TEST(DerivativeCheck, FlagsCorruptedJacobian) {
  DenseNlp p = DiscLinear();
  p.SetConstraints([](const Vec& x) { return Vec::Constant(1, x.squaredNorm()); },
                   [](const Vec& x) { return Mat(2.1 * x.transpose()); });
  const DerivativeReport rep = CheckDerivatives(p, Vec::Constant(2, 0.7));
  EXPECT_FALSE(rep.ok());
  const auto flagged = rep.Flagged();
  ASSERT_EQ(flagged.size(), 1u);
  EXPECT_NE(flagged[0], "objective");
  EXPECT_TRUE(CheckDerivatives(DiscLinear(), Vec::Constant(2, 0.7)).ok());
}

class CrossingSolve : public ::testing::Test {
 protected:
  static Scenario Straight() { return LoadScenario(std::string(LANEFREE_SCENARIO_DIR) + "/straight_70m_single.json"); }
};

TEST_F(CrossingSolve, SingleStraightCrossingTimeInBand) {
  const ScenarioSolve s = SolveScenario(Straight(), TranscriptionConfig{}, SolverConfig{});
  ASSERT_EQ(s.result.outcome.status, SolveStatus::kOptimal);
  // Full acceleration from 10 m/s covers 70 m in (sqrt(100 + 420) - 10) / 3 s.
  const double bang = (std::sqrt(100.0 + 2 * 3.0 * 70.0) - 10.0) / 3.0;
  EXPECT_GE(s.solution.tf, bang - 1e-4);
  EXPECT_LE(s.solution.tf, 4.8);
}

TEST_F(CrossingSolve, RepeatedSolvesAreBitIdentical) {
  const ScenarioSolve a = SolveScenario(Straight(), TranscriptionConfig{}, SolverConfig{});
  const ScenarioSolve b = SolveScenario(Straight(), TranscriptionConfig{}, SolverConfig{});
  ASSERT_EQ(a.result.x.size(), b.result.x.size());
  for (int i = 0; i < a.result.x.size(); ++i) ASSERT_EQ(a.result.x(i), b.result.x(i)) << i;
  EXPECT_EQ(SolutionToJson(a.solution).dump(), SolutionToJson(b.solution).dump());
}

}  // namespace
}  // namespace lanefree
