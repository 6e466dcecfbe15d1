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

#include "lanefree/scenario.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>

namespace lanefree {
namespace {

const std::string kScenarioDir = LANEFREE_SCENARIO_DIR;

CavSpec Cav(const std::string& id, Pose z0, Pose zf) {
  CavSpec c;
  c.id = id;
  c.z0 = z0;
  c.zf = zf;
  return c;
}

Scenario TwoCrossing() {
  Scenario sc;
  sc.cavs.push_back(Cav("north", {2.5, -35, std::numbers::pi / 2}, {2.5, 35, std::numbers::pi / 2}));
  sc.cavs.push_back(Cav("east", {-35, -2.5, 0}, {35, -2.5, 0}));
  return sc;
}

// Linear-in-time node states from z0 to zf over the normalised horizon.
CrossingSolution LinearSolution(const Scenario& sc, double tf, int intervals, int degree) {
  CrossingSolution sol;
  sol.t0 = sc.t0;
  sol.tf = tf;
  sol.intervals = intervals;
  sol.degree = degree;
  const CollocationScheme s(degree, CollocationKind::kRadau);
  for (const auto& c : sc.cavs) {
    CavTrajectory t;
    t.id = c.id;
    for (int k = 0; k < intervals; ++k) {
      for (int m = 0; m < degree; ++m) {
        const double tau = (k + s.tau()[m]) / intervals;
        StateVec<double> x{};
        x[kSpeed] = c.v0;
        x[kPosX] = c.z0.x + tau * (c.zf.x - c.z0.x);
        x[kPosY] = c.z0.y + tau * (c.zf.y - c.z0.y);
        x[kHeading] = c.z0.theta + tau * (c.zf.theta - c.z0.theta);
        t.node_states.push_back(x);
      }
    }
    StateVec<double> end{};
    end[kSpeed] = c.v0;
    end[kPosX] = c.zf.x;
    end[kPosY] = c.zf.y;
    end[kHeading] = c.zf.theta;
    t.node_states.push_back(end);
    sol.cavs.push_back(t);
  }
  return sol;
}

TEST(Validate, DefaultTwoCrossingPasses) {
  const auto rep = ValidateScenario(TwoCrossing());
  EXPECT_TRUE(rep.ok());
  EXPECT_TRUE(rep.warnings.empty());
}

TEST(Validate, OverlappingStartsReported) {
  Scenario sc = TwoCrossing();
  sc.cavs[1].z0 = {3.0, -34.0, 0.0};
  const auto rep = ValidateScenario(sc);
  ASSERT_FALSE(rep.ok());
  bool found = false;
  for (const auto& e : rep.errors) found |= e.find("initial separation violated") != std::string::npos;
  EXPECT_TRUE(found);
}

TEST(Validate, InitialSpeedWithinDefaultBounds) {
  Scenario sc = TwoCrossing();
  sc.cavs[0].v0 = 10.0;
  EXPECT_TRUE(ValidateScenario(sc).ok());
  sc.cavs[0].v0 = 30.0;
  EXPECT_FALSE(ValidateScenario(sc).ok());
}

TEST(Validate, GoalInsideBlockIsWarning) {
  Scenario sc = TwoCrossing();
  sc.cavs[0].zf = {20.0, 20.0, 0.0};
  const auto rep = ValidateScenario(sc);
  EXPECT_TRUE(rep.ok());
  ASSERT_FALSE(rep.warnings.empty());
  EXPECT_NE(rep.warnings[0].find("inside boundary NE"), std::string::npos);
}

TEST(Validate, StructuralProblems) {
  Scenario sc;
  EXPECT_FALSE(ValidateScenario(sc).ok());
  sc = TwoCrossing();
  sc.cavs[1].id = "north";
  EXPECT_FALSE(ValidateScenario(sc).ok());
  sc = TwoCrossing();
  sc.gains.q(0, 0) = -1.0;
  EXPECT_FALSE(ValidateScenario(sc).ok());
  sc = TwoCrossing();
  sc.cavs[0].z0 = {20.0, -20.0, 0.0};
  EXPECT_FALSE(ValidateScenario(sc).ok());
  sc = TwoCrossing();
  sc.cavs[1].zf = sc.cavs[0].zf;
  EXPECT_FALSE(ValidateScenario(sc).ok());
}

TEST(Objective, AtGoalOnlyTimeTermRemains) {
  Scenario sc;
  sc.cavs.push_back(Cav("a", {2.5, 10, 1.0}, {2.5, 10, 1.0}));
  const auto sol = LinearSolution(sc, 1.0, 15, 5);
  EXPECT_NEAR(ObjectiveValue(sol, sc), 1.0, 1e-14);
}

TEST(Objective, ZeroQLeavesAlphaTimesHorizonSquared) {
  Scenario sc = TwoCrossing();
  sc.gains.q.setZero();
  sc.gains.alpha = 2.5;
  const auto sol = LinearSolution(sc, 4.2, 15, 5);
  EXPECT_DOUBLE_EQ(ObjectiveValue(sol, sc), 2.5 * 4.2 * 4.2);
}

TEST(Objective, LinearInterpolationClosedForm) {
  Scenario sc;
  sc.cavs.push_back(Cav("a", {2.5, -30, 1.2}, {4.0, 25, 1.5}));
  sc.gains.alpha = 0.0;
  sc.gains.q.setIdentity();
  const Eigen::Vector3d dz(1.5, 55, 0.3);
  // Integral of |(1 - t/T) dz|^2 over [0, T] is T |dz|^2 / 3.
  sc.gains.form = LagrangeForm::kRealTime;
  const auto sol = LinearSolution(sc, 4.0, 15, 5);
  EXPECT_NEAR(ObjectiveValue(sol, sc), 4.0 / 3.0 * dz.squaredNorm(), 1e-9);
  sc.gains.form = LagrangeForm::kTimeAveraged;
  EXPECT_NEAR(ObjectiveValue(sol, sc), 1.0 / 3.0 * dz.squaredNorm(), 1e-10);
}

TEST(Objective, RelabelingInvariant) {
  Scenario sc = TwoCrossing();
  auto sol = LinearSolution(sc, 4.5, 15, 5);
  const double a = ObjectiveValue(sol, sc);
  std::swap(sc.cavs[0], sc.cavs[1]);
  std::swap(sol.cavs[0], sol.cavs[1]);
  EXPECT_DOUBLE_EQ(ObjectiveValue(sol, sc), a);
}

TEST(Json, RoundTrip) {
  Scenario sc = TwoCrossing();
  sc.gains.q(0, 1) = sc.gains.q(1, 0) = 0.001;
  sc.d_min = 0.3;
  const Scenario back = ScenarioFromJson(ScenarioToJson(sc));
  EXPECT_EQ(ScenarioToJson(back), ScenarioToJson(sc));
  EXPECT_TRUE(back.gains.q.isApprox(sc.gains.q));
  EXPECT_EQ(back.cavs[1].id, "east");
}

TEST(Json, UnknownKeysRejected) {
  auto j = ScenarioToJson(TwoCrossing());
  j["gains"]["beta"] = 1.0;
  EXPECT_THROW(ScenarioFromJson(j), ScenarioError);
  j = ScenarioToJson(TwoCrossing());
  j["cavs"][0]["colour"] = "red";
  EXPECT_THROW(ScenarioFromJson(j), ScenarioError);
  j = ScenarioToJson(TwoCrossing());
  j["cavs"][0]["z0"] = {1, 2};
  EXPECT_THROW(ScenarioFromJson(j), ScenarioError);
}

TEST(Json, ParseErrorCarriesLineAndColumn) {
  const auto path = std::filesystem::temp_directory_path() / "lanefree_bad_scenario.json";
  {
    std::ofstream os(path);
    os << "{\n  \"cavs\": [\n    {\"id\": \"a\",, }\n  ]\n}\n";
  }
  try {
    LoadScenario(path.string());
    FAIL() << "expected a parse error";
  } catch (const ScenarioError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column"), std::string::npos) << msg;
  }
  std::filesystem::remove(path);
}

TEST(Json, BundledScenariosLoadAndValidate) {
  for (const char* name :
       {"straight_70m_single", "two_crossing", "four_symmetric", "symmetric_family", "right_turn_family"}) {
    const Scenario sc = LoadScenario(kScenarioDir + "/" + name + ".json");
    const auto rep = ValidateScenario(sc);
    EXPECT_TRUE(rep.ok()) << name << ": " << (rep.errors.empty() ? "" : rep.errors[0]);
    EXPECT_TRUE(rep.warnings.empty()) << name << ": " << (rep.warnings.empty() ? "" : rep.warnings[0]);
  }
}

TEST(SubScenario, KeepsLeadingVehicles) {
  const Scenario sc = TwoCrossing();
  EXPECT_EQ(SubScenario(sc, 1).cavs.size(), 1u);
  EXPECT_EQ(SubScenario(sc, 1).cavs[0].id, "north");
  EXPECT_THROW(SubScenario(sc, 3), ScenarioError);
}

TEST(SolutionJson, RoundTripIsLossless) {
  const Scenario sc = TwoCrossing();
  CrossingSolution sol = LinearSolution(sc, 4.5, 3, 2);
  sol.times = {0.0, 1.0, 4.5};
  for (auto& c : sol.cavs) {
    c.states.assign(3, c.node_states[0]);
    c.inputs.assign(3, {0.5, -0.1});
    c.interval_inputs.assign(3, {0.25, 0.125});
  }
  PairDuals pd;
  pd.first = 0;
  pd.second = 1;
  pd.nodes.push_back({Eigen::Vector4d(0.1, 0, 0.3, 0), Eigen::Vector4d(0, 0.2, 0, 0), Vec2(0.6, -0.8)});
  sol.pairs.push_back(pd);
  sol.status = "optimal";
  const auto j = SolutionToJson(sol);
  EXPECT_EQ(SolutionToJson(SolutionFromJson(j)).dump(), j.dump());
}

}  // namespace
}  // namespace lanefree
