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

#ifndef LANEFREE_SCENARIO_HPP_
#define LANEFREE_SCENARIO_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lanefree/collocation.hpp"
#include "lanefree/duality.hpp"
#include "lanefree/dynamics.hpp"
#include "lanefree/geometry.hpp"

namespace lanefree {

// How the running pose-deviation cost is accumulated.
//  kTimeAveraged: integral over normalised time tau in [0, 1], i.e. the
//                 real-time integral divided by the horizon length.
//  kRealTime:     integral over t in [t0, tf].
enum class LagrangeForm { kTimeAveraged, kRealTime };

inline const char* ToString(LagrangeForm f) {
  return f == LagrangeForm::kRealTime ? "real_time" : "time_averaged";
}

struct Gains {
  double alpha = 1.0;
  Eigen::Matrix3d q = Eigen::Vector3d(0.025, 0.025, 0.0025).asDiagonal();
  LagrangeForm form = LagrangeForm::kTimeAveraged;
  // Divide the summed deviation term by the fleet size so the balance against
  // the shared time term does not shift with N.
  bool vehicle_mean = true;
};

struct CavSpec {
  std::string id;
  VehicleParams params;
  Pose z0;
  double v0 = 10.0;
  Pose zf;
  StateBounds bounds;
};

struct Scenario {
  IntersectionLayout layout = BuildIntersection();
  std::vector<CavSpec> cavs;
  Gains gains;
  double d_min = 0.1;
  double d_rmin = 0.1;
  double t0 = 0.0;
};

// Node values of one vehicle and its dense samples.
struct CavTrajectory {
  std::string id;
  std::vector<StateVec<double>> node_states;
  std::vector<InputVec<double>> interval_inputs;
  std::vector<StateVec<double>> states;  // on CrossingSolution::times
  std::vector<InputVec<double>> inputs;
};

struct PairDuals {
  int first = 0;
  int second = 0;
  std::vector<DualBlock> nodes;
};

struct CrossingSolution {
  double t0 = 0.0;
  double tf = 0.0;
  int intervals = 0;
  int degree = 0;
  CollocationKind kind = CollocationKind::kRadau;
  std::vector<double> node_times;
  std::vector<double> times;  // dense sample grid
  std::vector<CavTrajectory> cavs;
  std::vector<PairDuals> pairs;

  std::string status;
  int iterations = 0;
  double stationarity = 0.0;
  double primal_infeasibility = 0.0;
  double complementarity = 0.0;
  double objective = 0.0;
};

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  bool ok() const { return errors.empty(); }
};

namespace internal {

inline ConvexPolytope PosedBody(const CavSpec& c, const Pose& z) {
  return PolytopeAtPose(BaseBodyPolytope(c.params), z);
}

inline std::string Fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace internal

inline ValidationReport ValidateScenario(const Scenario& sc) {
  ValidationReport rep;
  if (sc.cavs.empty()) rep.errors.push_back("scenario has no vehicles");
  if (!(sc.gains.alpha >= 0.0)) rep.errors.push_back("gain alpha must be nonnegative");
  if (!sc.gains.q.isApprox(sc.gains.q.transpose())) rep.errors.push_back("gain Q must be symmetric");
  if (Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(sc.gains.q).eigenvalues().minCoeff() < -1e-12) {
    rep.errors.push_back("gain Q must be positive semidefinite");
  }
  if (!(sc.d_min >= 0.0) || !(sc.d_rmin >= 0.0)) rep.errors.push_back("clearances must be nonnegative");

  std::set<std::string> ids;
  for (const auto& c : sc.cavs) {
    const std::string who = "vehicle '" + c.id + "': ";
    if (!ids.insert(c.id).second) rep.errors.push_back(who + "duplicate id");
    for (const auto& e : c.params.Validate()) rep.errors.push_back(who + e);
    for (const auto& e : c.bounds.Validate()) rep.errors.push_back(who + e);
    if (!(c.v0 >= c.bounds.v_min && c.v0 <= c.bounds.v_max)) {
      rep.errors.push_back(who + "initial speed " + internal::Fmt(c.v0) + " outside [v_min, v_max]");
    }
    // Headings are not wrapped, so the goal heading fixes the turning direction.
    if (std::abs(c.zf.theta - c.z0.theta) > std::numbers::pi) {
      rep.warnings.push_back(who + "goal heading differs from the initial heading by more than pi");
    }
    if (!c.params.Validate().empty()) continue;
    const ConvexPolytope start = internal::PosedBody(c, c.z0);
    const ConvexPolytope goal = internal::PosedBody(c, c.zf);
    for (size_t r = 0; r < sc.layout.boundaries.size(); ++r) {
      const std::string name = IntersectionLayout::kBoundaryNames[r];
      const double ds = MinDistanceOracle(start, sc.layout.boundaries[r]);
      if (ds < sc.d_rmin) {
        rep.errors.push_back(who + "initial road clearance to " + name + " is " + internal::Fmt(ds) +
                             " m, below " + internal::Fmt(sc.d_rmin));
      }
      if (sc.layout.boundaries[r].Contains(Vec2(c.zf.x, c.zf.y))) {
        rep.warnings.push_back(who + "goal position lies inside boundary " + name);
      } else if (MinDistanceOracle(goal, sc.layout.boundaries[r]) < sc.d_rmin) {
        rep.warnings.push_back(who + "goal pose is closer than d_rmin to boundary " + name);
      }
    }
  }
  for (size_t i = 0; i < sc.cavs.size(); ++i) {
    for (size_t j = i + 1; j < sc.cavs.size(); ++j) {
      if (!sc.cavs[i].params.Validate().empty() || !sc.cavs[j].params.Validate().empty()) continue;
      const double d = MinDistanceOracle(internal::PosedBody(sc.cavs[i], sc.cavs[i].z0),
                                         internal::PosedBody(sc.cavs[j], sc.cavs[j].z0));
      if (d < sc.d_min) {
        rep.errors.push_back("initial separation violated between '" + sc.cavs[i].id + "' and '" +
                             sc.cavs[j].id + "': " + internal::Fmt(d) + " m");
      }
      // All CAVs arrive at the common final time, so overlapping goals are infeasible.
      const double dg = MinDistanceOracle(internal::PosedBody(sc.cavs[i], sc.cavs[i].zf),
                                          internal::PosedBody(sc.cavs[j], sc.cavs[j].zf));
      if (dg < sc.d_min) {
        rep.errors.push_back("goal separation violated between '" + sc.cavs[i].id + "' and '" +
                             sc.cavs[j].id + "': " + internal::Fmt(dg) + " m");
      }
    }
  }
  return rep;
}

// Running cost of one pose sample.
inline double PoseDeviationCost(const Eigen::Matrix3d& q, const StateVec<double>& s, const Pose& goal) {
  const Eigen::Vector3d e(s[kPosX] - goal.x, s[kPosY] - goal.y, s[kHeading] - goal.theta);
  return e.dot(q * e);
}

// alpha (tf - t0)^2 plus the pose-deviation integral, evaluated with the
// collocation quadrature on the node values of each vehicle.
inline double ObjectiveValue(const CrossingSolution& sol, const Scenario& sc) {
  const double horizon = sol.tf - sol.t0;
  double j = sc.gains.alpha * horizon * horizon;
  if (sol.cavs.empty()) return j;
  const CollocationScheme scheme(sol.degree, sol.kind);
  const int d = sol.degree;
  const int per = scheme.end_is_node() ? d : d + 1;
  const double h = 1.0 / sol.intervals;
  double scale = sc.gains.form == LagrangeForm::kRealTime ? horizon : 1.0;
  if (sc.gains.vehicle_mean) scale /= static_cast<double>(sol.cavs.size());
  for (size_t c = 0; c < sol.cavs.size(); ++c) {
    const auto& nodes = sol.cavs[c].node_states;
    double acc = 0.0;
    for (int k = 0; k < sol.intervals; ++k) {
      for (int m = 0; m <= d; ++m) {
        acc += h * scheme.quad_weights()(m) *
               PoseDeviationCost(sc.gains.q, nodes[k * per + m], sc.cavs[c].zf);
      }
    }
    j += scale * acc;
  }
  return j;
}

// ---------------------------------------------------------------------------
// JSON input/output.

namespace internal {

using nlohmann::json;

inline void RequireKeys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ScenarioError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ScenarioError(where + ": unknown key '" + it.key() + "'");
  }
}

inline double Num(const json& j, const char* key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ScenarioError(where + "." + key + ": expected a number");
  return v.get<double>();
}

inline void Opt(const json& j, const char* key, double& out, const std::string& where) {
  if (j.contains(key)) out = Num(j, key, where);
}

inline Pose ReadPose(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ScenarioError(where + ": expected [x, y, theta]");
  for (const auto& v : j) {
    if (!v.is_number()) throw ScenarioError(where + ": expected numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json WritePose(const Pose& p) { return json::array({p.x, p.y, p.theta}); }

inline VehicleParams ReadParams(const json& j, const std::string& where) {
  RequireKeys(j, {"mass", "yaw_inertia", "lf", "lr", "cf", "cr", "length", "width"}, where);
  VehicleParams p;
  Opt(j, "mass", p.mass, where);
  Opt(j, "yaw_inertia", p.yaw_inertia, where);
  Opt(j, "lf", p.lf, where);
  Opt(j, "lr", p.lr, where);
  Opt(j, "cf", p.cf, where);
  Opt(j, "cr", p.cr, where);
  Opt(j, "length", p.length, where);
  Opt(j, "width", p.width, where);
  return p;
}

inline StateBounds ReadBounds(const json& j, const std::string& where) {
  RequireKeys(j, {"v_min", "v_max", "a_max", "delta_max", "r_max", "beta_max"}, where);
  StateBounds b;
  Opt(j, "v_min", b.v_min, where);
  Opt(j, "v_max", b.v_max, where);
  Opt(j, "a_max", b.a_max, where);
  Opt(j, "delta_max", b.delta_max, where);
  Opt(j, "r_max", b.r_max, where);
  Opt(j, "beta_max", b.beta_max, where);
  return b;
}

inline json WriteParams(const VehicleParams& p) {
  return {{"mass", p.mass}, {"yaw_inertia", p.yaw_inertia}, {"lf", p.lf},         {"lr", p.lr},
          {"cf", p.cf},     {"cr", p.cr},                   {"length", p.length}, {"width", p.width}};
}

inline json WriteBounds(const StateBounds& b) {
  return {{"v_min", b.v_min},         {"v_max", b.v_max}, {"a_max", b.a_max},
          {"delta_max", b.delta_max}, {"r_max", b.r_max}, {"beta_max", b.beta_max}};
}

}  // namespace internal

inline Scenario ScenarioFromJson(const nlohmann::json& j) {
  using internal::Num;
  using internal::RequireKeys;
  try {
    RequireKeys(j, {"layout", "gains", "safety", "cavs", "t0"}, "scenario");
    Scenario sc;
    if (j.contains("layout")) {
      const auto& l = j["layout"];
      RequireKeys(l, {"w", "L"}, "layout");
      double w = 5.0, len = 35.0;
      internal::Opt(l, "w", w, "layout");
      internal::Opt(l, "L", len, "layout");
      sc.layout = BuildIntersection(w, len);
    }
    if (j.contains("gains")) {
      const auto& g = j["gains"];
      RequireKeys(g, {"alpha", "Q", "lagrange_form", "vehicle_mean"}, "gains");
      internal::Opt(g, "alpha", sc.gains.alpha, "gains");
      if (g.contains("Q")) {
        const auto& q = g["Q"];
        if (q.is_array() && q.size() == 3 && q[0].is_number()) {
          sc.gains.q = Eigen::Vector3d(q[0].get<double>(), q[1].get<double>(), q[2].get<double>())
                           .asDiagonal();
        } else if (q.is_array() && q.size() == 3) {
          for (int r = 0; r < 3; ++r) {
            if (!q[r].is_array() || q[r].size() != 3) throw ScenarioError("gains.Q: expected 3x3");
            for (int c = 0; c < 3; ++c) sc.gains.q(r, c) = q[r][c].get<double>();
          }
        } else {
          throw ScenarioError("gains.Q: expected a diagonal [q1, q2, q3] or a 3x3 matrix");
        }
      }
      if (g.contains("vehicle_mean")) {
        if (!g["vehicle_mean"].is_boolean()) throw ScenarioError("gains.vehicle_mean: expected a boolean");
        sc.gains.vehicle_mean = g["vehicle_mean"].get<bool>();
      }
      if (g.contains("lagrange_form")) {
        const std::string f = g["lagrange_form"].get<std::string>();
        if (f == "time_averaged") {
          sc.gains.form = LagrangeForm::kTimeAveraged;
        } else if (f == "real_time") {
          sc.gains.form = LagrangeForm::kRealTime;
        } else {
          throw ScenarioError("gains.lagrange_form: expected 'time_averaged' or 'real_time'");
        }
      }
    }
    if (j.contains("safety")) {
      const auto& s = j["safety"];
      RequireKeys(s, {"d_min", "d_rmin"}, "safety");
      internal::Opt(s, "d_min", sc.d_min, "safety");
      internal::Opt(s, "d_rmin", sc.d_rmin, "safety");
    }
    internal::Opt(j, "t0", sc.t0, "scenario");
    if (!j.contains("cavs") || !j["cavs"].is_array()) throw ScenarioError("scenario: 'cavs' array required");
    int idx = 0;
    for (const auto& c : j["cavs"]) {
      const std::string where = "cavs[" + std::to_string(idx++) + "]";
      RequireKeys(c, {"id", "params", "z0", "v0", "zf", "bounds"}, where);
      CavSpec cav;
      cav.id = c.contains("id") ? c["id"].get<std::string>() : std::to_string(idx - 1);
      if (c.contains("params")) cav.params = internal::ReadParams(c["params"], where + ".params");
      if (c.contains("bounds")) cav.bounds = internal::ReadBounds(c["bounds"], where + ".bounds");
      cav.z0 = internal::ReadPose(c.at("z0"), where + ".z0");
      cav.zf = internal::ReadPose(c.at("zf"), where + ".zf");
      cav.v0 = Num(c, "v0", where);
      sc.cavs.push_back(cav);
    }
    return sc;
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("scenario: ") + e.what());
  }
}

// Parse errors carry the line and column reported by the JSON parser.
inline Scenario LoadScenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError(path + ": " + e.what());
  }
  return ScenarioFromJson(j);
}

inline nlohmann::json ScenarioToJson(const Scenario& sc) {
  using nlohmann::json;
  json q = json::array();
  for (int r = 0; r < 3; ++r) q.push_back(json::array({sc.gains.q(r, 0), sc.gains.q(r, 1), sc.gains.q(r, 2)}));
  json cavs = json::array();
  for (const auto& c : sc.cavs) {
    cavs.push_back({{"id", c.id},
                    {"params", internal::WriteParams(c.params)},
                    {"z0", internal::WritePose(c.z0)},
                    {"v0", c.v0},
                    {"zf", internal::WritePose(c.zf)},
                    {"bounds", internal::WriteBounds(c.bounds)}});
  }
  return {{"layout", {{"w", sc.layout.lane_width}, {"L", sc.layout.arm_length}}},
          {"gains",
           {{"alpha", sc.gains.alpha},
            {"Q", q},
            {"lagrange_form", ToString(sc.gains.form)},
            {"vehicle_mean", sc.gains.vehicle_mean}}},
          {"safety", {{"d_min", sc.d_min}, {"d_rmin", sc.d_rmin}}},
          {"t0", sc.t0},
          {"cavs", cavs}};
}

// Keeps the first n vehicles of a template scenario.
inline Scenario SubScenario(const Scenario& sc, int n) {
  if (n < 1 || n > static_cast<int>(sc.cavs.size())) {
    throw ScenarioError("template has " + std::to_string(sc.cavs.size()) + " vehicles, requested " +
                        std::to_string(n));
  }
  Scenario out = sc;
  out.cavs.resize(n);
  return out;
}

namespace internal {

template <size_t N>
json ArrayJson(const std::array<double, N>& a) {
  json out = json::array();
  for (double v : a) out.push_back(v);
  return out;
}

template <size_t N>
std::array<double, N> JsonArray(const json& j) {
  if (!j.is_array() || j.size() != N) throw ScenarioError("solution: malformed fixed-size array");
  std::array<double, N> a{};
  for (size_t i = 0; i < N; ++i) a[i] = j[i].get<double>();
  return a;
}

}  // namespace internal

// Serialisation excludes wall time so identical solves give identical bytes.
inline nlohmann::json SolutionToJson(const CrossingSolution& sol) {
  using nlohmann::json;
  json cavs = json::array();
  for (const auto& c : sol.cavs) {
    json nodes = json::array(), uin = json::array(), xs = json::array(), us = json::array();
    for (const auto& s : c.node_states) nodes.push_back(internal::ArrayJson(s));
    for (const auto& u : c.interval_inputs) uin.push_back(internal::ArrayJson(u));
    for (const auto& s : c.states) xs.push_back(internal::ArrayJson(s));
    for (const auto& u : c.inputs) us.push_back(internal::ArrayJson(u));
    cavs.push_back({{"id", c.id}, {"node_states", nodes}, {"interval_inputs", uin}, {"states", xs}, {"inputs", us}});
  }
  json pairs = json::array();
  for (const auto& p : sol.pairs) {
    json blocks = json::array();
    for (const auto& d : p.nodes) {
      blocks.push_back({{"lambda_fwd", std::vector<double>(d.lambda_fwd.data(), d.lambda_fwd.data() + d.lambda_fwd.size())},
                        {"lambda_rev", std::vector<double>(d.lambda_rev.data(), d.lambda_rev.data() + d.lambda_rev.size())},
                        {"s", {d.s.x(), d.s.y()}}});
    }
    pairs.push_back({{"first", p.first}, {"second", p.second}, {"duals", blocks}});
  }
  return {{"t0", sol.t0},
          {"tf", sol.tf},
          {"collocation", {{"intervals", sol.intervals}, {"degree", sol.degree}, {"kind", ToString(sol.kind)}}},
          {"solver",
           {{"status", sol.status},
            {"iterations", sol.iterations},
            {"objective", sol.objective},
            {"stationarity", sol.stationarity},
            {"primal_infeasibility", sol.primal_infeasibility},
            {"complementarity", sol.complementarity}}},
          {"node_times", sol.node_times},
          {"times", sol.times},
          {"cavs", cavs},
          {"pairs", pairs}};
}

inline CrossingSolution SolutionFromJson(const nlohmann::json& j) {
  try {
    CrossingSolution sol;
    sol.t0 = j.at("t0").get<double>();
    sol.tf = j.at("tf").get<double>();
    const auto& col = j.at("collocation");
    sol.intervals = col.at("intervals").get<int>();
    sol.degree = col.at("degree").get<int>();
    sol.kind = col.at("kind").get<std::string>() == "legendre" ? CollocationKind::kLegendre
                                                               : CollocationKind::kRadau;
    const auto& s = j.at("solver");
    sol.status = s.at("status").get<std::string>();
    sol.iterations = s.at("iterations").get<int>();
    sol.objective = s.at("objective").get<double>();
    sol.stationarity = s.at("stationarity").get<double>();
    sol.primal_infeasibility = s.at("primal_infeasibility").get<double>();
    sol.complementarity = s.at("complementarity").get<double>();
    sol.node_times = j.at("node_times").get<std::vector<double>>();
    sol.times = j.at("times").get<std::vector<double>>();
    for (const auto& c : j.at("cavs")) {
      CavTrajectory t;
      t.id = c.at("id").get<std::string>();
      for (const auto& v : c.at("node_states")) t.node_states.push_back(internal::JsonArray<kNumStates>(v));
      for (const auto& v : c.at("interval_inputs")) t.interval_inputs.push_back(internal::JsonArray<kNumInputs>(v));
      for (const auto& v : c.at("states")) t.states.push_back(internal::JsonArray<kNumStates>(v));
      for (const auto& v : c.at("inputs")) t.inputs.push_back(internal::JsonArray<kNumInputs>(v));
      if (t.states.size() != sol.times.size() || t.inputs.size() != sol.times.size()) {
        throw ScenarioError("solution: sample count does not match the time grid");
      }
      sol.cavs.push_back(std::move(t));
    }
    for (const auto& p : j.at("pairs")) {
      PairDuals pd;
      pd.first = p.at("first").get<int>();
      pd.second = p.at("second").get<int>();
      for (const auto& b : p.at("duals")) {
        DualBlock d;
        const auto lf = b.at("lambda_fwd").get<std::vector<double>>();
        const auto lr = b.at("lambda_rev").get<std::vector<double>>();
        d.lambda_fwd = Eigen::Map<const Eigen::VectorXd>(lf.data(), static_cast<int>(lf.size()));
        d.lambda_rev = Eigen::Map<const Eigen::VectorXd>(lr.data(), static_cast<int>(lr.size()));
        d.s = Vec2(b.at("s")[0].get<double>(), b.at("s")[1].get<double>());
        pd.nodes.push_back(d);
      }
      sol.pairs.push_back(std::move(pd));
    }
    return sol;
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("solution: ") + e.what());
  }
}

inline CrossingSolution LoadSolution(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open solution file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError(path + ": " + e.what());
  }
  return SolutionFromJson(j);
}

}  // namespace lanefree

#endif  // LANEFREE_SCENARIO_HPP_
