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

#ifndef LANEFREE_DYNAMICS_HPP_
#define LANEFREE_DYNAMICS_HPP_

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace lanefree {

// State vector ordering used throughout: [r, beta, V, x, y, theta].
inline constexpr int kNumStates = 6;
inline constexpr int kNumInputs = 2;
enum StateIndex : int { kYawRate = 0, kSideslip, kSpeed, kPosX, kPosY, kHeading };
enum InputIndex : int { kAccel = 0, kSteer };

template <typename S>
using StateVec = std::array<S, kNumStates>;
template <typename S>
using InputVec = std::array<S, kNumInputs>;

// Chassis and tyre parameters of the single-track model. The defaults describe
// a mid-size passenger car; they are assumed values, not measured ones.
struct VehicleParams {
  double mass = 1500.0;         // kg
  double yaw_inertia = 2500.0;  // kg m^2
  double lf = 1.1;              // CG to front axle, m
  double lr = 1.6;              // CG to rear axle, m
  double cf = 55000.0;          // front cornering stiffness, N/rad
  double cr = 55000.0;          // rear cornering stiffness, N/rad
  double length = 4.6;          // body length, m
  double width = 2.0;           // body width, m

  // Empty when valid, otherwise one message per broken invariant.
  std::vector<std::string> Validate() const {
    std::vector<std::string> errs;
    auto positive = [&](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) errs.push_back(std::string(name) + " must be positive");
    };
    positive(mass, "mass");
    positive(yaw_inertia, "yaw_inertia");
    positive(lf, "lf");
    positive(lr, "lr");
    positive(cf, "cf");
    positive(cr, "cr");
    positive(length, "length");
    positive(width, "width");
    if (lf + lr >= length) errs.push_back("lf + lr must be shorter than the body length");
    return errs;
  }
};

// Linear-tyre coefficients of the lateral/yaw equations.
struct StabilityDerivatives {
  double n_r = 0.0;      // yaw damping (Ñ_r)
  double n_beta = 0.0;   // yaw moment per unit sideslip
  double n_delta = 0.0;  // yaw moment per unit steer
  double y_r = 0.0;      // lateral force per unit yaw rate (Ỹ_r)
  double y_beta = 0.0;   // lateral force per unit sideslip
  double y_delta = 0.0;  // lateral force per unit steer
};

struct VehicleState {
  double r = 0.0;      // yaw rate, rad/s
  double beta = 0.0;   // sideslip, rad
  double v = 0.0;      // speed, m/s
  double x = 0.0;      // m
  double y = 0.0;      // m
  double theta = 0.0;  // heading, rad

  StateVec<double> ToArray() const { return {r, beta, v, x, y, theta}; }
  static VehicleState FromArray(const StateVec<double>& a) {
    return {a[kYawRate], a[kSideslip], a[kSpeed], a[kPosX], a[kPosY], a[kHeading]};
  }
};

struct ControlInput {
  double a = 0.0;      // m/s^2
  double delta = 0.0;  // rad

  InputVec<double> ToArray() const { return {a, delta}; }
};

// Symmetric box limits; only the speed has a separate lower bound.
struct StateBounds {
  double v_min = 0.5;
  double v_max = 25.0;
  double a_max = 3.0;
  double delta_max = 0.67;
  double r_max = 0.7;
  double beta_max = 0.5;

  std::vector<std::string> Validate() const {
    std::vector<std::string> errs;
    if (!(v_min > 0.0)) errs.push_back("v_min must be positive");
    if (!(v_max > v_min)) errs.push_back("v_max must exceed v_min");
    if (!(a_max > 0.0)) errs.push_back("a_max must be positive");
    if (!(delta_max > 0.0)) errs.push_back("delta_max must be positive");
    if (!(r_max > 0.0)) errs.push_back("r_max must be positive");
    if (!(beta_max > 0.0)) errs.push_back("beta_max must be positive");
    return errs;
  }
};

class SpeedBelowFloorError : public std::domain_error {
 public:
  SpeedBelowFloorError(double speed, double floor)
      : std::domain_error("speed " + std::to_string(speed) + " m/s is below the model floor " +
                          std::to_string(floor) + " m/s"),
        speed_(speed) {}
  double speed() const { return speed_; }

 private:
  double speed_;
};

// Slip angles a_f = delta - beta - lf r / V and a_r = -beta + lr r / V with
// linear tyre forces give the closed forms below.
inline StabilityDerivatives ComputeStabilityDerivatives(const VehicleParams& p) {
  StabilityDerivatives d;
  d.y_beta = -(p.cf + p.cr);
  d.y_r = p.lr * p.cr - p.lf * p.cf;
  d.y_delta = p.cf;
  d.n_beta = p.lr * p.cr - p.lf * p.cf;
  d.n_r = -(p.lf * p.lf * p.cf + p.lr * p.lr * p.cr);
  d.n_delta = p.lf * p.cf;
  return d;
}

// Right-hand side of the single-track model. No speed check; callers that can
// see arbitrary input go through StateRate() below.
template <typename S>
StateVec<S> StateRateKernel(const StateVec<S>& x, const InputVec<S>& u,
                            const StabilityDerivatives& d, const VehicleParams& p) {
  const S& r = x[kYawRate];
  const S& beta = x[kSideslip];
  const S& v = x[kSpeed];
  const S& th = x[kHeading];
  const S& delta = u[kSteer];
  using std::cos;
  using std::sin;
  StateVec<S> out;
  out[kYawRate] = d.n_r / (p.yaw_inertia * v) * r + (d.n_beta / p.yaw_inertia) * beta +
                  (d.n_delta / p.yaw_inertia) * delta;
  out[kSideslip] = (d.y_r / (p.mass * v * v) - 1.0) * r + d.y_beta / (p.mass * v) * beta +
                   d.y_delta / (p.mass * v) * delta;
  out[kSpeed] = u[kAccel];
  out[kPosX] = v * cos(th);
  out[kPosY] = v * sin(th);
  out[kHeading] = r;
  return out;
}

template <typename S>
struct RateJacobians {
  std::array<std::array<S, kNumStates>, kNumStates> dx{};  // d rate[row] / d state[col]
  std::array<std::array<S, kNumInputs>, kNumStates> du{};  // d rate[row] / d input[col]
};

template <typename S>
RateJacobians<S> StateRateJacobianKernel(const StateVec<S>& x, const InputVec<S>& u,
                                         const StabilityDerivatives& d, const VehicleParams& p) {
  const S& r = x[kYawRate];
  const S& beta = x[kSideslip];
  const S& v = x[kSpeed];
  const S& th = x[kHeading];
  const S& delta = u[kSteer];
  using std::cos;
  using std::sin;
  const double m = p.mass;
  const double iz = p.yaw_inertia;

  RateJacobians<S> j;
  for (auto& row : j.dx) row.fill(S(0.0));
  for (auto& row : j.du) row.fill(S(0.0));

  j.dx[kYawRate][kYawRate] = d.n_r / (iz * v);
  j.dx[kYawRate][kSideslip] = S(d.n_beta / iz);
  j.dx[kYawRate][kSpeed] = -d.n_r * r / (iz * v * v);
  j.du[kYawRate][kSteer] = S(d.n_delta / iz);

  j.dx[kSideslip][kYawRate] = d.y_r / (m * v * v) - 1.0;
  j.dx[kSideslip][kSideslip] = d.y_beta / (m * v);
  j.dx[kSideslip][kSpeed] = -2.0 * d.y_r * r / (m * v * v * v) - d.y_beta * beta / (m * v * v) -
                            d.y_delta * delta / (m * v * v);
  j.du[kSideslip][kSteer] = d.y_delta / (m * v);

  j.du[kSpeed][kAccel] = S(1.0);

  j.dx[kPosX][kSpeed] = cos(th);
  j.dx[kPosX][kHeading] = -v * sin(th);
  j.dx[kPosY][kSpeed] = sin(th);
  j.dx[kPosY][kHeading] = v * cos(th);

  j.dx[kHeading][kYawRate] = S(1.0);
  return j;
}

inline StateVec<double> StateRate(const VehicleState& s, const ControlInput& u,
                                  const StabilityDerivatives& d, const VehicleParams& p,
                                  double speed_floor = StateBounds{}.v_min) {
  if (!(s.v >= speed_floor)) throw SpeedBelowFloorError(s.v, speed_floor);
  return StateRateKernel<double>(s.ToArray(), u.ToArray(), d, p);
}

inline RateJacobians<double> StateRateJacobians(const VehicleState& s, const ControlInput& u,
                                                const StabilityDerivatives& d,
                                                const VehicleParams& p,
                                                double speed_floor = StateBounds{}.v_min) {
  if (!(s.v >= speed_floor)) throw SpeedBelowFloorError(s.v, speed_floor);
  return StateRateJacobianKernel<double>(s.ToArray(), u.ToArray(), d, p);
}

struct LimitViolation {
  std::string quantity;
  double value = 0.0;
  double bound = 0.0;
  double margin = 0.0;  // positive: how far beyond the bound
};

inline std::vector<LimitViolation> CheckLimits(const VehicleState& s, const ControlInput& u,
                                               const StateBounds& b, double slack = 0.0) {
  std::vector<LimitViolation> out;
  auto upper = [&](const char* name, double value, double bound) {
    if (value > bound + slack) out.push_back({name, value, bound, value - bound});
  };
  auto lower = [&](const char* name, double value, double bound) {
    if (value < bound - slack) out.push_back({name, value, bound, bound - value});
  };
  lower("V", s.v, b.v_min);
  upper("V", s.v, b.v_max);
  upper("|a|", std::abs(u.a), b.a_max);
  upper("|delta|", std::abs(u.delta), b.delta_max);
  upper("|r|", std::abs(s.r), b.r_max);
  upper("|beta|", std::abs(s.beta), b.beta_max);
  return out;
}

}  // namespace lanefree

#endif  // LANEFREE_DYNAMICS_HPP_
