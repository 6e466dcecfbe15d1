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

#ifndef LANEFREE_TRANSCRIPTION_HPP_
#define LANEFREE_TRANSCRIPTION_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lanefree/autodiff.hpp"
#include "lanefree/collocation.hpp"
#include "lanefree/duality.hpp"
#include "lanefree/dynamics.hpp"
#include "lanefree/geometry.hpp"
#include "lanefree/nlp.hpp"
#include "lanefree/scenario.hpp"
#include "lanefree/solver.hpp"

namespace lanefree {

// Which part of the goal pose is imposed as a hard terminal equality.
enum class TerminalMode { kPose, kPosition, kNone };

// Repeats one clearance condition at node + 1 with the separator direction
// of node. Along a straight, non-rotating motion the gap is then affine in
// time over the node gap, so clearance holds between the two nodes as well.
// For a road condition `second` is the boundary index.
struct GapLink {
  bool road = false;
  int first = 0;
  int second = 0;
  int node = 0;
  bool operator==(const GapLink&) const = default;
};

struct TranscriptionConfig {
  int intervals = 15;
  int degree = 5;
  CollocationKind kind = CollocationKind::kRadau;
  TerminalMode terminal = TerminalMode::kPose;
  double horizon_min = 0.1;  // bounds on tf - t0, s
  double horizon_max = 60.0;
  bool road_constraints = true;
  double sample_dt = 0.01;  // dense output grid, s
  std::vector<GapLink> gap_links;
  bool link_all_gaps = false;  // every condition over every node gap

  std::vector<std::string> Validate() const {
    std::vector<std::string> e;
    if (intervals < 1) e.push_back("intervals must be >= 1");
    if (degree < 1 || degree > 9) e.push_back("degree must be in [1, 9]");
    if (!(horizon_min > 0.0) || !(horizon_max > horizon_min)) e.push_back("bad horizon bounds");
    if (!(sample_dt > 0.0)) e.push_back("sample_dt must be positive");
    return e;
  }
};

class TranscriptionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Number of dual variables in one avoidance block between two rectangles,
// and in a gap link, which borrows its separator from the node before.
inline constexpr int kRectDualSize = 4 + 4 + 2;
inline constexpr int kLinkDualSize = 4 + 4;
// A link keeps the gap and equality rows; the norm row stays with its node.
inline constexpr int kLinkRows = kDualRows - 1;

// Direct-collocation NLP of the multi-vehicle crossing problem.
//
// Variables: [tf | per vehicle: node states, interval inputs | road duals
// (vehicle, node, boundary) | pair duals (pair, node) | gap link multipliers
// in link order]. Time is normalised to tau in [0, 1]; every dynamics defect
// carries the factor h (tf - t0).
class CrossingNlp : public NlpProblem {
 public:
  CrossingNlp(Scenario sc, TranscriptionConfig cfg)
      : sc_(std::move(sc)), cfg_(cfg), scheme_(CheckedDegree(cfg_), cfg_.kind) {
    if (sc_.cavs.empty()) throw TranscriptionError("scenario has no vehicles");
    const int n = num_cavs();
    d_ = cfg_.degree;
    np_ = cfg_.intervals;
    h_ = 1.0 / np_;
    nodes_ = scheme_.end_is_node() ? np_ * d_ + 1 : np_ * (d_ + 1) + 1;
    for (const auto& c : sc_.cavs) derivs_.push_back(ComputeStabilityDerivatives(c.params));
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) pairs_.emplace_back(i, j);
    }
    nb_ = cfg_.road_constraints ? static_cast<int>(sc_.layout.boundaries.size()) : 0;

    // Variable layout.
    cav_stride_ = nodes_ * kNumStates + np_ * kNumInputs;
    road_offset_ = 1 + n * cav_stride_;
    pair_offset_ = road_offset_ + n * nodes_ * nb_ * kRectDualSize;
    link_offset_ = pair_offset_ + static_cast<int>(pairs_.size()) * nodes_ * kRectDualSize;
    const int links = cfg_.link_all_gaps ? (n * nb_ + static_cast<int>(pairs_.size())) * (nodes_ - 1)
                                         : static_cast<int>(cfg_.gap_links.size());
    nvar_ = link_offset_ + links * kLinkDualSize;

    // Row layout.
    int row = 0;
    auto block = [&](const char* name, int size) {
      row_blocks_.push_back({name, row, size});
      row += size;
    };
    block("initial", n * kNumStates);
    block("dynamics", n * np_ * d_ * kNumStates);
    block("continuity", scheme_.end_is_node() ? 0 : n * np_ * kNumStates);
    block("terminal", n * TerminalRows());
    block("road", n * nodes_ * nb_ * kDualRows);
    block("pair", static_cast<int>(pairs_.size()) * nodes_ * kDualRows);
    block("gap_links", links * kLinkRows);
    ncon_ = row;

    BuildDualTerms();
    ProbeStructure();
    BuildPatterns();
  }

  // ----- layout -------------------------------------------------------------
  const Scenario& scenario() const { return sc_; }
  const TranscriptionConfig& config() const { return cfg_; }
  const CollocationScheme& scheme() const { return scheme_; }
  int num_cavs() const { return static_cast<int>(sc_.cavs.size()); }
  int num_nodes() const { return nodes_; }
  const std::vector<std::pair<int, int>>& pairs() const { return pairs_; }
  static constexpr int tf_index() { return 0; }

  // Global node index of point m (0 = interval start) of interval k.
  int node(int k, int m) const {
    if (k >= np_) return nodes_ - 1;
    return scheme_.end_is_node() ? k * d_ + m : k * (d_ + 1) + m;
  }
  double node_tau(int g) const {
    if (g == nodes_ - 1) return 1.0;
    const int per = scheme_.end_is_node() ? d_ : d_ + 1;
    return (g / per + scheme_.tau()[g % per]) / np_;
  }
  int state_index(int cav, int g, int s) const { return 1 + cav * cav_stride_ + g * kNumStates + s; }
  int input_index(int cav, int k, int u) const {
    return 1 + cav * cav_stride_ + nodes_ * kNumStates + k * kNumInputs + u;
  }
  int road_dual_index(int cav, int g, int r) const {
    return road_offset_ + ((cav * nodes_ + g) * nb_ + r) * kRectDualSize;
  }
  int pair_dual_index(int p, int g) const { return pair_offset_ + (p * nodes_ + g) * kRectDualSize; }

  std::vector<IndexBlock> VariableBlocks() const {
    std::vector<IndexBlock> b{{"tf", 0, 1}};
    for (int c = 0; c < num_cavs(); ++c) {
      b.push_back({sc_.cavs[c].id + "/states", state_index(c, 0, 0), nodes_ * kNumStates});
      b.push_back({sc_.cavs[c].id + "/inputs", input_index(c, 0, 0), np_ * kNumInputs});
    }
    b.push_back({"road_duals", road_offset_, pair_offset_ - road_offset_});
    b.push_back({"pair_duals", pair_offset_, link_offset_ - pair_offset_});
    b.push_back({"link_duals", link_offset_, nvar_ - link_offset_});
    return b;
  }

  // ----- NlpProblem -------------------------------------------------------
  int num_variables() const override { return nvar_; }
  int num_constraints() const override { return ncon_; }
  std::vector<IndexBlock> ConstraintBlocks() const override { return row_blocks_; }

  void GetBounds(Eigen::VectorXd& xl, Eigen::VectorXd& xu, Eigen::VectorXd& gl,
                 Eigen::VectorXd& gu) const override {
    xl = Eigen::VectorXd::Constant(nvar_, -kInf);
    xu = Eigen::VectorXd::Constant(nvar_, kInf);
    xl(0) = sc_.t0 + cfg_.horizon_min;
    xu(0) = sc_.t0 + cfg_.horizon_max;
    for (int c = 0; c < num_cavs(); ++c) {
      const StateBounds& b = sc_.cavs[c].bounds;
      // Node 0 is pinned by the initial-state equalities.
      for (int g = 1; g < nodes_; ++g) {
        Box(xl, xu, state_index(c, g, kYawRate), -b.r_max, b.r_max);
        Box(xl, xu, state_index(c, g, kSideslip), -b.beta_max, b.beta_max);
        Box(xl, xu, state_index(c, g, kSpeed), b.v_min, b.v_max);
      }
      for (int k = 0; k < np_; ++k) {
        Box(xl, xu, input_index(c, k, kAccel), -b.a_max, b.a_max);
        Box(xl, xu, input_index(c, k, kSteer), -b.delta_max, b.delta_max);
      }
    }
    for (const auto& t : terms_) {
      const DualPairTerm& term = types_[t.type];
      const int nlam = term.first_base().faces() + term.second().faces();
      for (int q = 0; q < nlam; ++q) xl(t.idx[term.fwd_offset() + q]) = 0.0;
    }
    gl = Eigen::VectorXd::Zero(ncon_);
    gu = Eigen::VectorXd::Zero(ncon_);
    for (const auto& t : terms_) {
      gu(t.row) = kInf;      // dual gap >= 0
      if (!t.linked) gu(t.row + 5) = kInf;  // 1 - |s|^2 >= 0
    }
  }

  double Objective(const Eigen::VectorXd& x) const override {
    const double horizon = x(0) - sc_.t0;
    double acc = 0.0;
    ForEachQuadratureNode([&](int c, int g, double w) {
      acc += w * PoseDeviationCost(sc_.gains.q, StateAt(x, c, g), sc_.cavs[c].zf);
    });
    return sc_.gains.alpha * horizon * horizon + LagrangeScale(x) * acc;
  }

  void Gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
    grad = Eigen::VectorXd::Zero(nvar_);
    const double horizon = x(0) - sc_.t0;
    const double scale = LagrangeScale(x);
    double acc = 0.0;
    ForEachQuadratureNode([&](int c, int g, double w) {
      const Eigen::Vector3d e = PoseError(x, c, g);
      acc += w * e.dot(sc_.gains.q * e);
      const Eigen::Vector3d ge = 2.0 * w * scale * (sc_.gains.q * e);
      for (int a = 0; a < 3; ++a) grad(state_index(c, g, kPosX + a)) += ge(a);
    });
    grad(0) = 2.0 * sc_.gains.alpha * horizon + (RealTime() ? FleetFactor() * acc : 0.0);
  }

  void Constraints(const Eigen::VectorXd& x, Eigen::VectorXd& out) const override {
    out.resize(ncon_);
    const double horizon = x(0) - sc_.t0;
    int row = 0;
    for (int c = 0; c < num_cavs(); ++c) {
      const CavSpec& cav = sc_.cavs[c];
      const StateVec<double> x0{0.0, 0.0, cav.v0, cav.z0.x, cav.z0.y, cav.z0.theta};
      for (int s = 0; s < kNumStates; ++s) out(row++) = x(state_index(c, 0, s)) - x0[s];
    }
    for (int c = 0; c < num_cavs(); ++c) {
      for (int k = 0; k < np_; ++k) {
        const InputVec<double> u = InputAt(x, c, k);
        for (int j = 1; j <= d_; ++j) {
          const StateVec<double> f =
              StateRateKernel<double>(StateAt(x, c, node(k, j)), u, derivs_[c], sc_.cavs[c].params);
          for (int s = 0; s < kNumStates; ++s) {
            double acc = 0.0;
            for (int m = 0; m <= d_; ++m) acc += scheme_.deriv()(m, j) * x(state_index(c, node(k, m), s));
            out(row++) = acc - h_ * horizon * f[s];
          }
        }
      }
    }
    if (!scheme_.end_is_node()) {
      for (int c = 0; c < num_cavs(); ++c) {
        for (int k = 0; k < np_; ++k) {
          for (int s = 0; s < kNumStates; ++s) {
            double acc = -x(state_index(c, node(k + 1, 0), s));
            for (int m = 0; m <= d_; ++m) acc += scheme_.end_weights()(m) * x(state_index(c, node(k, m), s));
            out(row++) = acc;
          }
        }
      }
    }
    for (int c = 0; c < num_cavs(); ++c) {
      const Pose& zf = sc_.cavs[c].zf;
      const double goal[3] = {zf.x, zf.y, zf.theta};
      for (int a = 0; a < TerminalRows(); ++a) out(row++) = x(state_index(c, nodes_ - 1, kPosX + a)) - goal[a];
    }
    std::array<double, 16> z{};
    std::array<double, kDualRows> res{};
    for (const auto& t : terms_) {
      Gather(x, t, z.data());
      types_[t.type].Residual<double>(z.data(), res.data());
      for (int r = 0; r < Rows(t); ++r) out(t.row + r) = res[r];
    }
  }

  const SparsityPattern& JacobianPattern() const override { return jac_pattern_; }

  void JacobianValues(const Eigen::VectorXd& x, std::span<double> v) const override {
    size_t k = 0;
    const double horizon = x(0) - sc_.t0;
    for (int c = 0; c < num_cavs(); ++c) {
      for (int s = 0; s < kNumStates; ++s) v[k++] = 1.0;
    }
    for (int c = 0; c < num_cavs(); ++c) {
      for (int iv = 0; iv < np_; ++iv) {
        const InputVec<double> u = InputAt(x, c, iv);
        for (int j = 1; j <= d_; ++j) {
          const StateVec<double> xs = StateAt(x, c, node(iv, j));
          const StateVec<double> f = StateRateKernel<double>(xs, u, derivs_[c], sc_.cavs[c].params);
          const RateJacobians<double> jac =
              StateRateJacobianKernel<double>(xs, u, derivs_[c], sc_.cavs[c].params);
          for (int s = 0; s < kNumStates; ++s) {
            for (int m = 0; m <= d_; ++m) v[k++] = scheme_.deriv()(m, j);
            for (int q : dyn_x_cols_[s]) v[k++] = -h_ * horizon * jac.dx[s][q];
            for (int q : dyn_u_cols_[s]) v[k++] = -h_ * horizon * jac.du[s][q];
            v[k++] = -h_ * f[s];
          }
        }
      }
    }
    if (!scheme_.end_is_node()) {
      for (int c = 0; c < num_cavs(); ++c) {
        for (int iv = 0; iv < np_; ++iv) {
          for (int s = 0; s < kNumStates; ++s) {
            for (int m = 0; m <= d_; ++m) v[k++] = scheme_.end_weights()(m);
            v[k++] = -1.0;
          }
        }
      }
    }
    for (int c = 0; c < num_cavs(); ++c) {
      for (int a = 0; a < TerminalRows(); ++a) v[k++] = 1.0;
    }
    std::array<double, 16> z{};
    std::array<double, kDualRows * 16> jl{};
    for (const auto& t : terms_) {
      Gather(x, t, z.data());
      const DualPairTerm& term = types_[t.type];
      term.Jacobian<double>(z.data(), jl.data());
      const int nl = term.num_local();
      for (int r = 0; r < Rows(t); ++r) {
        for (int p = 0; p < nl; ++p) {
          if (type_jac_mask_[t.type][r * nl + p]) v[k++] = jl[r * nl + p];
        }
      }
    }
  }

  const SparsityPattern& HessianPattern() const override { return hess_pattern_; }

  void HessianValues(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd& y,
                     std::span<double> v) const override {
    size_t k = 0;
    const double horizon = x(0) - sc_.t0;
    const double scale = LagrangeScale(x);
    v[k++] = obj_factor * 2.0 * sc_.gains.alpha;
    ForEachQuadratureNode([&](int c, int g, double w) {
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b <= a; ++b) v[k++] = obj_factor * 2.0 * w * scale * sc_.gains.q(a, b);
      }
      if (RealTime()) {
        const Eigen::Vector3d ge = 2.0 * w * FleetFactor() * (sc_.gains.q * PoseError(x, c, g));
        for (int a = 0; a < 3; ++a) v[k++] = obj_factor * ge(a);
      }
    });

    // Dynamics: Hessian of -h (tf - t0) sum_s y_s f_s(x, u) over [tf, x, u].
    const int dyn_row0 = row_blocks_[1].offset;
    for (int c = 0; c < num_cavs(); ++c) {
      for (int iv = 0; iv < np_; ++iv) {
        for (int j = 1; j <= d_; ++j) {
          const int row = dyn_row0 + ((c * np_ + iv) * d_ + (j - 1)) * kNumStates;
          double hl[9][9] = {};
          DynamicsLocalHessian(x, c, iv, j, horizon, y.data() + row, hl);
          for (const auto& [a, b] : dyn_hess_entries_) v[k++] = hl[a][b];
        }
      }
    }

    std::array<Dual, 16> zd{};
    std::array<Dual, kDualRows * 16> jd{};
    double hl[16][16];
    double yt[kDualRows];
    for (const auto& t : terms_) {
      for (int r = 0; r < kDualRows; ++r) yt[r] = r < Rows(t) ? y(t.row + r) : 0.0;
      TermLocalHessian(x, t, yt, zd.data(), jd.data(), hl);
      for (const auto& [a, b] : type_hess_entries_[t.type]) v[k++] = hl[a][b];
    }
  }

  // ----- initial guess and extraction -------------------------------------

  // Straight chord to the goal, or an L-shaped path through the crossing of
  // the start and goal heading lines when the chord leaves the road.
  struct GuessPath {
    Vec2 start, corner, goal;
    bool bent = false;
    double length() const {
      return bent ? (corner - start).norm() + (goal - corner).norm() : (goal - start).norm();
    }
    Vec2 At(double frac) const {
      if (!bent) return start + frac * (goal - start);
      const double l1 = (corner - start).norm(), total = length();
      const double sdist = frac * total;
      if (sdist <= l1) return l1 > 0.0 ? Vec2(start + (sdist / l1) * (corner - start)) : start;
      const double l2 = total - l1;
      return l2 > 0.0 ? Vec2(corner + ((sdist - l1) / l2) * (goal - corner)) : goal;
    }
  };

  GuessPath PathFor(int c) const {
    const CavSpec& cav = sc_.cavs[c];
    GuessPath p;
    p.start = Vec2(cav.z0.x, cav.z0.y);
    p.goal = Vec2(cav.zf.x, cav.zf.y);
    p.corner = p.goal;
    bool chord_ok = true;
    for (int i = 0; i <= 200; ++i) {
      if (!sc_.layout.InRoad(p.start + (i / 200.0) * (p.goal - p.start))) chord_ok = false;
    }
    if (chord_ok) return p;
    const Vec2 d0(std::cos(cav.z0.theta), std::sin(cav.z0.theta));
    const Vec2 df(std::cos(cav.zf.theta), std::sin(cav.zf.theta));
    Eigen::Matrix2d m;
    m << d0.x(), df.x(), d0.y(), df.y();
    if (std::abs(m.determinant()) < 1e-9) return p;
    const Vec2 ab = m.partialPivLu().solve(p.goal - p.start);
    if (ab(0) <= 0.0 || ab(1) <= 0.0) return p;
    p.corner = p.start + ab(0) * d0;
    p.bent = true;
    return p;
  }

  double HorizonGuess() const {
    double t = 0.0;
    for (int c = 0; c < num_cavs(); ++c) {
      const double mean_speed = 0.5 * (sc_.cavs[c].v0 + sc_.cavs[c].bounds.v_max);
      t = std::max(t, PathFor(c).length() / mean_speed);
    }
    return std::clamp(t, cfg_.horizon_min, cfg_.horizon_max);
  }

  Eigen::VectorXd InitialGuess() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(nvar_);
    x(0) = sc_.t0 + HorizonGuess();
    for (int c = 0; c < num_cavs(); ++c) {
      const CavSpec& cav = sc_.cavs[c];
      const GuessPath path = PathFor(c);
      for (int g = 0; g < nodes_; ++g) {
        const double tau = node_tau(g);
        const Vec2 p = path.At(tau);
        x(state_index(c, g, kSpeed)) = cav.v0;
        x(state_index(c, g, kPosX)) = p.x();
        x(state_index(c, g, kPosY)) = p.y();
        x(state_index(c, g, kHeading)) = cav.z0.theta + tau * (cav.zf.theta - cav.z0.theta);
      }
    }
    // Node terms come before the links that borrow their separators.
    for (const auto& t : terms_) {
      const DualPairTerm& term = types_[t.type];
      const ConvexPolytope first = PolytopeAtPose(term.first_base(), TermPose(x, t, 0));
      const ConvexPolytope second =
          term.second_posed() ? PolytopeAtPose(term.second(), TermPose(x, t, 1)) : term.second();
      DualBlock blk;
      if (t.linked) {
        blk.s = Vec2(x(t.idx[term.s_offset()]), x(t.idx[term.s_offset() + 1]));
        blk.lambda_fwd = FaceAlignedMultipliers(first, -blk.s);
        blk.lambda_rev = FaceAlignedMultipliers(second, blk.s);
      } else {
        blk = BestFaceAlignedDualBlock(first, second);
      }
      Scatter(x, t, blk);
    }
    return x;
  }

  CrossingSolution Extract(const Eigen::VectorXd& x) const {
    if (x.size() != nvar_) throw TranscriptionError("point does not match the variable layout");
    CrossingSolution sol;
    sol.t0 = sc_.t0;
    sol.tf = x(0);
    sol.intervals = np_;
    sol.degree = d_;
    sol.kind = cfg_.kind;
    const double horizon = sol.tf - sol.t0;
    for (int g = 0; g < nodes_; ++g) sol.node_times.push_back(sc_.t0 + node_tau(g) * horizon);
    const long steps = static_cast<long>(std::floor(horizon / cfg_.sample_dt + 1e-9));
    for (long i = 0; i <= steps; ++i) sol.times.push_back(sc_.t0 + static_cast<double>(i) * cfg_.sample_dt);
    if (sol.tf - sol.times.back() > 1e-9) sol.times.push_back(sol.tf);

    for (int c = 0; c < num_cavs(); ++c) {
      CavTrajectory tr;
      tr.id = sc_.cavs[c].id;
      for (int g = 0; g < nodes_; ++g) tr.node_states.push_back(StateAt(x, c, g));
      for (int k = 0; k < np_; ++k) tr.interval_inputs.push_back(InputAt(x, c, k));
      for (double t : sol.times) {
        const double tau = horizon > 0.0 ? (t - sc_.t0) / horizon : 0.0;
        tr.states.push_back(Interpolate(x, c, tau));
        tr.inputs.push_back(InputAt(x, c, IntervalOf(tau)));
      }
      sol.cavs.push_back(std::move(tr));
    }
    for (size_t p = 0; p < pairs_.size(); ++p) {
      PairDuals pd;
      pd.first = pairs_[p].first;
      pd.second = pairs_[p].second;
      for (int g = 0; g < nodes_; ++g) {
        const int base = pair_dual_index(static_cast<int>(p), g);
        DualBlock d;
        d.lambda_fwd = x.segment(base, 4);
        d.lambda_rev = x.segment(base + 4, 4);
        d.s = Vec2(x(base + 8), x(base + 9));
        pd.nodes.push_back(d);
      }
      sol.pairs.push_back(std::move(pd));
    }
    return sol;
  }

  int IntervalOf(double tau) const {
    return std::clamp(static_cast<int>(std::floor(tau * np_)), 0, np_ - 1);
  }

  // Collocation polynomial of vehicle c at normalised time tau.
  StateVec<double> Interpolate(const Eigen::VectorXd& x, int c, double tau) const {
    const int k = IntervalOf(tau);
    const double local = tau * np_ - k;
    StateVec<double> out{};
    for (int m = 0; m <= d_; ++m) {
      const double l = scheme_.Basis(m, local);
      for (int s = 0; s < kNumStates; ++s) out[s] += l * x(state_index(c, node(k, m), s));
    }
    return out;
  }

  StateVec<double> StateAt(const Eigen::VectorXd& x, int c, int g) const {
    StateVec<double> s;
    for (int i = 0; i < kNumStates; ++i) s[i] = x(state_index(c, g, i));
    return s;
  }
  InputVec<double> InputAt(const Eigen::VectorXd& x, int c, int k) const {
    return {x(input_index(c, k, kAccel)), x(input_index(c, k, kSteer))};
  }
  Pose PoseAt(const Eigen::VectorXd& x, int c, int g) const {
    return {x(state_index(c, g, kPosX)), x(state_index(c, g, kPosY)), x(state_index(c, g, kHeading))};
  }

 private:
  struct TermRef {
    int type = 0;
    int row = 0;
    int first_cav = 0;
    int second_cav = -1;
    int node = 0;
    int nl = 0;
    std::array<int, 16> idx{};
    bool linked = false;  // separator shared with the previous node
  };

  static int CheckedDegree(const TranscriptionConfig& cfg) {
    const auto errs = cfg.Validate();
    if (!errs.empty()) throw TranscriptionError("invalid transcription config: " + errs.front());
    return cfg.degree;
  }

  static void Box(Eigen::VectorXd& xl, Eigen::VectorXd& xu, int i, double lo, double hi) {
    xl(i) = lo;
    xu(i) = hi;
  }

  int TerminalRows() const {
    switch (cfg_.terminal) {
      case TerminalMode::kPose: return 3;
      case TerminalMode::kPosition: return 2;
      case TerminalMode::kNone: return 0;
    }
    return 0;
  }

  bool RealTime() const { return sc_.gains.form == LagrangeForm::kRealTime; }
  double LagrangeScale(const Eigen::VectorXd& x) const {
    const double fleet = sc_.gains.vehicle_mean ? static_cast<double>(num_cavs()) : 1.0;
    return (RealTime() ? x(0) - sc_.t0 : 1.0) / fleet;
  }
  double FleetFactor() const { return sc_.gains.vehicle_mean ? 1.0 / num_cavs() : 1.0; }

  Eigen::Vector3d PoseError(const Eigen::VectorXd& x, int c, int g) const {
    const Pose& zf = sc_.cavs[c].zf;
    return {x(state_index(c, g, kPosX)) - zf.x, x(state_index(c, g, kPosY)) - zf.y,
            x(state_index(c, g, kHeading)) - zf.theta};
  }

  // Visits (vehicle, node, weight) for the deviation quadrature in a fixed order.
  template <typename F>
  void ForEachQuadratureNode(F&& f) const {
    for (int c = 0; c < num_cavs(); ++c) {
      for (int k = 0; k < np_; ++k) {
        for (int m = 0; m <= d_; ++m) f(c, node(k, m), h_ * scheme_.quad_weights()(m));
      }
    }
  }

  void BuildDualTerms() {
    const int n = num_cavs();
    for (int c = 0; c < n; ++c) {
      for (int r = 0; r < nb_; ++r) {
        types_.emplace_back(BaseBodyPolytope(sc_.cavs[c].params), sc_.layout.boundaries[r], false, sc_.d_rmin);
      }
    }
    for (const auto& [i, j] : pairs_) {
      types_.emplace_back(BaseBodyPolytope(sc_.cavs[i].params), BaseBodyPolytope(sc_.cavs[j].params), true,
                          sc_.d_min);
    }
    int row = row_blocks_[4].offset;
    for (int c = 0; c < n; ++c) {
      for (int g = 0; g < nodes_; ++g) {
        for (int r = 0; r < nb_; ++r) {
          TermRef t;
          t.type = c * nb_ + r;
          t.row = row;
          row += kDualRows;
          t.first_cav = c;
          t.node = g;
          t.nl = types_[t.type].num_local();
          for (int a = 0; a < 3; ++a) t.idx[a] = state_index(c, g, kPosX + a);
          const int base = road_dual_index(c, g, r);
          for (int q = 0; q < kRectDualSize; ++q) t.idx[3 + q] = base + q;
          terms_.push_back(t);
        }
      }
    }
    for (size_t p = 0; p < pairs_.size(); ++p) {
      for (int g = 0; g < nodes_; ++g) {
        TermRef t;
        t.type = n * nb_ + static_cast<int>(p);
        t.row = row;
        row += kDualRows;
        t.first_cav = pairs_[p].first;
        t.second_cav = pairs_[p].second;
        t.node = g;
        t.nl = types_[t.type].num_local();
        for (int a = 0; a < 3; ++a) {
          t.idx[a] = state_index(t.first_cav, g, kPosX + a);
          t.idx[3 + a] = state_index(t.second_cav, g, kPosX + a);
        }
        const int base = pair_dual_index(static_cast<int>(p), g);
        for (int q = 0; q < kRectDualSize; ++q) t.idx[6 + q] = base + q;
        terms_.push_back(t);
      }
    }
    int dual = link_offset_;
    auto add_link = [&](const TermRef& from) {
      TermRef t = from;
      const DualPairTerm& term = types_[t.type];
      t.linked = true;
      t.node += 1;
      t.row = row;
      row += kLinkRows;
      for (int a = 0; a < 3; ++a) {
        t.idx[a] = state_index(t.first_cav, t.node, kPosX + a);
        if (t.second_cav >= 0) t.idx[3 + a] = state_index(t.second_cav, t.node, kPosX + a);
      }
      for (int q = term.fwd_offset(); q < term.s_offset(); ++q) t.idx[q] = dual++;
      terms_.push_back(t);
    };
    const size_t node_terms = terms_.size();
    if (cfg_.link_all_gaps) {
      for (size_t i = 0; i < node_terms; ++i) {
        if (terms_[i].node < nodes_ - 1) add_link(terms_[i]);
      }
      return;
    }
    for (size_t k = 0; k < cfg_.gap_links.size(); ++k) {
      const GapLink& l = cfg_.gap_links[k];
      for (size_t m = 0; m < k; ++m) {
        if (cfg_.gap_links[m] == l) throw TranscriptionError("duplicate gap link");
      }
      if (l.node < 0 || l.node >= nodes_ - 1) throw TranscriptionError("gap link node out of range");
      if (l.road) {
        if (l.first < 0 || l.first >= n || l.second < 0 || l.second >= nb_) {
          throw TranscriptionError("gap link names no road condition");
        }
        add_link(terms_[(l.first * nodes_ + l.node) * nb_ + l.second]);
      } else {
        const auto it = std::find(pairs_.begin(), pairs_.end(),
                                  std::make_pair(std::min(l.first, l.second), std::max(l.first, l.second)));
        if (l.first == l.second || it == pairs_.end()) throw TranscriptionError("gap link names no vehicle pair");
        const int p = static_cast<int>(it - pairs_.begin());
        add_link(terms_[n * nodes_ * nb_ + p * nodes_ + l.node]);
      }
    }
  }

  static int Rows(const TermRef& t) { return t.linked ? kLinkRows : kDualRows; }

  void Gather(const Eigen::VectorXd& x, const TermRef& t, double* z) const {
    for (int q = 0; q < t.nl; ++q) z[q] = x(t.idx[q]);
  }

  Pose TermPose(const Eigen::VectorXd& x, const TermRef& t, int which) const {
    return {x(t.idx[3 * which]), x(t.idx[3 * which + 1]), x(t.idx[3 * which + 2])};
  }

  void Scatter(Eigen::VectorXd& x, const TermRef& t, const DualBlock& d) const {
    const DualPairTerm& term = types_[t.type];
    for (int q = 0; q < d.lambda_fwd.size(); ++q) x(t.idx[term.fwd_offset() + q]) = d.lambda_fwd(q);
    for (int q = 0; q < d.lambda_rev.size(); ++q) x(t.idx[term.rev_offset() + q]) = d.lambda_rev(q);
    x(t.idx[term.s_offset()]) = d.s.x();
    x(t.idx[term.s_offset() + 1]) = d.s.y();
  }

  // Local Hessian of sum_r y_r residual_r for one dual term.
  void TermLocalHessian(const Eigen::VectorXd& x, const TermRef& t, const double* y, Dual* zd, Dual* jd,
                        double (*hl)[16]) const {
    const DualPairTerm& term = types_[t.type];
    const int nl = t.nl;
    std::array<double, 16> z{};
    Gather(x, t, z.data());
    for (int q = 0; q < nl; ++q) zd[q] = Dual(z[q], 0.0);
    for (int q = 0; q < nl; ++q) {
      zd[q].d = 1.0;
      term.Jacobian<Dual>(zd, jd);
      zd[q].d = 0.0;
      for (int p = 0; p < nl; ++p) {
        double acc = 0.0;
        for (int r = 0; r < kDualRows; ++r) acc += y[r] * jd[r * nl + p].d;
        hl[p][q] = acc;
      }
    }
  }

  // Local Hessian over [tf, states(6), inputs(2)] of -h (tf - t0) y^T f.
  void DynamicsLocalHessian(const Eigen::VectorXd& x, int c, int iv, int j, double horizon, const double* y,
                            double (*hl)[9]) const {
    StateVec<Dual> xs;
    InputVec<Dual> u;
    const int g = node(iv, j);
    for (int s = 0; s < kNumStates; ++s) xs[s] = Dual(x(state_index(c, g, s)), 0.0);
    for (int a = 0; a < kNumInputs; ++a) u[a] = Dual(x(input_index(c, iv, a)), 0.0);
    for (int q = 0; q < kNumStates + kNumInputs; ++q) {
      Dual& seed = q < kNumStates ? xs[q] : u[q - kNumStates];
      seed.d = 1.0;
      const RateJacobians<Dual> jac = StateRateJacobianKernel<Dual>(xs, u, derivs_[c], sc_.cavs[c].params);
      seed.d = 0.0;
      double first = 0.0;  // d/dq of y^T f
      for (int p = 0; p < kNumStates + kNumInputs; ++p) {
        double acc = 0.0;
        for (int s = 0; s < kNumStates; ++s) {
          const Dual& e = p < kNumStates ? jac.dx[s][p] : jac.du[s][p - kNumStates];
          acc += y[s] * e.d;
        }
        hl[1 + p][1 + q] = -h_ * horizon * acc;
      }
      for (int s = 0; s < kNumStates; ++s) {
        const Dual& e = q < kNumStates ? jac.dx[s][q] : jac.du[s][q - kNumStates];
        first += y[s] * e.v;
      }
      hl[1 + q][0] = -h_ * first;
      hl[0][1 + q] = -h_ * first;
    }
    hl[0][0] = 0.0;
  }

  // Finds structural nonzeros of the local derivative blocks by evaluating
  // them at random points.
  void ProbeStructure() {
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::uniform_real_distribution<double> pos(1.0, 3.0);

    // Dynamics Jacobian columns and local Hessian.
    std::array<std::array<bool, kNumStates>, kNumStates> xm{};
    std::array<std::array<bool, kNumInputs>, kNumStates> um{};
    bool hm[9][9] = {};
    const VehicleParams& p0 = sc_.cavs[0].params;
    const StabilityDerivatives dd = ComputeStabilityDerivatives(p0);
    for (int trial = 0; trial < 3; ++trial) {
      StateVec<double> xs{uni(rng), uni(rng), pos(rng), uni(rng), uni(rng), uni(rng)};
      InputVec<double> u{uni(rng), uni(rng)};
      const auto jac = StateRateJacobianKernel<double>(xs, u, dd, p0);
      for (int s = 0; s < kNumStates; ++s) {
        for (int q = 0; q < kNumStates; ++q) xm[s][q] = xm[s][q] || jac.dx[s][q] != 0.0;
        for (int q = 0; q < kNumInputs; ++q) um[s][q] = um[s][q] || jac.du[s][q] != 0.0;
      }
      Eigen::VectorXd probe = Eigen::VectorXd::Zero(nvar_);
      probe(0) = sc_.t0 + pos(rng);
      for (int s = 0; s < kNumStates; ++s) probe(state_index(0, node(0, 1), s)) = xs[s];
      for (int a = 0; a < kNumInputs; ++a) probe(input_index(0, 0, a)) = u[a];
      double y[kNumStates];
      for (double& v : y) v = uni(rng);
      double hl[9][9] = {};
      DynamicsLocalHessian(probe, 0, 0, 1, probe(0) - sc_.t0, y, hl);
      for (int a = 0; a < 9; ++a) {
        for (int b = 0; b < 9; ++b) hm[a][b] = hm[a][b] || hl[a][b] != 0.0;
      }
    }
    dyn_x_cols_.assign(kNumStates, {});
    dyn_u_cols_.assign(kNumStates, {});
    for (int s = 0; s < kNumStates; ++s) {
      for (int q = 0; q < kNumStates; ++q) {
        if (xm[s][q]) dyn_x_cols_[s].push_back(q);
      }
      for (int q = 0; q < kNumInputs; ++q) {
        if (um[s][q]) dyn_u_cols_[s].push_back(q);
      }
    }
    // Local order [tf, x, u] matches global index order, so a >= b is the
    // lower triangle globally as well.
    for (int a = 0; a < 9; ++a) {
      for (int b = 0; b <= a; ++b) {
        if (hm[a][b] || hm[b][a]) dyn_hess_entries_.emplace_back(a, b);
      }
    }

    // Dual terms, one mask per term type.
    type_jac_mask_.assign(types_.size(), {});
    type_hess_entries_.assign(types_.size(), {});
    for (size_t ty = 0; ty < types_.size(); ++ty) {
      const DualPairTerm& term = types_[ty];
      const int nl = term.num_local();
      std::vector<char> jmask(kDualRows * nl, 0);
      std::vector<char> hmask(nl * nl, 0);
      TermRef t;
      t.type = static_cast<int>(ty);
      t.nl = nl;
      for (int q = 0; q < nl; ++q) t.idx[q] = q;
      std::array<Dual, 16> zd{};
      std::array<Dual, kDualRows * 16> jd{};
      std::array<double, kDualRows * 16> jl{};
      double hl[16][16];
      for (int trial = 0; trial < 3; ++trial) {
        Eigen::VectorXd z(nl);
        for (int q = 0; q < nl; ++q) z(q) = uni(rng);
        for (int q = 0; q < 3; ++q) z(q) *= 10.0;
        term.Jacobian<double>(z.data(), jl.data());
        for (int i = 0; i < kDualRows * nl; ++i) jmask[i] = jmask[i] || jl[i] != 0.0;
        double y[kDualRows];
        for (double& v : y) v = uni(rng);
        TermLocalHessian(z, t, y, zd.data(), jd.data(), hl);
        for (int a = 0; a < nl; ++a) {
          for (int b = 0; b < nl; ++b) hmask[a * nl + b] = hmask[a * nl + b] || hl[a][b] != 0.0;
        }
      }
      type_jac_mask_[ty] = jmask;
      for (int a = 0; a < nl; ++a) {
        for (int b = 0; b <= a; ++b) {
          if (hmask[a * nl + b] || hmask[b * nl + a]) type_hess_entries_[ty].emplace_back(a, b);
        }
      }
    }
  }

  void BuildPatterns() {
    SparsityPattern& jp = jac_pattern_;
    int row = 0;
    for (int c = 0; c < num_cavs(); ++c) {
      for (int s = 0; s < kNumStates; ++s) jp.Add(row++, state_index(c, 0, s));
    }
    for (int c = 0; c < num_cavs(); ++c) {
      for (int k = 0; k < np_; ++k) {
        for (int j = 1; j <= d_; ++j) {
          for (int s = 0; s < kNumStates; ++s) {
            for (int m = 0; m <= d_; ++m) jp.Add(row, state_index(c, node(k, m), s));
            for (int q : dyn_x_cols_[s]) jp.Add(row, state_index(c, node(k, j), q));
            for (int q : dyn_u_cols_[s]) jp.Add(row, input_index(c, k, q));
            jp.Add(row, 0);
            ++row;
          }
        }
      }
    }
    if (!scheme_.end_is_node()) {
      for (int c = 0; c < num_cavs(); ++c) {
        for (int k = 0; k < np_; ++k) {
          for (int s = 0; s < kNumStates; ++s) {
            for (int m = 0; m <= d_; ++m) jp.Add(row, state_index(c, node(k, m), s));
            jp.Add(row, state_index(c, node(k + 1, 0), s));
            ++row;
          }
        }
      }
    }
    for (int c = 0; c < num_cavs(); ++c) {
      for (int a = 0; a < TerminalRows(); ++a) jp.Add(row++, state_index(c, nodes_ - 1, kPosX + a));
    }
    for (const auto& t : terms_) {
      const int nl = t.nl;
      for (int r = 0; r < Rows(t); ++r) {
        for (int p = 0; p < nl; ++p) {
          if (type_jac_mask_[t.type][r * nl + p]) jp.Add(t.row + r, t.idx[p]);
        }
      }
    }

    SparsityPattern& hp = hess_pattern_;
    hp.Add(0, 0);
    ForEachQuadratureNode([&](int c, int g, double) {
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b <= a; ++b) hp.Add(state_index(c, g, kPosX + a), state_index(c, g, kPosX + b));
      }
      if (RealTime()) {
        for (int a = 0; a < 3; ++a) hp.Add(state_index(c, g, kPosX + a), 0);
      }
    });
    for (int c = 0; c < num_cavs(); ++c) {
      for (int k = 0; k < np_; ++k) {
        for (int j = 1; j <= d_; ++j) {
          int gl[9];
          gl[0] = 0;
          for (int s = 0; s < kNumStates; ++s) gl[1 + s] = state_index(c, node(k, j), s);
          for (int a = 0; a < kNumInputs; ++a) gl[1 + kNumStates + a] = input_index(c, k, a);
          for (const auto& [a, b] : dyn_hess_entries_) hp.Add(std::max(gl[a], gl[b]), std::min(gl[a], gl[b]));
        }
      }
    }
    for (const auto& t : terms_) {
      for (const auto& [a, b] : type_hess_entries_[t.type]) {
        hp.Add(std::max(t.idx[a], t.idx[b]), std::min(t.idx[a], t.idx[b]));
      }
    }
  }

  Scenario sc_;
  TranscriptionConfig cfg_;
  CollocationScheme scheme_;
  int d_ = 0, np_ = 0, nodes_ = 0, nb_ = 0;
  double h_ = 1.0;
  int cav_stride_ = 0, road_offset_ = 0, pair_offset_ = 0, link_offset_ = 0, nvar_ = 0, ncon_ = 0;
  std::vector<StabilityDerivatives> derivs_;
  std::vector<std::pair<int, int>> pairs_;
  std::vector<IndexBlock> row_blocks_;
  std::vector<DualPairTerm> types_;
  std::vector<TermRef> terms_;
  std::vector<std::vector<int>> dyn_x_cols_, dyn_u_cols_;
  std::vector<std::pair<int, int>> dyn_hess_entries_;
  std::vector<std::vector<char>> type_jac_mask_;
  std::vector<std::vector<std::pair<int, int>>> type_hess_entries_;
  SparsityPattern jac_pattern_, hess_pattern_;
};

}  // namespace lanefree

#endif  // LANEFREE_TRANSCRIPTION_HPP_
