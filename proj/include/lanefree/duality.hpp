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

#ifndef LANEFREE_DUALITY_HPP_
#define LANEFREE_DUALITY_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "lanefree/geometry.hpp"

namespace lanefree {

// Dual certificate of separation between two polytopes P (first) and Q
// (second): lambda_fwd has one entry per face of P, lambda_rev one per face of
// Q. Feasible blocks satisfy A_P^T lambda_fwd + s = 0, A_Q^T lambda_rev - s = 0,
// lambda >= 0 and |s| <= 1; the dual gap -b_P^T lambda_fwd - b_Q^T lambda_rev
// is then a lower bound on dist(P, Q).
struct DualBlock {
  Eigen::VectorXd lambda_fwd;
  Eigen::VectorXd lambda_rev;
  Vec2 s = Vec2::Zero();
};

class DimensionMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateSeparatorError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct ResidualBundle {
  double gap = 0.0;              // dual gap minus required clearance; >= 0 required
  Vec2 eq_fwd = Vec2::Zero();    // A_P^T lambda_fwd + s; = 0 required
  Vec2 eq_rev = Vec2::Zero();    // A_Q^T lambda_rev - s; = 0 required
  double norm = 0.0;             // 1 - |s|; >= 0 required

  double DualGap(double clearance) const { return gap + clearance; }
  double EqualityError() const {
    return std::max(eq_fwd.cwiseAbs().maxCoeff(), eq_rev.cwiseAbs().maxCoeff());
  }
};

struct SeparatingHyperplane {
  Vec2 normal = Vec2::UnitX();  // unit; points from the first polytope to the second
  double offset = 0.0;          // plane is {X : normal . X = offset}

  double SignedDistance(const Vec2& p) const { return normal.dot(p) - offset; }
};

namespace internal {
inline void CheckDims(const ConvexPolytope& p, const ConvexPolytope& q, const DualBlock& d) {
  if (d.lambda_fwd.size() != p.faces() || d.lambda_rev.size() != q.faces()) {
    throw DimensionMismatchError("dual block sized (" + std::to_string(d.lambda_fwd.size()) +
                                 ", " + std::to_string(d.lambda_rev.size()) +
                                 ") for polytopes with (" + std::to_string(p.faces()) + ", " +
                                 std::to_string(q.faces()) + ") faces");
  }
}
}  // namespace internal

// Residuals of the vehicle-vehicle avoidance conditions for already posed
// polytopes.
inline ResidualBundle PairResiduals(const ConvexPolytope& first, const ConvexPolytope& second,
                                    const DualBlock& d, double min_distance) {
  internal::CheckDims(first, second, d);
  ResidualBundle out;
  out.gap = -first.b.dot(d.lambda_fwd) - second.b.dot(d.lambda_rev) - min_distance;
  out.eq_fwd = first.A.transpose() * d.lambda_fwd + d.s;
  out.eq_rev = second.A.transpose() * d.lambda_rev - d.s;
  out.norm = 1.0 - d.s.norm();
  return out;
}

// Vehicle-boundary residuals. Same sign convention as the vehicle pair:
// A_i^T lambda_ir + s = 0 and A_r^T lambda_ri - s = 0.
inline ResidualBundle RoadResiduals(const ConvexPolytope& vehicle, const ConvexPolytope& boundary,
                                    const DualBlock& d, double min_clearance) {
  return PairResiduals(vehicle, boundary, d, min_clearance);
}

// Plane midway between the supporting lines of the two polytopes along s.
inline SeparatingHyperplane RecoverHyperplane(const ConvexPolytope& first,
                                              const ConvexPolytope& second, const DualBlock& d) {
  internal::CheckDims(first, second, d);
  const double sn = d.s.norm();
  if (sn < 1e-9) throw DegenerateSeparatorError("separator direction s is numerically zero");
  // Along s, first lies above lo and second below hi.
  const double lo = -first.b.dot(d.lambda_fwd);
  const double hi = second.b.dot(d.lambda_rev);
  SeparatingHyperplane h;
  h.normal = -d.s / sn;
  h.offset = -(lo + hi) / (2.0 * sn);
  return h;
}

// Rows of a dual avoidance constraint group as imposed in the transcription:
// [gap - clearance, eq_fwd.x, eq_fwd.y, eq_rev.x, eq_rev.y, 1 - s^T s].
inline constexpr int kDualRows = 6;

// Residuals and analytic Jacobians of one avoidance group, parameterised by
// the poses of the posed polytope(s) and the dual variables. The second
// polytope is either posed (another vehicle) or static (a road boundary).
//
// Local variable order: [x_i, y_i, th_i, (x_j, y_j, th_j,) lambda_fwd,
// lambda_rev, s_x, s_y].
class DualPairTerm {
 public:
  DualPairTerm(ConvexPolytope first_base, ConvexPolytope second, bool second_posed,
               double clearance)
      : first_(std::move(first_base)),
        second_(std::move(second)),
        second_posed_(second_posed),
        clearance_(clearance) {}

  int num_local() const { return 3 + (second_posed_ ? 3 : 0) + first_.faces() + second_.faces() + 2; }
  int fwd_offset() const { return second_posed_ ? 6 : 3; }
  int rev_offset() const { return fwd_offset() + first_.faces(); }
  int s_offset() const { return rev_offset() + second_.faces(); }
  bool second_posed() const { return second_posed_; }
  double clearance() const { return clearance_; }
  const ConvexPolytope& first_base() const { return first_; }
  const ConvexPolytope& second() const { return second_; }

  template <typename S>
  void Residual(const S* z, S* out) const {
    using std::cos;
    using std::sin;
    const int kf = first_.faces(), kr = second_.faces();
    const S* lf = z + fwd_offset();
    const S* lr = z + rev_offset();
    const S* s = z + s_offset();
    S gap = S(-clearance_);
    S e1x = s[0], e1y = s[1];
    S e2x = -s[0], e2y = -s[1];
    {
      const S c = cos(z[2]), sn = sin(z[2]);
      for (int k = 0; k < kf; ++k) {
        const double a0 = first_.A(k, 0), a1 = first_.A(k, 1);
        const S nx = a0 * c - a1 * sn, ny = a0 * sn + a1 * c;
        const S bk = first_.b(k) + nx * z[0] + ny * z[1];
        gap -= bk * lf[k];
        e1x += lf[k] * nx;
        e1y += lf[k] * ny;
      }
    }
    if (second_posed_) {
      const S c = cos(z[5]), sn = sin(z[5]);
      for (int k = 0; k < kr; ++k) {
        const double a0 = second_.A(k, 0), a1 = second_.A(k, 1);
        const S nx = a0 * c - a1 * sn, ny = a0 * sn + a1 * c;
        const S bk = second_.b(k) + nx * z[3] + ny * z[4];
        gap -= bk * lr[k];
        e2x += lr[k] * nx;
        e2y += lr[k] * ny;
      }
    } else {
      for (int k = 0; k < kr; ++k) {
        gap -= second_.b(k) * lr[k];
        e2x += second_.A(k, 0) * lr[k];
        e2y += second_.A(k, 1) * lr[k];
      }
    }
    out[0] = gap;
    out[1] = e1x;
    out[2] = e1y;
    out[3] = e2x;
    out[4] = e2y;
    out[5] = 1.0 - (s[0] * s[0] + s[1] * s[1]);
  }

  // jac is row-major kDualRows x num_local(), fully overwritten.
  template <typename S>
  void Jacobian(const S* z, S* jac) const {
    using std::cos;
    using std::sin;
    const int nl = num_local();
    for (int i = 0; i < kDualRows * nl; ++i) jac[i] = S(0.0);
    auto J = [&](int row, int col) -> S& { return jac[row * nl + col]; };
    const int kr = second_.faces();
    const int of = fwd_offset(), orv = rev_offset(), os = s_offset();
    const S* lf = z + of;
    const S* lr = z + orv;
    const S* s = z + os;

    auto posed_block = [&](const ConvexPolytope& base, const S* pose, const S* lam, int pose_col,
                           int lam_col, int eq_row) {
      const S c = cos(pose[2]), sn = sin(pose[2]);
      for (int k = 0; k < base.faces(); ++k) {
        const double a0 = base.A(k, 0), a1 = base.A(k, 1);
        const S nx = a0 * c - a1 * sn, ny = a0 * sn + a1 * c;
        const S dnx = -ny, dny = nx;  // d n / d theta
        const S bk = base.b(k) + nx * pose[0] + ny * pose[1];
        const S dbk = dnx * pose[0] + dny * pose[1];
        J(0, pose_col + 0) -= lam[k] * nx;
        J(0, pose_col + 1) -= lam[k] * ny;
        J(0, pose_col + 2) -= lam[k] * dbk;
        J(0, lam_col + k) = -bk;
        J(eq_row, pose_col + 2) += lam[k] * dnx;
        J(eq_row + 1, pose_col + 2) += lam[k] * dny;
        J(eq_row, lam_col + k) = nx;
        J(eq_row + 1, lam_col + k) = ny;
      }
    };
    posed_block(first_, z, lf, 0, of, 1);
    if (second_posed_) {
      posed_block(second_, z + 3, lr, 3, orv, 3);
    } else {
      for (int k = 0; k < kr; ++k) {
        J(0, orv + k) = S(-second_.b(k));
        J(3, orv + k) = S(second_.A(k, 0));
        J(4, orv + k) = S(second_.A(k, 1));
      }
    }
    J(1, os) = S(1.0);
    J(2, os + 1) = S(1.0);
    J(3, os) = S(-1.0);
    J(4, os + 1) = S(-1.0);
    J(5, os) = -2.0 * s[0];
    J(5, os + 1) = -2.0 * s[1];
  }

  // Packs a pose pair and dual block into the local variable vector.
  Eigen::VectorXd Pack(const Pose& zi, const Pose* zj, const DualBlock& d) const {
    Eigen::VectorXd z(num_local());
    z(0) = zi.x;
    z(1) = zi.y;
    z(2) = zi.theta;
    if (second_posed_) {
      if (zj == nullptr) throw std::invalid_argument("second pose required");
      z(3) = zj->x;
      z(4) = zj->y;
      z(5) = zj->theta;
    }
    if (d.lambda_fwd.size() != first_.faces() || d.lambda_rev.size() != second_.faces()) {
      throw DimensionMismatchError("dual block does not match the polytope face counts");
    }
    z.segment(fwd_offset(), first_.faces()) = d.lambda_fwd;
    z.segment(rev_offset(), second_.faces()) = d.lambda_rev;
    z.segment<2>(s_offset()) = d.s;
    return z;
  }

 private:
  ConvexPolytope first_;
  ConvexPolytope second_;
  bool second_posed_;
  double clearance_;
};

// Jacobian of the transcription rows of a vehicle pair with respect to both
// poses and all dual variables (kDualRows x local size).
inline Eigen::MatrixXd PairResidualJacobians(const ConvexPolytope& base_i, const Pose& zi,
                                             const ConvexPolytope& base_j, const Pose& zj,
                                             const DualBlock& d, double min_distance) {
  DualPairTerm term(base_i, base_j, true, min_distance);
  const Eigen::VectorXd z = term.Pack(zi, &zj, d);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> j(kDualRows,
                                                                           term.num_local());
  term.Jacobian<double>(z.data(), j.data());
  return j;
}

// Writes `dir` as a nonnegative combination of two face normals, choosing the
// pair with the smallest b^T lambda. That value is the support function of P
// along dir, so the multipliers are optimal for the given direction.
inline Eigen::VectorXd FaceAlignedMultipliers(const ConvexPolytope& P, const Vec2& dir) {
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(P.faces());
  if (dir.norm() == 0.0) return lam;
  double best_res = std::numeric_limits<double>::infinity();
  for (int a = 0; a < P.faces(); ++a) {
    for (int b = a + 1; b < P.faces(); ++b) {
      Eigen::Matrix2d m;
      m.col(0) = P.A.row(a).transpose();
      m.col(1) = P.A.row(b).transpose();
      if (std::abs(m.determinant()) < 1e-12) continue;
      const Vec2 coef = m.partialPivLu().solve(dir);
      if (coef.minCoeff() < -1e-15) continue;
      const double res = coef(0) * P.b(a) + coef(1) * P.b(b);  // support value along dir
      if (res < best_res) {
        best_res = res;
        lam.setZero();
        lam(a) = std::max(coef(0), 0.0);
        lam(b) = std::max(coef(1), 0.0);
      }
    }
  }
  return lam;
}

// Dual block built from the centre offset: s is the unit vector from the
// second polytope's centre to the first's, and the multipliers satisfy both
// equalities exactly.
inline DualBlock FaceAlignedDualBlock(const ConvexPolytope& first, const ConvexPolytope& second) {
  auto centre = [](const ConvexPolytope& P) {
    const auto v = Vertices(P);
    Vec2 c = Vec2::Zero();
    for (const auto& p : v) c += p;
    return Vec2(c / static_cast<double>(v.size()));
  };
  Vec2 dir = centre(first) - centre(second);
  if (dir.norm() < 1e-12) dir = Vec2::UnitX();
  DualBlock d;
  d.s = dir.normalized();
  d.lambda_fwd = FaceAlignedMultipliers(first, -d.s);
  d.lambda_rev = FaceAlignedMultipliers(second, d.s);
  return d;
}

// Face-aligned block whose direction maximises the dual gap among the centre
// offset and every face normal of either polytope. Positive whenever the two
// polytopes are disjoint.
inline DualBlock BestFaceAlignedDualBlock(const ConvexPolytope& first, const ConvexPolytope& second) {
  DualBlock best = FaceAlignedDualBlock(first, second);
  auto gap = [&](const DualBlock& d) { return -first.b.dot(d.lambda_fwd) - second.b.dot(d.lambda_rev); };
  double best_gap = gap(best);
  auto consider = [&](const Vec2& n) {
    DualBlock d;
    d.s = n;
    d.lambda_fwd = FaceAlignedMultipliers(first, -n);
    d.lambda_rev = FaceAlignedMultipliers(second, n);
    const double g = gap(d);
    if (g > best_gap + 1e-12) {
      best_gap = g;
      best = d;
    }
  };
  for (int k = 0; k < first.faces(); ++k) consider(-first.A.row(k).transpose());
  for (int k = 0; k < second.faces(); ++k) consider(second.A.row(k).transpose());
  return best;
}

}  // namespace lanefree

#endif  // LANEFREE_DUALITY_HPP_
