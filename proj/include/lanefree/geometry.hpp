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

#ifndef LANEFREE_GEOMETRY_HPP_
#define LANEFREE_GEOMETRY_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanefree/dynamics.hpp"

namespace lanefree {

using Vec2 = Eigen::Vector2d;

// Half-space polygon {X : A X <= b}. Rows of A are unit outward normals, so
// entries of b are signed support distances.
struct ConvexPolytope {
  Eigen::Matrix<double, Eigen::Dynamic, 2> A;
  Eigen::VectorXd b;

  int faces() const { return static_cast<int>(b.size()); }

  // Normalises rows; throws on zero rows or mismatched sizes.
  static ConvexPolytope FromHalfspaces(Eigen::Matrix<double, Eigen::Dynamic, 2> a,
                                       Eigen::VectorXd off) {
    if (a.rows() != off.size() || a.rows() < 3) {
      throw std::invalid_argument("polytope needs at least 3 matching rows");
    }
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double n = a.row(i).norm();
      if (!(n > 0.0)) throw std::invalid_argument("zero face normal");
      a.row(i) /= n;
      off(i) /= n;
    }
    return {std::move(a), std::move(off)};
  }

  static ConvexPolytope Box(double xmin, double xmax, double ymin, double ymax) {
    Eigen::Matrix<double, Eigen::Dynamic, 2> a(4, 2);
    a << 1, 0, -1, 0, 0, 1, 0, -1;
    Eigen::VectorXd off(4);
    off << xmax, -xmin, ymax, -ymin;
    return {a, off};
  }

  bool Contains(const Vec2& p, double tol = 0.0) const {
    return ((A * p - b).array() <= tol).all();
  }
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

inline Eigen::Matrix2d Rotation(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

// Vehicle footprint centred at the origin, long axis along +x.
inline ConvexPolytope BaseBodyPolytope(const VehicleParams& p) {
  const double hl = 0.5 * p.length;
  const double hw = 0.5 * p.width;
  return ConvexPolytope::Box(-hl, hl, -hw, hw);
}

// {R(theta) X + p : A X <= b} written as A' = A R^T, b' = b + A R^T p.
inline ConvexPolytope PolytopeAtPose(const ConvexPolytope& base, const Pose& z) {
  const Eigen::Matrix2d r = Rotation(z.theta);
  ConvexPolytope out;
  out.A = base.A * r.transpose();
  out.b = base.b + out.A * Vec2(z.x, z.y);
  return out;
}

// Counter-clockwise vertex list of a bounded polytope.
inline std::vector<Vec2> Vertices(const ConvexPolytope& P, double tol = 1e-9) {
  std::vector<Vec2> pts;
  const int n = P.faces();
  double scale = 1.0;
  for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(P.b(i)));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      Eigen::Matrix2d m;
      m.row(0) = P.A.row(i);
      m.row(1) = P.A.row(j);
      if (std::abs(m.determinant()) < 1e-12) continue;
      const Vec2 v = m.partialPivLu().solve(Vec2(P.b(i), P.b(j)));
      if (!P.Contains(v, tol * scale)) continue;
      const bool dup = std::any_of(pts.begin(), pts.end(),
                                   [&](const Vec2& q) { return (q - v).norm() < tol * scale; });
      if (!dup) pts.push_back(v);
    }
  }
  if (pts.empty()) return pts;
  Vec2 c = Vec2::Zero();
  for (const auto& v : pts) c += v;
  c /= static_cast<double>(pts.size());
  std::sort(pts.begin(), pts.end(), [&](const Vec2& a, const Vec2& b) {
    return std::atan2(a.y() - c.y(), a.x() - c.x()) < std::atan2(b.y() - c.y(), b.x() - c.x());
  });
  return pts;
}

inline double PolygonArea(const std::vector<Vec2>& v) {
  double a = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    const Vec2& p = v[i];
    const Vec2& q = v[(i + 1) % v.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * std::abs(a);
}

inline double PointSegmentDistance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

// Exact Euclidean distance between two convex polygons by case enumeration:
// zero when no face normal separates them, otherwise the smallest
// vertex-to-edge distance in either direction. Independent of any dual
// quantity; used for verification and certification.
inline double MinDistanceOracle(const ConvexPolytope& P, const ConvexPolytope& Q) {
  const auto vp = Vertices(P);
  const auto vq = Vertices(Q);
  if (vp.empty() || vq.empty()) throw std::invalid_argument("empty polytope");

  auto separated_along = [&](const Vec2& n) {
    double pmin = std::numeric_limits<double>::infinity(), pmax = -pmin;
    double qmin = pmin, qmax = -pmin;
    for (const auto& v : vp) { pmin = std::min(pmin, n.dot(v)); pmax = std::max(pmax, n.dot(v)); }
    for (const auto& v : vq) { qmin = std::min(qmin, n.dot(v)); qmax = std::max(qmax, n.dot(v)); }
    return pmax < qmin || qmax < pmin;
  };
  bool separated = false;
  for (int i = 0; i < P.faces() && !separated; ++i) separated = separated_along(P.A.row(i));
  for (int i = 0; i < Q.faces() && !separated; ++i) separated = separated_along(Q.A.row(i));
  if (!separated) return 0.0;

  double best = std::numeric_limits<double>::infinity();
  auto sweep = [&](const std::vector<Vec2>& pts, const std::vector<Vec2>& poly) {
    for (const auto& p : pts) {
      for (size_t k = 0; k < poly.size(); ++k) {
        best = std::min(best, PointSegmentDistance(p, poly[k], poly[(k + 1) % poly.size()]));
      }
    }
  };
  sweep(vp, vq);
  sweep(vq, vp);
  return best;
}

// Four-arm junction. The drivable area is the cross |x| <= w or |y| <= w
// (one inbound and one outbound lane of width w per arm); the four corner
// blocks of side L are the road boundaries.
struct IntersectionLayout {
  double lane_width = 5.0;
  double arm_length = 35.0;
  std::array<ConvexPolytope, 4> boundaries;  // NE, NW, SW, SE

  static constexpr std::array<const char*, 4> kBoundaryNames = {"NE", "NW", "SW", "SE"};

  double extent() const { return lane_width + arm_length; }

  // True when p lies on the drivable cross (boundary blocks excluded).
  bool InRoad(const Vec2& p) const {
    const double e = extent();
    if (std::abs(p.x()) > e || std::abs(p.y()) > e) return false;
    return std::abs(p.x()) <= lane_width || std::abs(p.y()) <= lane_width;
  }
};

inline IntersectionLayout BuildIntersection(double w = 5.0, double L = 35.0) {
  if (!(w > 0.0) || !(L > 0.0)) throw std::invalid_argument("lane width and arm length must be positive");
  IntersectionLayout lay;
  lay.lane_width = w;
  lay.arm_length = L;
  const double e = w + L;
  lay.boundaries[0] = ConvexPolytope::Box(w, e, w, e);
  lay.boundaries[1] = ConvexPolytope::Box(-e, -w, w, e);
  lay.boundaries[2] = ConvexPolytope::Box(-e, -w, -e, -w);
  lay.boundaries[3] = ConvexPolytope::Box(w, e, -e, -w);
  return lay;
}

}  // namespace lanefree

#endif  // LANEFREE_GEOMETRY_HPP_
