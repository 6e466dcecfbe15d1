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

#include "lanefree/geometry.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <random>

namespace lanefree {
namespace {

// Corner points of a w x h rectangle rotated by th about (cx, cy).
std::vector<Vec2> RectCorners(double cx, double cy, double th, double w, double h) {
  std::vector<Vec2> out;
  for (auto [sx, sy] : {std::pair{1, 1}, {-1, 1}, {-1, -1}, {1, -1}}) {
    const Vec2 local(0.5 * w * sx, 0.5 * h * sy);
    out.push_back(Rotation(th) * local + Vec2(cx, cy));
  }
  return out;
}

// Closest distance between segments p0p1 and q0q1 by minimising the
// two-parameter quadratic with clamping.
double SegmentSegment(const Vec2& p0, const Vec2& p1, const Vec2& q0, const Vec2& q1) {
  const Vec2 d1 = p1 - p0, d2 = q1 - q0, r = p0 - q0;
  const double a = d1.dot(d1), e = d2.dot(d2), f = d2.dot(r), c = d1.dot(r), b = d1.dot(d2);
  const double denom = a * e - b * b;
  double s = denom > 1e-14 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
  double t = (b * s + f) / e;
  if (t < 0.0) {
    t = 0.0;
    s = std::clamp(-c / a, 0.0, 1.0);
  } else if (t > 1.0) {
    t = 1.0;
    s = std::clamp((b - c) / a, 0.0, 1.0);
  }
  return ((p0 + s * d1) - (q0 + t * d2)).norm();
}

bool SegmentsCross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto cross = [](const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); };
  const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  return d1 * d2 < 0 && d3 * d4 < 0;
}

bool InsideCcw(const Vec2& p, const std::vector<Vec2>& poly) {
  for (size_t i = 0; i < poly.size(); ++i) {
    const Vec2 e = poly[(i + 1) % poly.size()] - poly[i];
    const Vec2 w = p - poly[i];
    if (e.x() * w.y() - e.y() * w.x() < 0) return false;
  }
  return true;
}

// Edge-pair enumeration over ordered corner lists.
double CaseOracle(const std::vector<Vec2>& p, const std::vector<Vec2>& q) {
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < p.size(); ++i) {
    for (size_t j = 0; j < q.size(); ++j) {
      const Vec2 &a = p[i], &b = p[(i + 1) % p.size()], &c = q[j], &d = q[(j + 1) % q.size()];
      if (SegmentsCross(a, b, c, d)) return 0.0;
      best = std::min(best, SegmentSegment(a, b, c, d));
    }
  }
  if (InsideCcw(p[0], q) || InsideCcw(q[0], p)) return 0.0;
  return best;
}

ConvexPolytope PosedRect(double cx, double cy, double th, double w, double h) {
  return PolytopeAtPose(ConvexPolytope::Box(-w / 2, w / 2, -h / 2, h / 2), {cx, cy, th});
}

TEST(BaseBody, BoxFromParams) {
  VehicleParams p;
  const auto P = BaseBodyPolytope(p);
  ASSERT_EQ(P.faces(), 4);
  EXPECT_TRUE(P.b.isApprox(Eigen::Vector4d(2.3, 2.3, 1.0, 1.0)));
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(P.A.row(i).norm(), 1.0);
  EXPECT_TRUE(((P.A * Vec2::Zero() - P.b).array() < 0).all());
  const Eigen::VectorXd slack = P.b - P.A * Vec2(2.3, 1.0);
  EXPECT_EQ((slack.array().abs() < 1e-15).count(), 2);
  EXPECT_TRUE((slack.array() >= -1e-15).all());
}

TEST(PolytopeAtPose, IdentityAndTranslation) {
  const auto base = BaseBodyPolytope(VehicleParams{});
  const auto same = PolytopeAtPose(base, {0, 0, 0});
  EXPECT_TRUE(same.A.isApprox(base.A));
  EXPECT_TRUE(same.b.isApprox(base.b));
  const auto moved = PolytopeAtPose(base, {1, 2, 0});
  EXPECT_TRUE(moved.A.isApprox(base.A));
  EXPECT_TRUE(moved.b.isApprox(base.b + base.A * Vec2(1, 2)));
}

TEST(PolytopeAtPose, VerticesMatchRigidTransform) {
  const auto base = BaseBodyPolytope(VehicleParams{});
  const Pose z{1, 2, std::numbers::pi / 2};
  const auto got = Vertices(PolytopeAtPose(base, z));
  const auto expect = RectCorners(1, 2, z.theta, 4.6, 2.0);
  ASSERT_EQ(got.size(), 4u);
  for (const auto& e : expect) {
    double nearest = 1e9;
    for (const auto& g : got) nearest = std::min(nearest, (g - e).norm());
    EXPECT_LT(nearest, 1e-12);
  }
}

TEST(PolytopeAtPose, PreservesAreaAndContainsCentroid) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-30, 30), th(-4, 4);
  const auto base = BaseBodyPolytope(VehicleParams{});
  const double area = PolygonArea(Vertices(base));
  EXPECT_NEAR(area, 4.6 * 2.0, 1e-12);
  for (int i = 0; i < 50; ++i) {
    const Pose z{u(rng), u(rng), th(rng)};
    const auto P = PolytopeAtPose(base, z);
    EXPECT_NEAR(PolygonArea(Vertices(P)), area, 1e-9);
    EXPECT_TRUE(P.Contains(Vec2(z.x, z.y)));
    for (int r = 0; r < P.faces(); ++r) EXPECT_NEAR(P.A.row(r).norm(), 1.0, 1e-14);
  }
}

TEST(BuildIntersection, MembershipExamples) {
  const auto lay = BuildIntersection(5, 30);
  EXPECT_TRUE(lay.boundaries[0].Contains(Vec2(20, 20)));
  for (const auto& b : lay.boundaries) EXPECT_FALSE(b.Contains(Vec2(0, 0)));
  EXPECT_TRUE(lay.InRoad(Vec2(0, 0)));
}

TEST(BuildIntersection, OffRoadPointsLieInExactlyOneBlock) {
  const auto lay = BuildIntersection(5, 30);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-34.9, 34.9);
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    const Vec2 p(u(rng), u(rng));
    const bool off_road = std::abs(p.x()) > 5 && std::abs(p.y()) > 5;
    int inside = 0;
    for (const auto& b : lay.boundaries) inside += b.Contains(p);
    EXPECT_EQ(inside, off_road ? 1 : 0);
    EXPECT_EQ(lay.InRoad(p), !off_road);
    checked += off_road;
  }
  EXPECT_GT(checked, 100);
  const Vec2 p(6, 20);
  int inside = 0;
  for (const auto& b : lay.boundaries) inside += b.Contains(p);
  EXPECT_EQ(inside, 1);
}

TEST(BuildIntersection, BlocksArePairwiseDisjoint) {
  const auto lay = BuildIntersection();
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) EXPECT_GT(MinDistanceOracle(lay.boundaries[i], lay.boundaries[j]), 0.0);
  }
  EXPECT_THROW(BuildIntersection(0, 10), std::invalid_argument);
}

TEST(MinDistance, FaceGapAndOverlap) {
  const auto a = ConvexPolytope::Box(-0.5, 0.5, -0.5, 0.5);
  const auto b = ConvexPolytope::Box(2.5, 3.5, -0.5, 0.5);
  const auto c = ConvexPolytope::Box(0.2, 1.2, 0.1, 1.1);
  EXPECT_DOUBLE_EQ(MinDistanceOracle(a, b), 2.0);
  EXPECT_DOUBLE_EQ(MinDistanceOracle(a, c), 0.0);
}

TEST(MinDistance, MatchesEdgeEnumerationOnRandomRectangles) {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> pos(-8, 8), th(-3.2, 3.2), len(0.5, 5);
  for (int i = 0; i < 500; ++i) {
    const double c1x = pos(rng), c1y = pos(rng), t1 = th(rng), w1 = len(rng), h1 = len(rng);
    const double c2x = pos(rng), c2y = pos(rng), t2 = th(rng), w2 = len(rng), h2 = len(rng);
    const double got = MinDistanceOracle(PosedRect(c1x, c1y, t1, w1, h1), PosedRect(c2x, c2y, t2, w2, h2));
    const double expect = CaseOracle(RectCorners(c1x, c1y, t1, w1, h1), RectCorners(c2x, c2y, t2, w2, h2));
    EXPECT_NEAR(got, expect, 1e-9) << "case " << i;
  }
}

TEST(MinDistance, BoundedByBoundarySampling) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> pos(-6, 6), th(-3.2, 3.2), len(0.5, 4);
  for (int i = 0; i < 30; ++i) {
    const auto p = RectCorners(pos(rng), pos(rng), th(rng), len(rng), len(rng));
    const auto q = RectCorners(pos(rng), pos(rng), th(rng), len(rng), len(rng));
    auto from = [](const std::vector<Vec2>& v) {
      Eigen::Matrix<double, Eigen::Dynamic, 2> a(4, 2);
      Eigen::VectorXd b(4);
      for (int k = 0; k < 4; ++k) {
        const Vec2 e = v[(k + 1) % 4] - v[k];
        a.row(k) = Vec2(e.y(), -e.x()).transpose();
        b(k) = a.row(k).dot(v[k]);
      }
      return ConvexPolytope::FromHalfspaces(a, b);
    };
    const ConvexPolytope P = from(p), Q = from(q);
    const int n = 400;
    double sampled = 1e9;
    auto boundary = [&](const std::vector<Vec2>& v, int k) {
      const int e = k / n;
      const double t = static_cast<double>(k % n) / n;
      return Vec2(v[e] + t * (v[(e + 1) % 4] - v[e]));
    };
    for (int a = 0; a < 4 * n; ++a) {
      for (int b = 0; b < 4 * n; ++b) sampled = std::min(sampled, (boundary(p, a) - boundary(q, b)).norm());
    }
    const double d = MinDistanceOracle(P, Q);
    if (d > 0.0) {
      EXPECT_LE(d, sampled + 1e-12);
      EXPECT_GE(d, sampled - 1e-2);
    }
  }
}

TEST(MinDistance, SymmetricAndTranslationMonotone) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> th(-3.2, 3.2);
  for (int i = 0; i < 50; ++i) {
    const auto P = PosedRect(0, 0, th(rng), 4.6, 2.0);
    const Vec2 c(10, 3);
    const auto Q = PosedRect(c.x(), c.y(), th(rng), 4.6, 2.0);
    const double d = MinDistanceOracle(P, Q);
    EXPECT_DOUBLE_EQ(d, MinDistanceOracle(Q, P));
    ASSERT_GT(d, 0.0);
    // Translating Q by 0.5 gains at most 0.5, with equality along the
    // witness direction (found by sampling directions).
    double best_gain = 0.0;
    for (int k = 0; k < 3600; ++k) {
      const double a = 2 * std::numbers::pi * k / 3600.0;
      const Vec2 dir(std::cos(a), std::sin(a));
      const auto Qt = PolytopeAtPose(Q, {dir.x() * 0.5, dir.y() * 0.5, 0.0});
      best_gain = std::max(best_gain, MinDistanceOracle(P, Qt) - d);
    }
    EXPECT_LE(best_gain, 0.5 + 1e-9);
    EXPECT_GE(best_gain, 0.5 - 1e-4);
  }
}

}  // namespace
}  // namespace lanefree
