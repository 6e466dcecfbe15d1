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

#ifndef LANEFREE_COLLOCATION_HPP_
#define LANEFREE_COLLOCATION_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace lanefree {

enum class CollocationKind { kRadau, kLegendre };

inline const char* ToString(CollocationKind k) {
  return k == CollocationKind::kRadau ? "radau" : "legendre";
}

namespace internal {

inline double Legendre(int n, double x) {
  if (n == 0) return 1.0;
  double p0 = 1.0, p1 = x;
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

// Simple roots of f on (-1, 1] located by sign changes on a fine grid and
// polished by bisection.
template <typename F>
std::vector<double> BracketRoots(F f, int expected) {
  std::vector<double> roots;
  const int grid = 4000;
  double xa = -1.0, fa = f(xa);
  for (int i = 1; i <= grid; ++i) {
    const double xb = -1.0 + 2.0 * i / grid;
    const double fb = f(xb);
    if (fb == 0.0) {
      roots.push_back(xb);
    } else if (fa * fb < 0.0) {
      double lo = xa, hi = xb, flo = fa;
      for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) { lo = hi = mid; break; }
        if ((fm < 0.0) == (flo < 0.0)) { lo = mid; flo = fm; } else { hi = mid; }
      }
      roots.push_back(0.5 * (lo + hi));
    }
    xa = xb;
    fa = fb;
  }
  if (static_cast<int>(roots.size()) != expected) {
    throw std::runtime_error("collocation root search found " + std::to_string(roots.size()) +
                             " roots, expected " + std::to_string(expected));
  }
  return roots;
}

}  // namespace internal

// Lagrange collocation on [0, 1] with nodes tau_0 = 0 < tau_1 < ... < tau_d.
// Radau places tau_d at 1; Gauss-Legendre keeps all collocation points
// interior, so the interval end is reached through the continuity weights.
class CollocationScheme {
 public:
  CollocationScheme(int degree, CollocationKind kind) : degree_(degree), kind_(kind) {
    if (degree < 1 || degree > 9) throw std::invalid_argument("collocation degree must be in [1, 9]");
    std::vector<double> pts;
    if (kind == CollocationKind::kRadau) {
      // Right Radau points: zeros of P_d - P_{d-1} on (-1, 1].
      pts = internal::BracketRoots(
          [d = degree](double x) { return internal::Legendre(d, x) - internal::Legendre(d - 1, x); },
          degree);
      pts.back() = 1.0;
    } else {
      pts = internal::BracketRoots([d = degree](double x) { return internal::Legendre(d, x); },
                                   degree);
    }
    tau_.push_back(0.0);
    for (double x : pts) tau_.push_back(0.5 * (x + 1.0));

    const int n = degree + 1;
    // Barycentric weights give the differentiation matrix without forming
    // monomial coefficients, which lose accuracy at high degree.
    std::vector<double> bw(n, 1.0);
    for (int j = 0; j < n; ++j) {
      for (int m = 0; m < n; ++m) {
        if (m != j) bw[j] /= tau_[j] - tau_[m];
      }
    }
    deriv_ = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < n; ++k) {
      double diag = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j == k) continue;
        deriv_(j, k) = bw[j] / bw[k] / (tau_[k] - tau_[j]);
        diag -= deriv_(j, k);
      }
      deriv_(k, k) = diag;
    }
    // Gauss-Legendre with n points integrates each degree-d basis exactly.
    const std::vector<double> gx =
        internal::BracketRoots([n](double x) { return internal::Legendre(n, x); }, n);
    std::vector<double> gw(n);
    for (int i = 0; i < n; ++i) {
      const double x = gx[i];
      const double dp = n * (x * internal::Legendre(n, x) - internal::Legendre(n - 1, x)) / (x * x - 1.0);
      gw[i] = 1.0 / ((1.0 - x * x) * dp * dp);  // half the usual weight, mapped to [0, 1]
    }
    end_weights_ = Eigen::VectorXd::Zero(n);
    quad_weights_ = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < n; ++j) {
      end_weights_(j) = Basis(j, 1.0);
      for (int i = 0; i < n; ++i) quad_weights_(j) += gw[i] * Basis(j, 0.5 * (gx[i] + 1.0));
    }
  }

  int degree() const { return degree_; }
  CollocationKind kind() const { return kind_; }
  bool end_is_node() const { return kind_ == CollocationKind::kRadau; }
  const std::vector<double>& tau() const { return tau_; }
  // deriv(j, k) = l_j'(tau_k).
  const Eigen::MatrixXd& deriv() const { return deriv_; }
  // l_j(1): state at the interval end from the node values.
  const Eigen::VectorXd& end_weights() const { return end_weights_; }
  // Integral of l_j over [0, 1].
  const Eigen::VectorXd& quad_weights() const { return quad_weights_; }

  double Basis(int j, double t) const {
    double v = 1.0;
    for (int m = 0; m <= degree_; ++m) {
      if (m != j) v *= (t - tau_[m]) / (tau_[j] - tau_[m]);
    }
    return v;
  }

 private:
  int degree_;
  CollocationKind kind_;
  std::vector<double> tau_;
  Eigen::MatrixXd deriv_;
  Eigen::VectorXd end_weights_;
  Eigen::VectorXd quad_weights_;
};

}  // namespace lanefree

#endif  // LANEFREE_COLLOCATION_HPP_
