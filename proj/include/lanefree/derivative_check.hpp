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

#ifndef LANEFREE_DERIVATIVE_CHECK_HPP_
#define LANEFREE_DERIVATIVE_CHECK_HPP_

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lanefree/nlp.hpp"

namespace lanefree {

struct DerivativeBlockError {
  std::string name;
  double max_rel_error = 0.0;
  int worst_row = -1;  // -1 for the objective gradient
  int worst_col = -1;
};

struct DerivativeReport {
  std::vector<DerivativeBlockError> blocks;  // "objective", then constraint blocks
  double max_rel_error = 0.0;
  double tolerance = 1e-6;

  bool ok() const { return max_rel_error <= tolerance; }
  std::vector<std::string> Flagged() const {
    std::vector<std::string> out;
    for (const auto& b : blocks) {
      if (b.max_rel_error > tolerance) out.push_back(b.name);
    }
    return out;
  }
};

struct DerivativeCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-6;
  bool check_hessian = false;  // compare the Lagrangian Hessian against differenced gradients
  Eigen::VectorXd multipliers;  // used with check_hessian; ones when empty
};

namespace internal {

inline double RelError(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Greedy distance-2 colouring: columns sharing a row get different colours.
inline std::vector<int> ColourColumns(const SparsityPattern& pat, int n, int m) {
  std::vector<std::vector<int>> rows_of(n), cols_of(m);
  for (size_t k = 0; k < pat.nnz(); ++k) {
    rows_of[pat.cols[k]].push_back(pat.rows[k]);
    cols_of[pat.rows[k]].push_back(pat.cols[k]);
  }
  std::vector<int> colour(n, -1);
  std::vector<int> mark;
  for (int j = 0; j < n; ++j) {
    for (int r : rows_of[j]) {
      for (int c : cols_of[r]) {
        if (colour[c] >= 0) {
          if (static_cast<int>(mark.size()) <= colour[c]) mark.resize(colour[c] + 1, -1);
          mark[colour[c]] = j;
        }
      }
    }
    int c = 0;
    while (c < static_cast<int>(mark.size()) && mark[c] == j) ++c;
    colour[j] = c;
  }
  return colour;
}

}  // namespace internal

// Central-difference check of the gradient and constraint Jacobian (and
// optionally the Lagrangian Hessian) at x. Entries outside the declared
// sparsity pattern are compared against zero.
inline DerivativeReport CheckDerivatives(const NlpProblem& p, const Eigen::VectorXd& x,
                                         const DerivativeCheckOptions& opt = {}) {
  const int n = p.num_variables();
  const int m = p.num_constraints();
  const double h = opt.step;
  DerivativeReport rep;
  rep.tolerance = opt.tolerance;

  DerivativeBlockError obj{"objective"};
  Eigen::VectorXd g;
  p.Gradient(x, g);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    const double fd = (p.Objective(xp) - p.Objective(xm)) / (2.0 * h);
    const double e = internal::RelError(g(j), fd);
    if (e > obj.max_rel_error) {
      obj.max_rel_error = e;
      obj.worst_col = j;
    }
  }
  rep.blocks.push_back(obj);

  const SparsityPattern& pat = p.JacobianPattern();
  std::vector<double> vals(pat.nnz());
  p.JacobianValues(x, vals);
  Eigen::SparseMatrix<double> jac(m, n);
  {
    std::vector<Eigen::Triplet<double>> t;
    for (size_t k = 0; k < pat.nnz(); ++k) t.emplace_back(pat.rows[k], pat.cols[k], vals[k]);
    jac.setFromTriplets(t.begin(), t.end());
  }
  const Eigen::SparseMatrix<double, Eigen::RowMajor> jac_r = jac;

  // Columns of one colour never share a row, so one perturbation recovers all
  // of them; rows outside the pattern must stay unchanged.
  const std::vector<int> colour = internal::ColourColumns(pat, n, m);
  const int ncol = n > 0 ? *std::max_element(colour.begin(), colour.end()) + 1 : 0;
  std::vector<std::vector<int>> members(ncol);
  for (int j = 0; j < n; ++j) members[colour[j]].push_back(j);
  std::vector<int> owner(m);

  std::vector<IndexBlock> blocks = p.ConstraintBlocks();
  std::vector<int> block_of(m, 0);
  for (size_t b = 0; b < blocks.size(); ++b) {
    for (int r = blocks[b].offset; r < blocks[b].offset + blocks[b].size; ++r) block_of[r] = static_cast<int>(b);
  }
  std::vector<DerivativeBlockError> cb;
  for (const auto& b : blocks) cb.push_back({b.name});

  Eigen::VectorXd cp, cm;
  for (int col = 0; col < ncol; ++col) {
    Eigen::VectorXd xp = x, xm = x;
    for (int j : members[col]) {
      xp(j) += h;
      xm(j) -= h;
    }
    p.Constraints(xp, cp);
    p.Constraints(xm, cm);
    const Eigen::VectorXd fd = (cp - cm) / (2.0 * h);
    std::fill(owner.begin(), owner.end(), -1);
    for (int j : members[col]) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(jac, j); it; ++it) owner[it.row()] = j;
    }
    for (int r = 0; r < m; ++r) {
      const double analytic = owner[r] >= 0 ? jac_r.coeff(r, owner[r]) : 0.0;
      const double e = internal::RelError(analytic, fd(r));
      auto& blk = cb[block_of[r]];
      if (e > blk.max_rel_error) {
        blk.max_rel_error = e;
        blk.worst_row = r;
        blk.worst_col = owner[r];
      }
    }
  }
  for (auto& b : cb) rep.blocks.push_back(b);

  if (opt.check_hessian) {
    DerivativeBlockError hb{"hessian"};
    const Eigen::VectorXd y = opt.multipliers.size() == m ? opt.multipliers : Eigen::VectorXd::Ones(m);
    const SparsityPattern& hp = p.HessianPattern();
    std::vector<double> hv(hp.nnz());
    p.HessianValues(x, 1.0, y, hv);
    Eigen::SparseMatrix<double> hl(n, n);
    {
      std::vector<Eigen::Triplet<double>> t;
      for (size_t k = 0; k < hp.nnz(); ++k) t.emplace_back(hp.rows[k], hp.cols[k], hv[k]);
      hl.setFromTriplets(t.begin(), t.end());
    }
    const Eigen::SparseMatrix<double> hfull =
        Eigen::SparseMatrix<double>(hl.selfadjointView<Eigen::Lower>());
    auto lag_grad = [&](const Eigen::VectorXd& xx) {
      Eigen::VectorXd gg;
      p.Gradient(xx, gg);
      std::vector<double> jv(pat.nnz());
      p.JacobianValues(xx, jv);
      for (size_t k = 0; k < pat.nnz(); ++k) gg(pat.cols[k]) += jv[k] * y(pat.rows[k]);
      return gg;
    };
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      const Eigen::VectorXd fd = (lag_grad(xp) - lag_grad(xm)) / (2.0 * h);
      const Eigen::VectorXd an = hfull.col(j);
      for (int i = 0; i < n; ++i) {
        const double e = internal::RelError(an(i), fd(i));
        if (e > hb.max_rel_error) {
          hb.max_rel_error = e;
          hb.worst_row = i;
          hb.worst_col = j;
        }
      }
    }
    rep.blocks.push_back(hb);
  }

  for (const auto& b : rep.blocks) rep.max_rel_error = std::max(rep.max_rel_error, b.max_rel_error);
  return rep;
}

}  // namespace lanefree

#endif  // LANEFREE_DERIVATIVE_CHECK_HPP_
