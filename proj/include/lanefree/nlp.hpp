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

#ifndef LANEFREE_NLP_HPP_
#define LANEFREE_NLP_HPP_

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lanefree {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Coordinate-format sparsity. Duplicate coordinates are allowed and summed.
struct SparsityPattern {
  std::vector<int> rows;
  std::vector<int> cols;

  size_t nnz() const { return rows.size(); }
  void Add(int r, int c) {
    rows.push_back(r);
    cols.push_back(c);
  }
};

// A named contiguous range of variables or constraint rows.
struct IndexBlock {
  std::string name;
  int offset = 0;
  int size = 0;
};

// Smooth NLP
//   min f(x)  s.t.  gl <= c(x) <= gu,  xl <= x <= xu.
// Rows with gl == gu are equalities. The Hessian is of the Lagrangian
// obj_factor * f + sum_i y_i c_i and only its lower triangle is reported.
class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  virtual int num_variables() const = 0;
  virtual int num_constraints() const = 0;
  virtual void GetBounds(Eigen::VectorXd& xl, Eigen::VectorXd& xu, Eigen::VectorXd& gl,
                         Eigen::VectorXd& gu) const = 0;

  virtual double Objective(const Eigen::VectorXd& x) const = 0;
  virtual void Gradient(const Eigen::VectorXd& x, Eigen::VectorXd& g) const = 0;
  virtual void Constraints(const Eigen::VectorXd& x, Eigen::VectorXd& c) const = 0;

  virtual const SparsityPattern& JacobianPattern() const = 0;
  virtual void JacobianValues(const Eigen::VectorXd& x, std::span<double> values) const = 0;

  virtual const SparsityPattern& HessianPattern() const = 0;
  virtual void HessianValues(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd& y,
                             std::span<double> values) const = 0;

  // Row grouping used by diagnostics; a single block by default.
  virtual std::vector<IndexBlock> ConstraintBlocks() const {
    return {{"constraints", 0, num_constraints()}};
  }
};

// Dense adaptor for small problems defined by callables.
class DenseNlp : public NlpProblem {
 public:
  using ScalarFn = std::function<double(const Eigen::VectorXd&)>;
  using VectorFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
  using MatrixFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;
  // Hessian of obj_factor * f + y^T c.
  using LagHessFn =
      std::function<Eigen::MatrixXd(const Eigen::VectorXd&, double, const Eigen::VectorXd&)>;

  DenseNlp(int n, int m) : n_(n), m_(m) {
    xl_ = Eigen::VectorXd::Constant(n, -kInf);
    xu_ = Eigen::VectorXd::Constant(n, kInf);
    gl_ = Eigen::VectorXd::Zero(m);
    gu_ = Eigen::VectorXd::Zero(m);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i) jac_.Add(i, j);
    for (int j = 0; j < n; ++j)
      for (int i = j; i < n; ++i) hess_.Add(i, j);
  }

  DenseNlp& SetObjective(ScalarFn f, VectorFn g) {
    f_ = std::move(f);
    g_ = std::move(g);
    return *this;
  }
  DenseNlp& SetConstraints(VectorFn c, MatrixFn jac) {
    c_ = std::move(c);
    jfn_ = std::move(jac);
    return *this;
  }
  DenseNlp& SetLagrangianHessian(LagHessFn h) {
    h_ = std::move(h);
    return *this;
  }
  DenseNlp& SetVariableBounds(Eigen::VectorXd xl, Eigen::VectorXd xu) {
    xl_ = std::move(xl);
    xu_ = std::move(xu);
    return *this;
  }
  DenseNlp& SetConstraintBounds(Eigen::VectorXd gl, Eigen::VectorXd gu) {
    gl_ = std::move(gl);
    gu_ = std::move(gu);
    return *this;
  }

  int num_variables() const override { return n_; }
  int num_constraints() const override { return m_; }
  void GetBounds(Eigen::VectorXd& xl, Eigen::VectorXd& xu, Eigen::VectorXd& gl,
                 Eigen::VectorXd& gu) const override {
    xl = xl_;
    xu = xu_;
    gl = gl_;
    gu = gu_;
  }
  double Objective(const Eigen::VectorXd& x) const override { return f_(x); }
  void Gradient(const Eigen::VectorXd& x, Eigen::VectorXd& g) const override { g = g_(x); }
  void Constraints(const Eigen::VectorXd& x, Eigen::VectorXd& c) const override {
    c = m_ > 0 ? c_(x) : Eigen::VectorXd();
  }
  const SparsityPattern& JacobianPattern() const override { return jac_; }
  void JacobianValues(const Eigen::VectorXd& x, std::span<double> v) const override {
    if (m_ == 0) return;
    const Eigen::MatrixXd j = jfn_(x);
    size_t k = 0;
    for (int col = 0; col < n_; ++col)
      for (int row = 0; row < m_; ++row) v[k++] = j(row, col);
  }
  const SparsityPattern& HessianPattern() const override { return hess_; }
  void HessianValues(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd& y,
                     std::span<double> v) const override {
    const Eigen::MatrixXd h = h_(x, obj_factor, y);
    size_t k = 0;
    for (int col = 0; col < n_; ++col)
      for (int row = col; row < n_; ++row) v[k++] = h(row, col);
  }

 private:
  int n_, m_;
  Eigen::VectorXd xl_, xu_, gl_, gu_;
  ScalarFn f_;
  VectorFn g_;
  VectorFn c_;
  MatrixFn jfn_;
  LagHessFn h_;
  SparsityPattern jac_, hess_;
};

}  // namespace lanefree

#endif  // LANEFREE_NLP_HPP_
