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

#ifndef LANEFREE_SOLVER_HPP_
#define LANEFREE_SOLVER_HPP_

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "lanefree/nlp.hpp"

namespace lanefree {

enum class SolveStatus { kOptimal, kAcceptable, kMaxIterations, kInfeasible, kNumericalFailure };

inline const char* ToString(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kAcceptable: return "acceptable";
    case SolveStatus::kMaxIterations: return "max-iter";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kNumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

enum class DerivativeMode { kAnalytic, kFiniteDifferenceCheck };

struct SolverConfig {
  double kkt_tol = 1e-6;
  double constr_tol = 1e-6;
  double acceptable_tol = 1e-4;
  int acceptable_iter = 15;
  int max_iterations = 3000;
  double mu_init = 0.1;
  double bound_push = 1e-2;
  double bound_frac = 1e-2;
  double penalty_init = 1.0;
  bool gradient_scaling = true;
  double max_gradient = 100.0;
  DerivativeMode derivative_mode = DerivativeMode::kAnalytic;
  uint64_t seed = 0;  // recorded only; the reference solver draws no random numbers
  bool verbose = false;
};

struct SolveOutcome {
  SolveStatus status = SolveStatus::kNumericalFailure;
  int iterations = 0;
  double objective = 0.0;
  double stationarity = 0.0;
  double primal_infeasibility = 0.0;
  double complementarity = 0.0;
  double wall_time = 0.0;
  uint64_t seed = 0;
  int clipped_variables = 0;
  int offending_constraint = -1;
  std::string message;
};

// One accepted iteration. merit_before/after are evaluated with the same
// barrier parameter and penalty, so merit_after <= merit_before always.
struct IterationRecord {
  int iter = 0;
  double objective = 0.0;
  double inf_pr = 0.0;
  double inf_du = 0.0;
  double step = 0.0;
  double mu = 0.0;
  double merit_before = 0.0;
  double merit_after = 0.0;
  double penalty = 0.0;
  double regularization = 0.0;
};

// Line-delimited iteration log, one record per line, whitespace separated.
inline void WriteIterationLog(std::ostream& os, const std::vector<IterationRecord>& log) {
  os << "# iter objective inf_pr inf_du step mu merit_before merit_after penalty reg\n";
  char buf[320];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%d %.12e %.6e %.6e %.6e %.6e %.12e %.12e %.6e %.3e\n", r.iter,
                  r.objective, r.inf_pr, r.inf_du, r.step, r.mu, r.merit_before, r.merit_after,
                  r.penalty, r.regularization);
    os << buf;
  }
}

struct SolveResult {
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // constraint multipliers (Lagrangian f + y^T c)
  SolveOutcome outcome;
  std::vector<IterationRecord> log;
};

class NlpSolver {
 public:
  virtual ~NlpSolver() = default;
  virtual SolveResult Solve(const NlpProblem& problem, const Eigen::VectorXd& x0,
                            const SolverConfig& config) const = 0;
};

// Primal-dual interior-point method. Inequality rows get slack variables, the
// slacks are eliminated from the Newton system, and the resulting quasi-
// definite augmented system is factorised with a sparse LDL^T whose pivot
// signs give the inertia. Steps are globalised by fraction-to-boundary and a
// backtracking line search on the l1 exact-penalty barrier merit. A primal
// damping term grows while accepted steps stay short and decays once they
// lengthen.
class InteriorPointSolver : public NlpSolver {
 public:
  SolveResult Solve(const NlpProblem& problem, const Eigen::VectorXd& x0,
                    const SolverConfig& config) const override {
    Run run(problem, config);
    return run.Execute(x0);
  }

 private:
  using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
  using Vec = Eigen::VectorXd;

  class Run {
   public:
    Run(const NlpProblem& p, const SolverConfig& cfg) : p_(p), cfg_(cfg) {}

    SolveResult Execute(const Vec& x_start) {
      const auto t_begin = std::chrono::steady_clock::now();
      SolveResult res;
      res.outcome.seed = cfg_.seed;
      Setup();
      Vec x = x_start;
      if (x.size() != n_) {
        res.outcome.status = SolveStatus::kNumericalFailure;
        res.outcome.message = "initial point has the wrong dimension";
        return res;
      }
      for (int i = 0; i < n_; ++i) {
        if (x(i) < xl_(i) || x(i) > xu_(i)) ++res.outcome.clipped_variables;
      }
      x = PushInside(x, xl_, xu_);

      if (!Evaluate(x, /*with_jac=*/true) || !ComputeScaling(x)) {
        return Fail(res, x, SolveStatus::kNumericalFailure, "non-finite evaluation at start",
                    t_begin);
      }
      // Rescale bounds and re-evaluate with scaling active.
      ApplyScalingToBounds();
      Evaluate(x, true);

      // Primal vector w = [x; s].
      w_.resize(nw_);
      w_.head(n_) = x;
      for (int k = 0; k < mi_; ++k) w_(n_ + k) = c_(ineq_rows_[k]);
      w_ = PushInside(w_, wl_all_, wu_all_);
      y_ = Vec::Zero(m_);
      zl_ = Vec::Zero(nw_);
      zu_ = Vec::Zero(nw_);
      for (int i = 0; i < nw_; ++i) {
        if (has_l_[i]) zl_(i) = 1.0;
        if (has_u_[i]) zu_(i) = 1.0;
      }
      mu_ = cfg_.mu_init;
      nu_ = cfg_.penalty_init;
      BuildKktPattern();

      int acceptable_count = 0;
      double last_reg = 0.0;
      SolveStatus status = SolveStatus::kMaxIterations;
      std::string message;
      int iter = 0;
      for (;; ++iter) {
        // Convergence check at mu = 0.
        const Errors e0 = OptimalityErrors(0.0);
        const double viol = UnscaledViolation();
        if (cfg_.verbose) {
          std::fprintf(stderr, "it %4d f=% .8e inf_pr=%.3e inf_du=%.3e compl=%.3e mu=%.2e nu=%.2e\n",
                       iter, f_ / obj_scale_, viol, e0.stationarity, e0.complementarity, mu_, nu_);
        }
        if (e0.stationarity <= cfg_.kkt_tol && e0.complementarity <= cfg_.kkt_tol &&
            e0.primal <= cfg_.kkt_tol && viol <= cfg_.constr_tol) {
          status = SolveStatus::kOptimal;
          break;
        }
        const bool acceptable = e0.Max() <= cfg_.acceptable_tol && viol <= cfg_.acceptable_tol;
        acceptable_count = acceptable ? acceptable_count + 1 : 0;
        if (acceptable_count >= cfg_.acceptable_iter) {
          status = SolveStatus::kAcceptable;
          break;
        }
        if (iter >= cfg_.max_iterations) {
          status = acceptable ? SolveStatus::kAcceptable : SolveStatus::kMaxIterations;
          break;
        }

        // Monotone barrier update.
        for (int guard = 0; guard < 20; ++guard) {
          const Errors em = OptimalityErrors(mu_);
          if (em.Max() > 10.0 * mu_) break;
          const double next = std::max(cfg_.kkt_tol / 10.0, std::min(0.2 * mu_, std::pow(mu_, 1.5)));
          if (next >= mu_) break;
          mu_ = next;
        }

        if (!EvaluateHessian()) {
          return Fail(res, w_.head(n_), SolveStatus::kNumericalFailure,
                      "non-finite Hessian", t_begin);
        }

        // Newton step with inertia correction; escalate the regularisation
        // when the line search cannot make progress.
        bool accepted = false;
        double reg_floor = damping_;
        for (int attempt = 0; attempt < 6 && !accepted; ++attempt) {
          Step step;
          if (!ComputeStep(last_reg, reg_floor, step)) {
            return Fail(res, w_.head(n_), SolveStatus::kNumericalFailure,
                        "could not factorise the KKT system", t_begin);
          }
          last_reg = step.reg;
          IterationRecord rec;
          if (LineSearch(step, rec)) {
            rec.iter = iter + 1;
            rec.mu = mu_;
            rec.regularization = step.reg;
            rec.penalty = nu_;
            accepted = true;
            // Short accepted steps mean the quadratic model overreaches
            // along weakly curved directions; damp until steps lengthen.
            if (rec.step < 0.1) {
              damping_ = damping_ == 0.0 ? 1e-6 : std::min(10.0 * damping_, 1e2);
            } else if (rec.step >= 0.5) {
              damping_ = damping_ < 1e-8 ? 0.0 : 0.1 * damping_;
            }
            Evaluate(w_.head(n_), true);
            rec.objective = f_ / obj_scale_;
            rec.inf_pr = UnscaledViolation();
            rec.inf_du = OptimalityErrors(0.0).stationarity;
            res.log.push_back(rec);
          } else {
            reg_floor = std::max(1e-4, 100.0 * std::max(step.reg, reg_floor));
          }
        }
        if (!accepted) {
          const Errors e = OptimalityErrors(0.0);
          if (e.Max() <= cfg_.acceptable_tol && UnscaledViolation() <= cfg_.acceptable_tol) {
            status = SolveStatus::kAcceptable;
          } else if (UnscaledViolation() > cfg_.constr_tol) {
            status = SolveStatus::kInfeasible;
            message = "line search failed to reduce infeasibility";
          } else {
            status = SolveStatus::kNumericalFailure;
            message = "line search failed";
          }
          break;
        }
      }

      res.x = w_.head(n_);
      res.y = y_.cwiseProduct(con_scale_) / obj_scale_;
      const Errors ef = OptimalityErrors(0.0);
      res.outcome.status = status;
      res.outcome.iterations = iter;
      res.outcome.objective = f_ / obj_scale_;
      res.outcome.stationarity = ef.stationarity;
      res.outcome.complementarity = ef.complementarity;
      res.outcome.primal_infeasibility = UnscaledViolation();
      res.outcome.message = message;
      if (status == SolveStatus::kInfeasible) res.outcome.offending_constraint = WorstConstraint();
      res.outcome.wall_time = Seconds(t_begin);
      return res;
    }

   private:
    struct Errors {
      double stationarity = 0.0;
      double primal = 0.0;
      double complementarity = 0.0;
      double Max() const { return std::max({stationarity, primal, complementarity}); }
    };

    struct Step {
      Vec dw, dy, dzl, dzu;
      double reg = 0.0;
      double quad = 0.0;  // dw^T (W + Sigma) dw
      Vec lin;            // linearised constraint residual r_c + J dx - ds
    };

    static double Seconds(std::chrono::steady_clock::time_point t0) {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    SolveResult& Fail(SolveResult& res, const Vec& x, SolveStatus st, const std::string& msg,
                      std::chrono::steady_clock::time_point t0) {
      res.x = x;
      res.y = Vec::Zero(m_);
      res.outcome.status = st;
      res.outcome.message = msg;
      res.outcome.offending_constraint = bad_index_;
      res.outcome.wall_time = Seconds(t0);
      return res;
    }

    void Setup() {
      n_ = p_.num_variables();
      m_ = p_.num_constraints();
      p_.GetBounds(xl_, xu_, gl_, gu_);
      for (int i = 0; i < m_; ++i) {
        if (gl_(i) == gu_(i)) {
          eq_rows_.push_back(i);
        } else {
          ineq_rows_.push_back(i);
        }
      }
      mi_ = static_cast<int>(ineq_rows_.size());
      nw_ = n_ + mi_;
      slack_of_row_.assign(m_, -1);
      for (int k = 0; k < mi_; ++k) slack_of_row_[ineq_rows_[k]] = k;
      obj_scale_ = 1.0;
      con_scale_ = Vec::Ones(m_);
      jac_vals_.resize(p_.JacobianPattern().nnz());
      hess_vals_.resize(p_.HessianPattern().nnz());
    }

    Vec PushInside(Vec v, const Vec& lo, const Vec& hi) const {
      for (int i = 0; i < v.size(); ++i) {
        const bool fl = std::isfinite(lo(i)), fu = std::isfinite(hi(i));
        if (fl && fu) {
          const double pl = std::min(cfg_.bound_push * std::max(1.0, std::abs(lo(i))),
                                     cfg_.bound_frac * (hi(i) - lo(i)));
          const double pu = std::min(cfg_.bound_push * std::max(1.0, std::abs(hi(i))),
                                     cfg_.bound_frac * (hi(i) - lo(i)));
          v(i) = std::clamp(v(i), lo(i) + pl, hi(i) - pu);
        } else if (fl) {
          v(i) = std::max(v(i), lo(i) + cfg_.bound_push * std::max(1.0, std::abs(lo(i))));
        } else if (fu) {
          v(i) = std::min(v(i), hi(i) - cfg_.bound_push * std::max(1.0, std::abs(hi(i))));
        }
      }
      return v;
    }

    // Evaluates scaled f, grad, c and optionally the Jacobian values at x.
    bool Evaluate(const Vec& x, bool with_jac) {
      f_ = obj_scale_ * p_.Objective(x);
      p_.Gradient(x, g_);
      g_ *= obj_scale_;
      p_.Constraints(x, c_);
      c_.array() *= con_scale_.array();
      if (!std::isfinite(f_) || !g_.allFinite()) {
        bad_index_ = -1;
        return false;
      }
      for (int i = 0; i < m_; ++i) {
        if (!std::isfinite(c_(i))) {
          bad_index_ = i;
          return false;
        }
      }
      if (with_jac) {
        p_.JacobianValues(x, jac_vals_);
        const auto& pat = p_.JacobianPattern();
        for (size_t k = 0; k < jac_vals_.size(); ++k) {
          jac_vals_[k] *= con_scale_(pat.rows[k]);
          if (!std::isfinite(jac_vals_[k])) {
            bad_index_ = pat.rows[k];
            return false;
          }
        }
      }
      return true;
    }

    bool EvaluateHessian() {
      const Vec ys = y_.cwiseProduct(con_scale_);
      p_.HessianValues(w_.head(n_), obj_scale_, ys, hess_vals_);
      for (double v : hess_vals_) {
        if (!std::isfinite(v)) return false;
      }
      return true;
    }

    bool ComputeScaling(const Vec& x) {
      if (!cfg_.gradient_scaling) return true;
      const double gmax = g_.cwiseAbs().maxCoeff();
      if (gmax > cfg_.max_gradient) obj_scale_ = cfg_.max_gradient / gmax;
      Vec rowmax = Vec::Zero(m_);
      const auto& pat = p_.JacobianPattern();
      for (size_t k = 0; k < jac_vals_.size(); ++k) {
        rowmax(pat.rows[k]) = std::max(rowmax(pat.rows[k]), std::abs(jac_vals_[k]));
      }
      for (int i = 0; i < m_; ++i) {
        if (rowmax(i) > cfg_.max_gradient) con_scale_(i) = cfg_.max_gradient / rowmax(i);
      }
      (void)x;
      return true;
    }

    void ApplyScalingToBounds() {
      gl_.array() *= con_scale_.array();
      gu_.array() *= con_scale_.array();
      wl_all_.resize(nw_);
      wu_all_.resize(nw_);
      wl_all_.head(n_) = xl_;
      wu_all_.head(n_) = xu_;
      for (int k = 0; k < mi_; ++k) {
        wl_all_(n_ + k) = gl_(ineq_rows_[k]);
        wu_all_(n_ + k) = gu_(ineq_rows_[k]);
      }
      has_l_.assign(nw_, false);
      has_u_.assign(nw_, false);
      for (int i = 0; i < nw_; ++i) {
        has_l_[i] = std::isfinite(wl_all_(i));
        has_u_[i] = std::isfinite(wu_all_(i));
      }
    }

    // r_c = c(x) - target, target = slack for inequality rows, bound for equalities.
    Vec ConstraintResidual(const Vec& c, const Vec& w) const {
      Vec r(m_);
      for (int i = 0; i < m_; ++i) {
        const int k = slack_of_row_[i];
        r(i) = c(i) - (k >= 0 ? w(n_ + k) : gl_(i));
      }
      return r;
    }

    double UnscaledViolation() const {
      double v = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double ci = c_(i) / con_scale_(i);
        const double lo = gl_(i) / con_scale_(i), hi = gu_(i) / con_scale_(i);
        v = std::max(v, std::max(lo - ci, ci - hi));
      }
      const Vec x = w_.head(n_);
      for (int i = 0; i < n_; ++i) v = std::max(v, std::max(xl_(i) - x(i), x(i) - xu_(i)));
      return std::max(v, 0.0);
    }

    int WorstConstraint() const {
      int worst = -1;
      double v = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double ci = c_(i) / con_scale_(i);
        const double viol = std::max(gl_(i) / con_scale_(i) - ci, ci - gu_(i) / con_scale_(i));
        if (viol > v) {
          v = viol;
          worst = i;
        }
      }
      return worst;
    }

    Vec JacTransposeTimes(const Vec& v) const {
      Vec out = Vec::Zero(n_);
      const auto& pat = p_.JacobianPattern();
      for (size_t k = 0; k < jac_vals_.size(); ++k) out(pat.cols[k]) += jac_vals_[k] * v(pat.rows[k]);
      return out;
    }

    Vec JacTimes(const Vec& v) const {
      Vec out = Vec::Zero(m_);
      const auto& pat = p_.JacobianPattern();
      for (size_t k = 0; k < jac_vals_.size(); ++k) out(pat.rows[k]) += jac_vals_[k] * v(pat.cols[k]);
      return out;
    }

    Errors OptimalityErrors(double mu) const {
      Errors e;
      Vec grad_l(nw_);
      grad_l.head(n_) = g_ + JacTransposeTimes(y_);
      for (int k = 0; k < mi_; ++k) grad_l(n_ + k) = -y_(ineq_rows_[k]);
      grad_l -= zl_;
      grad_l += zu_;
      double zsum = 0.0;
      int zcount = 0;
      double compl_max = 0.0;
      for (int i = 0; i < nw_; ++i) {
        if (has_l_[i]) {
          zsum += std::abs(zl_(i));
          ++zcount;
          compl_max = std::max(compl_max, std::abs((w_(i) - wl_all_(i)) * zl_(i) - mu));
        }
        if (has_u_[i]) {
          zsum += std::abs(zu_(i));
          ++zcount;
          compl_max = std::max(compl_max, std::abs((wu_all_(i) - w_(i)) * zu_(i) - mu));
        }
      }
      const double smax = 100.0;
      const double sd = std::max(smax, (y_.lpNorm<1>() + zsum) / std::max(1, m_ + zcount)) / smax;
      const double sc = std::max(smax, zsum / std::max(1, zcount)) / smax;
      e.stationarity = (nw_ > 0 ? grad_l.lpNorm<Eigen::Infinity>() : 0.0) / sd;
      e.primal = m_ > 0 ? ConstraintResidual(c_, w_).lpNorm<Eigen::Infinity>() : 0.0;
      e.complementarity = compl_max / sc;
      return e;
    }

    void BuildKktPattern() {
      const int dim = n_ + m_;
      std::vector<Eigen::Triplet<double>> trips;
      const auto& hp = p_.HessianPattern();
      const auto& jp = p_.JacobianPattern();
      trips.reserve(hp.nnz() + jp.nnz() + dim);
      for (size_t k = 0; k < hp.nnz(); ++k) {
        const int r = std::max(hp.rows[k], hp.cols[k]), c = std::min(hp.rows[k], hp.cols[k]);
        trips.emplace_back(r, c, 1.0);
      }
      for (size_t k = 0; k < jp.nnz(); ++k) trips.emplace_back(n_ + jp.rows[k], jp.cols[k], 1.0);
      for (int i = 0; i < dim; ++i) trips.emplace_back(i, i, 1.0);
      kkt_.resize(dim, dim);
      kkt_.setFromTriplets(trips.begin(), trips.end());
      kkt_.makeCompressed();
      auto pos = [&](int r, int c) {
        const int* inner = kkt_.innerIndexPtr();
        const int* b = inner + kkt_.outerIndexPtr()[c];
        const int* e = inner + kkt_.outerIndexPtr()[c + 1];
        const int* it = std::lower_bound(b, e, r);
        return static_cast<int>(it - inner);
      };
      hess_pos_.resize(hp.nnz());
      for (size_t k = 0; k < hp.nnz(); ++k) {
        hess_pos_[k] = pos(std::max(hp.rows[k], hp.cols[k]), std::min(hp.rows[k], hp.cols[k]));
      }
      jac_pos_.resize(jp.nnz());
      for (size_t k = 0; k < jp.nnz(); ++k) jac_pos_[k] = pos(n_ + jp.rows[k], jp.cols[k]);
      diag_pos_.resize(dim);
      for (int i = 0; i < dim; ++i) diag_pos_[i] = pos(i, i);
      ldlt_.analyzePattern(kkt_);
    }

    // Fills the KKT values for regularisation reg; diag_extra holds Sigma_x
    // and the negated constraint-block diagonal.
    void FillKkt(const Vec& sigma_x, const Vec& dvec, double reg) {
      double* v = kkt_.valuePtr();
      std::fill(v, v + kkt_.nonZeros(), 0.0);
      for (size_t k = 0; k < hess_vals_.size(); ++k) v[hess_pos_[k]] += hess_vals_[k];
      for (size_t k = 0; k < jac_vals_.size(); ++k) v[jac_pos_[k]] += jac_vals_[k];
      for (int i = 0; i < n_; ++i) v[diag_pos_[i]] += sigma_x(i) + reg;
      for (int i = 0; i < m_; ++i) v[diag_pos_[n_ + i]] -= dvec(i);
    }

    bool FactorWithInertia() {
      ldlt_.factorize(kkt_);
      if (ldlt_.info() != Eigen::Success) return false;
      const Vec& d = ldlt_.vectorD();
      int pos = 0, neg = 0;
      for (int i = 0; i < d.size(); ++i) {
        if (!std::isfinite(d(i))) return false;
        if (d(i) > 1e-20) {
          ++pos;
        } else if (d(i) < -1e-20) {
          ++neg;
        }
      }
      return pos == n_ && neg == m_;
    }

    bool ComputeStep(double last_reg, double reg_floor, Step& st) {
      const double reg_c = 1e-8;
      // Barrier Hessian terms.
      Vec sigma(nw_);
      for (int i = 0; i < nw_; ++i) {
        double s = 0.0;
        if (has_l_[i]) s += zl_(i) / (w_(i) - wl_all_(i));
        if (has_u_[i]) s += zu_(i) / (wu_all_(i) - w_(i));
        sigma(i) = s;
      }
      Vec gphi = BarrierGradient(w_);
      Vec rx = gphi.head(n_) + JacTransposeTimes(y_);
      Vec rs(mi_);
      for (int k = 0; k < mi_; ++k) rs(k) = gphi(n_ + k) - y_(ineq_rows_[k]);
      const Vec rc = ConstraintResidual(c_, w_);

      double reg = reg_floor;
      bool ok = false;
      Vec dvec(m_), dvec0(m_);
      for (int tries = 0; tries < 60; ++tries) {
        for (int i = 0; i < m_; ++i) {
          const int k = slack_of_row_[i];
          dvec0(i) = k >= 0 ? 1.0 / (sigma(n_ + k) + reg) : 0.0;
          dvec(i) = dvec0(i) + reg_c;
        }
        FillKkt(sigma.head(n_), dvec, reg);
        if (FactorWithInertia()) {
          ok = true;
          break;
        }
        if (reg == 0.0) {
          reg = last_reg == 0.0 ? 1e-4 : std::max(1e-20, last_reg / 3.0);
        } else {
          reg *= last_reg == 0.0 ? 100.0 : 8.0;
        }
        if (reg > 1e40) break;
      }
      if (!ok) return false;
      st.reg = reg;
      sigma_ = sigma;
      reg_ = reg;

      Vec rhs(n_ + m_);
      rhs.head(n_) = -rx;
      for (int i = 0; i < m_; ++i) {
        const int k = slack_of_row_[i];
        rhs(n_ + i) = -(rc(i) + (k >= 0 ? rs(k) / (sigma(n_ + k) + reg) : 0.0));
      }
      const Vec sol = SolveKkt(rhs);
      const Vec dx = sol.head(n_);
      st.dy = sol.tail(m_);
      st.dw.resize(nw_);
      st.dw.head(n_) = dx;
      for (int k = 0; k < mi_; ++k) {
        st.dw(n_ + k) = (st.dy(ineq_rows_[k]) - rs(k)) / (sigma(n_ + k) + reg);
      }
      st.dzl = Vec::Zero(nw_);
      st.dzu = Vec::Zero(nw_);
      for (int i = 0; i < nw_; ++i) {
        if (has_l_[i]) {
          const double gap = w_(i) - wl_all_(i);
          st.dzl(i) = mu_ / gap - zl_(i) - zl_(i) / gap * st.dw(i);
        }
        if (has_u_[i]) {
          const double gap = wu_all_(i) - w_(i);
          st.dzu(i) = mu_ / gap - zu_(i) + zu_(i) / gap * st.dw(i);
        }
      }
      // Curvature along the step (top-left block of the KKT matrix).
      Vec ext = Vec::Zero(n_ + m_);
      ext.head(n_) = dx;
      const Vec kx = kkt_.selfadjointView<Eigen::Lower>() * ext;
      st.quad = dx.dot(kx.head(n_));
      for (int k = 0; k < mi_; ++k) st.quad += (sigma(n_ + k) + reg) * st.dw(n_ + k) * st.dw(n_ + k);
      st.lin = rc + JacTimes(dx);
      for (int k = 0; k < mi_; ++k) st.lin(ineq_rows_[k]) -= st.dw(n_ + k);
      return true;
    }

    // Solves with the current factorisation, refining against the system
    // without the constraint-block regularisation.
    Vec SolveKkt(const Vec& rhs) const {
      const double reg_c = 1e-8;
      Vec sol = ldlt_.solve(rhs);
      for (int it = 0; it < 5; ++it) {
        Vec ksol = kkt_.selfadjointView<Eigen::Lower>() * sol;
        ksol.tail(m_) += reg_c * sol.tail(m_);
        const Vec r = rhs - ksol;
        if (r.lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>())) break;
        sol += ldlt_.solve(r);
      }
      return sol;
    }

    // Second-order correction: re-linearises the constraints at the rejected
    // trial point to counter the curvature that made the full step fail.
    Vec CorrectionStep(const Vec& dw, const Vec& r_trial) const {
      Vec rhs = Vec::Zero(n_ + m_);
      rhs.tail(m_) = -r_trial;
      const Vec sol = SolveKkt(rhs);
      Vec out = dw;
      out.head(n_) += sol.head(n_);
      for (int k = 0; k < mi_; ++k) out(n_ + k) += sol(n_ + ineq_rows_[k]) / (sigma_(n_ + k) + reg_);
      return out;
    }

    double MaxStep(const Vec& dw, double tau) const {
      double amax = 1.0;
      for (int i = 0; i < nw_; ++i) {
        if (has_l_[i] && dw(i) < 0.0) amax = std::min(amax, -tau * (w_(i) - wl_all_(i)) / dw(i));
        if (has_u_[i] && dw(i) > 0.0) amax = std::min(amax, tau * (wu_all_(i) - w_(i)) / dw(i));
      }
      return amax;
    }

    Vec BarrierGradient(const Vec& w) const {
      Vec g(nw_);
      g.head(n_) = g_;
      g.tail(mi_).setZero();
      for (int i = 0; i < nw_; ++i) {
        if (has_l_[i]) g(i) -= mu_ / (w(i) - wl_all_(i));
        if (has_u_[i]) g(i) += mu_ / (wu_all_(i) - w(i));
      }
      return g;
    }

    double BarrierValue(double f, const Vec& w) const {
      double phi = f;
      for (int i = 0; i < nw_; ++i) {
        if (has_l_[i]) phi -= mu_ * std::log(w(i) - wl_all_(i));
        if (has_u_[i]) phi -= mu_ * std::log(wu_all_(i) - w(i));
      }
      return phi;
    }

    bool LineSearch(const Step& st, IterationRecord& rec) {
      const double tau = std::max(0.99, 1.0 - mu_);
      const double amax = MaxStep(st.dw, tau);
      double az = 1.0;
      for (int i = 0; i < nw_; ++i) {
        if (has_l_[i] && st.dzl(i) < 0.0) az = std::min(az, -tau * zl_(i) / st.dzl(i));
        if (has_u_[i] && st.dzu(i) < 0.0) az = std::min(az, -tau * zu_(i) / st.dzu(i));
      }

      const Vec rc = ConstraintResidual(c_, w_);
      const double theta = rc.lpNorm<1>();
      const Vec gphi = BarrierGradient(w_);
      const double dphi = gphi.dot(st.dw);
      const double lin = st.lin.lpNorm<1>();
      if (theta > 1e-14 && theta - lin > 0.0) {
        const double nu_trial = (dphi + 0.5 * std::max(0.0, st.quad)) / (0.9 * (theta - lin));
        if (nu_trial > nu_) nu_ = std::max(nu_trial, 1.5 * nu_);
      }
      double slope = dphi + nu_ * (lin - theta);
      const double merit0 = BarrierValue(f_, w_) + nu_ * theta;
      if (!(slope < 0.0)) slope = -1e-12 * std::max(1.0, std::abs(merit0));

      // Returns the merit at w + dw, or +inf when an evaluation fails.
      auto merit_at = [&](const Vec& wt, Vec* r_out) {
        const Vec xt = wt.head(n_);
        const double ft = obj_scale_ * p_.Objective(xt);
        Vec ct;
        p_.Constraints(xt, ct);
        ct.array() *= con_scale_.array();
        if (!std::isfinite(ft) || !ct.allFinite()) return kInf;
        const Vec rt = ConstraintResidual(ct, wt);
        if (r_out != nullptr) *r_out = rt;
        const double m = BarrierValue(ft, wt) + nu_ * rt.lpNorm<1>();
        return std::isfinite(m) ? m : kInf;
      };
      auto accept = [&](const Vec& wt, double alpha, double merit_t) {
        w_ = wt;
        y_ += alpha * st.dy;
        zl_ += az * st.dzl;
        zu_ += az * st.dzu;
        SafeguardMultipliers();
        rec.step = alpha;
        rec.merit_before = merit0;
        rec.merit_after = merit_t;
      };

      double alpha = amax;
      for (int trial = 0; trial < 50 && alpha > 1e-14; ++trial, alpha *= 0.5) {
        const Vec wt = w_ + alpha * st.dw;
        Vec rt;
        const double merit_t = merit_at(wt, &rt);
        if (merit_t <= merit0 + 1e-4 * alpha * slope) {
          accept(wt, alpha, merit_t);
          return true;
        }
        if (trial == 0 && std::isfinite(merit_t) && rt.lpNorm<1>() >= theta) {
          Vec dw_soc = st.dw;
          Vec r_soc = rt;
          for (int k = 0; k < 3; ++k) {
            dw_soc = CorrectionStep(dw_soc, r_soc);
            const double a_soc = MaxStep(dw_soc, tau);
            const Vec ws = w_ + a_soc * dw_soc;
            const double merit_s = merit_at(ws, &r_soc);
            if (merit_s <= merit0 + 1e-4 * a_soc * slope) {
              accept(ws, a_soc, merit_s);
              return true;
            }
            if (!std::isfinite(merit_s)) break;
          }
        }
      }
      return false;
    }

    void SafeguardMultipliers() {
      const double kappa = 1e10;
      for (int i = 0; i < nw_; ++i) {
        if (has_l_[i]) {
          const double gap = w_(i) - wl_all_(i);
          zl_(i) = std::clamp(zl_(i), mu_ / (kappa * gap), kappa * mu_ / gap);
        }
        if (has_u_[i]) {
          const double gap = wu_all_(i) - w_(i);
          zu_(i) = std::clamp(zu_(i), mu_ / (kappa * gap), kappa * mu_ / gap);
        }
      }
    }

    const NlpProblem& p_;
    const SolverConfig& cfg_;
    int n_ = 0, m_ = 0, mi_ = 0, nw_ = 0;
    Vec xl_, xu_, gl_, gu_;
    Vec wl_all_, wu_all_;
    std::vector<bool> has_l_, has_u_;
    std::vector<int> eq_rows_, ineq_rows_, slack_of_row_;
    double obj_scale_ = 1.0;
    Vec con_scale_;
    double f_ = 0.0;
    double damping_ = 0.0;
    Vec g_, c_;
    std::vector<double> jac_vals_, hess_vals_;
    Vec w_, y_, zl_, zu_;
    double mu_ = 0.1, nu_ = 1.0;
    SpMat kkt_;
    std::vector<int> hess_pos_, jac_pos_, diag_pos_;
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
    Vec sigma_;
    double reg_ = 0.0;
    int bad_index_ = -1;
  };
};

}  // namespace lanefree

#endif  // LANEFREE_SOLVER_HPP_
