#pragma once

// Primal-dual interior-point method for QcqpProblem.
//
// Fixed variables (lo == hi) are eliminated. Every remaining row becomes
// c(x) = 0 (equalities) or d(x) - s = 0 with lo <= s <= hi (inequalities),
// so the iterate y = (x_free, s) only carries simple bounds. Each iteration
// solves the regularized primal-dual system
//
//   [ W + Sigma + dw I    A^T  ] [ dy ]     [ grad phi_mu + A^T lambda ]
//   [ A                -dc I   ] [ dl ] = - [ h(y)                     ]
//
// with a pivoted symmetric indefinite factorization that reports the
// inertia. The Hessian block is shifted by dw until the inertia is (n, m, 0).
// Steps are globalized by a filter line search with a second-order
// correction, the barrier parameter follows the monotone Fiacco-McCormick
// rule.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>

#include "sctep/kkt_factor.hpp"
#include "sctep/qcqp.hpp"

namespace sctep {

enum class SolveStatus { Optimal, IterationLimit, Infeasible, NumericalFailure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal:
      return "Optimal";
    case SolveStatus::IterationLimit:
      return "IterationLimit";
    case SolveStatus::Infeasible:
      return "Infeasible";
    case SolveStatus::NumericalFailure:
      return "NumericalFailure";
  }
  return "Unknown";
}

inline std::optional<SolveStatus> solve_status_from_string(const std::string& s) {
  for (auto st : {SolveStatus::Optimal, SolveStatus::IterationLimit,
                  SolveStatus::Infeasible, SolveStatus::NumericalFailure}) {
    if (s == to_string(st)) return st;
  }
  return std::nullopt;
}

/// Multipliers of the scaled problem (objective multiplied by
/// SolveResult::objective_scale). Bound multipliers are nonnegative.
struct Duals {
  std::vector<double> rows;
  std::vector<double> var_lower;
  std::vector<double> var_upper;
  std::vector<double> row_lower;
  std::vector<double> row_upper;
};

struct KktResiduals {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
};

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;
  double mu = 0.0;
  double inf_pr = 0.0;
  double inf_du = 0.0;
  double compl_ = 0.0;
  double alpha_pr = 0.0;
  double alpha_du = 0.0;
  double delta_w = 0.0;
  int ls_trials = 0;
};

struct InitialPoint {
  std::vector<double> x;
  std::optional<Duals> duals;
};

struct SolverSettings {
  double kkt_tol = 1e-6;
  double feas_tol = 1e-6;
  int max_iter = 500;

  // Barrier schedule.
  double mu_init = 0.1;
  double mu_init_warm = 1e-4;
  double kappa_mu = 0.2;
  double theta_mu = 1.5;
  double kappa_eps = 10.0;
  double tau_min = 0.99;

  // Interiority margin for the starting point.
  double bound_push = 1e-2;
  double bound_push_warm = 1e-4;
  double bound_relax = 1e-8;

  // Inertia correction.
  double delta_w_init = 1e-8;
  double delta_w_growth = 10.0;
  double delta_w_max = 1e10;
  double delta_c = 1e-9;

  // Objective is scaled so that its largest initial gradient entry is at
  // most this value.
  double max_scaled_gradient = 100.0;

  // Feasibility restoration when the line search fails.
  bool restoration = true;
  int max_restorations = 5;
  double restoration_penalty = 1000.0;

  bool keep_trace = true;
  std::function<void(const IterationRecord&)> on_iteration;
};

struct SolveResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  double objective = 0.0;
  std::vector<double> x;
  Duals duals;
  KktResiduals residuals;
  int iterations = 0;
  double wall_seconds = 0.0;
  double objective_scale = 1.0;
  std::string message;
  std::vector<IterationRecord> trace;

  [[nodiscard]] bool ok() const { return status == SolveStatus::Optimal; }
};

/// Recomputes KKT residuals of `x` and `duals` against the original problem
/// with the objective multiplied by `scale`. Variables with lo == hi are
/// parameters and excluded from stationarity.
inline KktResiduals kkt_residuals(const QcqpProblem& p,
                                  std::span<const double> x,
                                  const Duals& d, double scale) {
  KktResiduals r;
  const std::size_t n = p.num_vars();
  std::vector<double> grad(n, 0.0);
  p.objective.accumulate_gradient(x, scale, grad);
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    if (d.rows[i] != 0.0) p.rows[i].fn.accumulate_gradient(x, d.rows[i], grad);
  }
  for (std::size_t v = 0; v < n; ++v) {
    const bool fixed = p.x_hi[v] - p.x_lo[v] <= 0.0;
    if (!fixed) {
      r.stationarity = std::max(
          r.stationarity, std::abs(grad[v] - d.var_lower[v] + d.var_upper[v]));
      if (std::isfinite(p.x_lo[v])) {
        r.complementarity = std::max(
            r.complementarity, d.var_lower[v] * std::max(0.0, x[v] - p.x_lo[v]));
      }
      if (std::isfinite(p.x_hi[v])) {
        r.complementarity = std::max(
            r.complementarity, d.var_upper[v] * std::max(0.0, p.x_hi[v] - x[v]));
      }
    }
    r.feasibility = std::max({r.feasibility, p.x_lo[v] - x[v], x[v] - p.x_hi[v]});
  }
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    const auto& row = p.rows[i];
    const double g = row.fn.value(x);
    r.feasibility = std::max({r.feasibility, row.lo - g, g - row.hi});
    if (!row.is_equality()) {
      r.stationarity = std::max(
          r.stationarity, std::abs(-d.rows[i] - d.row_lower[i] + d.row_upper[i]));
      if (std::isfinite(row.lo)) {
        r.complementarity = std::max(
            r.complementarity, d.row_lower[i] * std::max(0.0, g - row.lo));
      }
      if (std::isfinite(row.hi)) {
        r.complementarity = std::max(
            r.complementarity, d.row_upper[i] * std::max(0.0, row.hi - g));
      }
    }
  }
  return r;
}

namespace detail {

SolveResult solve_impl(const QcqpProblem& problem, const SolverSettings& settings,
                       const std::optional<InitialPoint>& init);

class InteriorPoint {
 public:
  using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
  using Vec = Eigen::VectorXd;

  InteriorPoint(const QcqpProblem& p, const SolverSettings& s) : p_(p), set_(s) {}

  SolveResult run(const std::optional<InitialPoint>& init) {
    const auto t0 = std::chrono::steady_clock::now();
    SolveResult res;
    if (!setup(res)) {
      finish(res, t0);
      return res;
    }
    initialize(init);
    initialized_ = true;
    iterate(res);
    finish(res, t0);
    return res;
  }

 private:
  // ---- problem reduction ------------------------------------------------

  struct RowPlan {
    std::size_t orig = 0;
    bool equality = true;
    std::size_t slack = 0;  // index into y when inequality
    double rhs = 0.0;       // equality target
    std::vector<int> lin_pos;                 // J value index per linear term
    std::vector<std::pair<int, int>> quad_jpos;  // J value index of (i, j)
    std::vector<int> quad_kpos;               // K value index, -1 if none
  };

  bool setup(SolveResult& res) {
    const std::size_t n = p_.num_vars();
    x_.assign(n, 0.0);
    free_pos_.assign(n, -1);
    for (std::size_t v = 0; v < n; ++v) {
      const double lo = p_.x_lo[v];
      const double hi = p_.x_hi[v];
      if (lo > hi) {
        res.status = SolveStatus::Infeasible;
        res.message = "variable " + std::to_string(v) + " has lo > hi";
        return false;
      }
      if (hi - lo <= 0.0) {
        x_[v] = lo;
        continue;
      }
      free_pos_[v] = static_cast<int>(free_vars_.size());
      free_vars_.push_back(v);
    }
    nf_ = free_vars_.size();

    // Rows touching no free variable are constants; check and drop them.
    for (std::size_t r = 0; r < p_.rows.size(); ++r) {
      const auto& row = p_.rows[r];
      bool touches = false;
      for (const auto& t : row.fn.linear) touches |= free_pos_[t.var] >= 0;
      for (const auto& t : row.fn.quad) {
        touches |= free_pos_[t.i] >= 0 || free_pos_[t.j] >= 0;
      }
      if (!touches) {
        const double g = row.fn.value(x_);
        const double tol = set_.feas_tol;
        if (g < row.lo - tol || g > row.hi + tol) {
          res.status = SolveStatus::Infeasible;
          res.message = "row " + std::to_string(r) + " is violated by fixed variables";
          return false;
        }
        continue;
      }
      RowPlan plan;
      plan.orig = r;
      plan.equality = row.is_equality();
      plan.rhs = row.lo;
      rows_.push_back(std::move(plan));
    }
    m_ = rows_.size();
    std::size_t ns = 0;
    for (auto& rp : rows_) {
      if (!rp.equality) rp.slack = nf_ + ns++;
    }
    ny_ = nf_ + ns;

    // Bounds on y, slightly relaxed.
    ylo_.assign(ny_, -kInf);
    yhi_.assign(ny_, kInf);
    auto relax_lo = [&](double v) {
      return std::isfinite(v) ? v - set_.bound_relax * std::max(1.0, std::abs(v)) : v;
    };
    auto relax_hi = [&](double v) {
      return std::isfinite(v) ? v + set_.bound_relax * std::max(1.0, std::abs(v)) : v;
    };
    for (std::size_t j = 0; j < nf_; ++j) {
      ylo_[j] = relax_lo(p_.x_lo[free_vars_[j]]);
      yhi_[j] = relax_hi(p_.x_hi[free_vars_[j]]);
    }
    for (const auto& rp : rows_) {
      if (rp.equality) continue;
      ylo_[rp.slack] = relax_lo(p_.rows[rp.orig].lo);
      yhi_[rp.slack] = relax_hi(p_.rows[rp.orig].hi);
    }

    build_pattern();
    return true;
  }

  // ---- KKT pattern --------------------------------------------------------

  void build_pattern() {
    const int dim = static_cast<int>(ny_ + m_);
    std::vector<Eigen::Triplet<double, int>> trip;
    auto add = [&](int r, int c) {
      if (r < c) std::swap(r, c);
      trip.emplace_back(r, c, 0.0);
    };
    for (int i = 0; i < dim; ++i) add(i, i);

    auto hess_terms = [&](const QuadraticFunction& fn) {
      for (const auto& t : fn.quad) {
        const int a = free_pos_[t.i];
        const int b = free_pos_[t.j];
        if (a >= 0 && b >= 0) add(a, b);
      }
    };
    hess_terms(p_.objective);

    // Jacobian in CSR with one slot per (row, free column).
    jrow_ptr_.assign(m_ + 1, 0);
    jcol_.clear();
    for (std::size_t r = 0; r < m_; ++r) {
      auto& rp = rows_[r];
      const auto& fn = p_.rows[rp.orig].fn;
      hess_terms(fn);
      std::vector<int> cols;
      for (const auto& t : fn.linear) {
        if (free_pos_[t.var] >= 0) cols.push_back(free_pos_[t.var]);
      }
      for (const auto& t : fn.quad) {
        if (free_pos_[t.i] >= 0) cols.push_back(free_pos_[t.i]);
        if (free_pos_[t.j] >= 0) cols.push_back(free_pos_[t.j]);
      }
      std::sort(cols.begin(), cols.end());
      cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
      const std::size_t start = jcol_.size();
      jcol_.insert(jcol_.end(), cols.begin(), cols.end());
      jrow_ptr_[r + 1] = jcol_.size();
      auto pos_of = [&](std::size_t var) -> int {
        const int c = free_pos_[var];
        if (c < 0) return -1;
        auto it = std::lower_bound(jcol_.begin() + start, jcol_.end(), c);
        return static_cast<int>(it - jcol_.begin());
      };
      for (const auto& t : fn.linear) rp.lin_pos.push_back(pos_of(t.var));
      for (const auto& t : fn.quad) rp.quad_jpos.emplace_back(pos_of(t.i), pos_of(t.j));
      const int krow = static_cast<int>(ny_ + r);
      for (auto c : cols) add(krow, c);
      if (!rp.equality) add(krow, static_cast<int>(rp.slack));
    }
    jval_.assign(jcol_.size(), 0.0);

    K_.resize(dim, dim);
    K_.setFromTriplets(trip.begin(), trip.end());
    K_.makeCompressed();

    auto kidx = [&](int r, int c) -> int {
      if (r < c) std::swap(r, c);
      const int* inner = K_.innerIndexPtr();
      const int b = K_.outerIndexPtr()[c];
      const int e = K_.outerIndexPtr()[c + 1];
      const int* it = std::lower_bound(inner + b, inner + e, r);
      return static_cast<int>(it - inner);
    };
    diag_pos_.resize(dim);
    for (int i = 0; i < dim; ++i) diag_pos_[i] = kidx(i, i);
    auto quad_kpos = [&](const QuadraticFunction& fn, std::vector<int>& out) {
      out.clear();
      for (const auto& t : fn.quad) {
        const int a = free_pos_[t.i];
        const int b = free_pos_[t.j];
        out.push_back(a >= 0 && b >= 0 ? kidx(a, b) : -1);
      }
    };
    quad_kpos(p_.objective, obj_kpos_);
    kj_pos_.resize(jcol_.size());
    slack_kpos_.assign(m_, -1);
    for (std::size_t r = 0; r < m_; ++r) {
      quad_kpos(p_.rows[rows_[r].orig].fn, rows_[r].quad_kpos);
      const int krow = static_cast<int>(ny_ + r);
      for (std::size_t q = jrow_ptr_[r]; q < jrow_ptr_[r + 1]; ++q) {
        kj_pos_[q] = kidx(krow, jcol_[q]);
      }
      if (!rows_[r].equality) slack_kpos_[r] = kidx(krow, static_cast<int>(rows_[r].slack));
    }
    std::vector<bool> border(static_cast<std::size_t>(dim), false);
    for (auto v : p_.coupling_vars) {
      if (v < free_pos_.size() && free_pos_[v] >= 0) border[free_pos_[v]] = true;
    }
    kkt_.analyze(K_, partition_by_components(K_, border));
  }

  // ---- evaluation ---------------------------------------------------------

  void scatter(const Vec& y) {
    for (std::size_t j = 0; j < nf_; ++j) x_[free_vars_[j]] = y[j];
  }

  /// h(y) for the iterate currently scattered into x_.
  Vec constraint_values(const Vec& y) const {
    Vec h(m_);
    for (std::size_t r = 0; r < m_; ++r) {
      const auto& rp = rows_[r];
      const double g = p_.rows[rp.orig].fn.value(x_);
      h[r] = rp.equality ? g - rp.rhs : g - y[rp.slack];
    }
    return h;
  }

  void eval_jacobian() {
    std::fill(jval_.begin(), jval_.end(), 0.0);
    for (std::size_t r = 0; r < m_; ++r) {
      const auto& rp = rows_[r];
      const auto& fn = p_.rows[rp.orig].fn;
      for (std::size_t t = 0; t < fn.linear.size(); ++t) {
        if (rp.lin_pos[t] >= 0) jval_[rp.lin_pos[t]] += fn.linear[t].coef;
      }
      for (std::size_t t = 0; t < fn.quad.size(); ++t) {
        const auto& q = fn.quad[t];
        const auto [pi, pj] = rp.quad_jpos[t];
        if (q.i == q.j) {
          if (pi >= 0) jval_[pi] += 2.0 * q.coef * x_[q.i];
        } else {
          if (pi >= 0) jval_[pi] += q.coef * x_[q.j];
          if (pj >= 0) jval_[pj] += q.coef * x_[q.i];
        }
      }
    }
  }

  /// Scaled objective gradient on y (slack entries are zero).
  Vec objective_gradient() const {
    std::vector<double> g(p_.num_vars(), 0.0);
    p_.objective.accumulate_gradient(x_, scale_, g);
    Vec out = Vec::Zero(static_cast<Eigen::Index>(ny_));
    for (std::size_t j = 0; j < nf_; ++j) out[j] = g[free_vars_[j]];
    return out;
  }

  /// A^T v on y.
  Vec jacobian_transpose_times(const Vec& v) const {
    Vec out = Vec::Zero(static_cast<Eigen::Index>(ny_));
    for (std::size_t r = 0; r < m_; ++r) {
      for (std::size_t q = jrow_ptr_[r]; q < jrow_ptr_[r + 1]; ++q) {
        out[jcol_[q]] += jval_[q] * v[r];
      }
      if (!rows_[r].equality) out[rows_[r].slack] -= v[r];
    }
    return out;
  }

  /// A v.
  Vec jacobian_times(const Vec& v) const {
    Vec out(static_cast<Eigen::Index>(m_));
    for (std::size_t r = 0; r < m_; ++r) {
      double acc = 0.0;
      for (std::size_t q = jrow_ptr_[r]; q < jrow_ptr_[r + 1]; ++q) {
        acc += jval_[q] * v[jcol_[q]];
      }
      if (!rows_[r].equality) acc -= v[rows_[r].slack];
      out[r] = acc;
    }
    return out;
  }

  [[nodiscard]] bool has_lo(std::size_t j) const { return std::isfinite(ylo_[j]); }
  [[nodiscard]] bool has_hi(std::size_t j) const { return std::isfinite(yhi_[j]); }

  /// Barrier objective, including linear damping of one-sided bounds.
  double barrier_value(const Vec& y, double fval) const {
    double phi = scale_ * fval;
    for (std::size_t j = 0; j < ny_; ++j) {
      const bool lo = has_lo(j);
      const bool hi = has_hi(j);
      if (lo) phi -= mu_ * std::log(y[j] - ylo_[j]);
      if (hi) phi -= mu_ * std::log(yhi_[j] - y[j]);
      if (lo && !hi) phi += kDamping * mu_ * (y[j] - ylo_[j]);
      if (hi && !lo) phi += kDamping * mu_ * (yhi_[j] - y[j]);
    }
    return phi;
  }

  Vec barrier_gradient(const Vec& y, const Vec& grad_f) const {
    Vec g = grad_f;
    for (std::size_t j = 0; j < ny_; ++j) {
      const bool lo = has_lo(j);
      const bool hi = has_hi(j);
      if (lo) g[j] -= mu_ / (y[j] - ylo_[j]);
      if (hi) g[j] += mu_ / (yhi_[j] - y[j]);
      if (lo && !hi) g[j] += kDamping * mu_;
      if (hi && !lo) g[j] -= kDamping * mu_;
    }
    return g;
  }

  // ---- initialization -----------------------------------------------------

  void initialize(const std::optional<InitialPoint>& init) {
    // A primal guess alone keeps the cold barrier schedule; multipliers
    // switch to the warm one.
    const bool warm = init.has_value() && init->duals.has_value();
    const double push = warm ? set_.bound_push_warm : set_.bound_push;
    mu_ = warm ? set_.mu_init_warm : set_.mu_init;

    std::vector<double> x0 = init ? init->x : std::vector<double>(p_.num_vars(), 0.0);
    x0.resize(p_.num_vars(), 0.0);
    y_ = Vec::Zero(static_cast<Eigen::Index>(ny_));
    for (std::size_t j = 0; j < nf_; ++j) y_[j] = x0[free_vars_[j]];
    auto push_inside = [&](std::size_t j) {
      const double lo = ylo_[j];
      const double hi = yhi_[j];
      double pl = std::isfinite(lo) ? push * std::max(1.0, std::abs(lo)) : 0.0;
      double pu = std::isfinite(hi) ? push * std::max(1.0, std::abs(hi)) : 0.0;
      if (std::isfinite(lo) && std::isfinite(hi)) {
        pl = std::min(pl, push * (hi - lo));
        pu = std::min(pu, push * (hi - lo));
      }
      if (std::isfinite(lo)) y_[j] = std::max(y_[j], lo + pl);
      if (std::isfinite(hi)) y_[j] = std::min(y_[j], hi - pu);
    };
    for (std::size_t j = 0; j < nf_; ++j) push_inside(j);
    scatter(y_);

    // Objective scaling from the initial gradient.
    {
      std::vector<double> g(p_.num_vars(), 0.0);
      p_.objective.accumulate_gradient(x_, 1.0, g);
      double gmax = 0.0;
      for (std::size_t j = 0; j < nf_; ++j) gmax = std::max(gmax, std::abs(g[free_vars_[j]]));
      scale_ = gmax > set_.max_scaled_gradient ? set_.max_scaled_gradient / gmax : 1.0;
    }

    for (const auto& rp : rows_) {
      if (rp.equality) continue;
      y_[rp.slack] = p_.rows[rp.orig].fn.value(x_);
      push_inside(rp.slack);
    }

    lambda_ = Vec::Zero(static_cast<Eigen::Index>(m_));
    zl_ = Vec::Zero(static_cast<Eigen::Index>(ny_));
    zu_ = Vec::Zero(static_cast<Eigen::Index>(ny_));
    for (std::size_t j = 0; j < ny_; ++j) {
      if (has_lo(j)) zl_[j] = 1.0;
      if (has_hi(j)) zu_[j] = 1.0;
    }
    if (warm) {
      const auto& d = *init->duals;
      const bool rows_ok = d.rows.size() == p_.num_rows() &&
                           d.row_lower.size() == p_.num_rows() &&
                           d.row_upper.size() == p_.num_rows();
      const bool vars_ok = d.var_lower.size() == p_.num_vars() &&
                           d.var_upper.size() == p_.num_vars();
      const double zmin = mu_;
      if (rows_ok) {
        for (std::size_t r = 0; r < m_; ++r) {
          const auto& rp = rows_[r];
          lambda_[r] = d.rows[rp.orig];
          if (!rp.equality) {
            if (has_lo(rp.slack)) zl_[rp.slack] = std::max(zmin, d.row_lower[rp.orig]);
            if (has_hi(rp.slack)) zu_[rp.slack] = std::max(zmin, d.row_upper[rp.orig]);
          }
        }
      }
      if (vars_ok) {
        for (std::size_t j = 0; j < nf_; ++j) {
          if (has_lo(j)) zl_[j] = std::max(zmin, d.var_lower[free_vars_[j]]);
          if (has_hi(j)) zu_[j] = std::max(zmin, d.var_upper[free_vars_[j]]);
        }
      }
    }
  }

  // ---- linear algebra -----------------------------------------------------

  void assemble(const Vec& sigma, double dw, double dc) {
    double* val = K_.valuePtr();
    std::fill(val, val + K_.nonZeros(), 0.0);
    auto add_hess = [&](const QuadraticFunction& fn, const std::vector<int>& kpos,
                        double w) {
      if (w == 0.0) return;
      for (std::size_t t = 0; t < fn.quad.size(); ++t) {
        if (kpos[t] < 0) continue;
        const auto& q = fn.quad[t];
        val[kpos[t]] += (q.i == q.j ? 2.0 : 1.0) * q.coef * w;
      }
    };
    add_hess(p_.objective, obj_kpos_, scale_);
    for (std::size_t r = 0; r < m_; ++r) {
      add_hess(p_.rows[rows_[r].orig].fn, rows_[r].quad_kpos, lambda_[r]);
    }
    for (std::size_t j = 0; j < ny_; ++j) val[diag_pos_[j]] += sigma[j] + dw;
    for (std::size_t q = 0; q < jval_.size(); ++q) val[kj_pos_[q]] += jval_[q];
    for (std::size_t r = 0; r < m_; ++r) {
      if (slack_kpos_[r] >= 0) val[slack_kpos_[r]] = -1.0;
      val[diag_pos_[ny_ + r]] = -dc;
    }
  }

  enum class FactorOutcome { Ok, WrongInertia, Singular };

  FactorOutcome factor() {
    if (!kkt_.factorize(K_)) return FactorOutcome::Singular;
    const auto& in = kkt_.inertia();
    return in.positive == ny_ && in.negative == m_ ? FactorOutcome::Ok
                                                   : FactorOutcome::WrongInertia;
  }

  /// Factorizes with inertia correction. Returns false when the shift
  /// exceeds its cap.
  bool factor_with_correction(const Vec& sigma) {
    double dw = 0.0;
    double dc = set_.delta_c;
    assemble(sigma, dw, dc);
    auto out = factor();
    if (out == FactorOutcome::Singular) {
      dc = std::max(dc, 1e-8 * std::pow(mu_, 0.25));
      assemble(sigma, dw, dc);
      out = factor();
    }
    if (out != FactorOutcome::Ok) {
      dw = last_dw_ == 0.0 ? set_.delta_w_init
                           : std::max(set_.delta_w_init, last_dw_ / 3.0);
      while (true) {
        assemble(sigma, dw, dc);
        out = factor();
        if (out == FactorOutcome::Ok) break;
        dw *= set_.delta_w_growth;
        if (dw > set_.delta_w_max) return false;
      }
    }
    cur_dw_ = dw;
    cur_dc_ = dc;
    if (dw > 0.0) last_dw_ = dw;
    return true;
  }

  /// Solves K sol = rhs with iterative refinement against the system
  /// without the dual regularization.
  Vec solve_kkt(const Vec& sigma, const Vec& rhs) const {
    Vec sol = kkt_.solve(rhs);
    for (int it = 0; it < 3; ++it) {
      const Vec res = rhs - apply_k(sigma, sol);
      const double rn = res.lpNorm<Eigen::Infinity>();
      if (rn <= 1e-12 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>())) break;
      sol += kkt_.solve(res);
    }
    return sol;
  }

  /// Product with the primal-dual matrix (Hessian shift kept, dual shift
  /// removed).
  Vec apply_k(const Vec& sigma, const Vec& v) const {
    const Eigen::Index ny = static_cast<Eigen::Index>(ny_);
    const Eigen::Index m = static_cast<Eigen::Index>(m_);
    Vec out = Vec::Zero(ny + m);
    // Hessian part.
    auto hv = [&](const QuadraticFunction& fn, double w) {
      if (w == 0.0) return;
      for (const auto& q : fn.quad) {
        const int a = free_pos_[q.i];
        const int b = free_pos_[q.j];
        if (a < 0 || b < 0) continue;
        if (a == b) {
          out[a] += 2.0 * q.coef * w * v[a];
        } else {
          out[a] += q.coef * w * v[b];
          out[b] += q.coef * w * v[a];
        }
      }
    };
    hv(p_.objective, scale_);
    for (std::size_t r = 0; r < m_; ++r) hv(p_.rows[rows_[r].orig].fn, lambda_[r]);
    for (Eigen::Index j = 0; j < ny; ++j) out[j] += (sigma[j] + cur_dw_) * v[j];
    const Vec vl = v.tail(m);
    out.head(ny) += jacobian_transpose_times(vl);
    out.tail(m) += jacobian_times(v.head(ny));
    return out;
  }

  // ---- main loop ----------------------------------------------------------

  struct Errors {
    double stat = 0.0;
    double feas = 0.0;
    double compl_ = 0.0;
  };

  Errors errors(const Vec& grad_f, const Vec& h, double mu) const {
    Errors e;
    const Vec gl = grad_f + jacobian_transpose_times(lambda_) - zl_ + zu_;
    e.stat = ny_ ? gl.lpNorm<Eigen::Infinity>() : 0.0;
    e.feas = m_ ? h.lpNorm<Eigen::Infinity>() : 0.0;
    for (std::size_t j = 0; j < ny_; ++j) {
      if (has_lo(j)) e.compl_ = std::max(e.compl_, std::abs(zl_[j] * (y_[j] - ylo_[j]) - mu));
      if (has_hi(j)) e.compl_ = std::max(e.compl_, std::abs(zu_[j] * (yhi_[j] - y_[j]) - mu));
    }
    return e;
  }

  double dual_scaling() const {
    constexpr double smax = 100.0;
    const double sum = lambda_.lpNorm<1>() + zl_.lpNorm<1>() + zu_.lpNorm<1>();
    const double cnt = static_cast<double>(m_ + 2 * ny_);
    return cnt > 0 ? std::max(smax, sum / cnt) / smax : 1.0;
  }

  static double max_step(const Vec& v, const Vec& dv, const std::vector<double>& lo,
                          const std::vector<double>& hi, double tau) {
    double a = 1.0;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (dv[j] < 0.0 && std::isfinite(lo[j])) {
        a = std::min(a, -tau * (v[j] - lo[j]) / dv[j]);
      } else if (dv[j] > 0.0 && std::isfinite(hi[j])) {
        a = std::min(a, tau * (hi[j] - v[j]) / dv[j]);
      }
    }
    return a;
  }

  static double max_dual_step(const Vec& z, const Vec& dz, double tau) {
    double a = 1.0;
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      if (dz[j] < 0.0 && z[j] > 0.0) a = std::min(a, -tau * z[j] / dz[j]);
    }
    return a;
  }

  struct FilterEntry {
    double theta;
    double phi;
  };

  [[nodiscard]] bool filter_accepts(double theta, double phi) const {
    for (const auto& f : filter_) {
      if (theta >= f.theta && phi >= f.phi) return false;
    }
    return true;
  }

  void iterate(SolveResult& res) {
    constexpr double gamma_theta = 1e-5;
    constexpr double gamma_phi = 1e-8;
    constexpr double eta_phi = 1e-8;
    constexpr double s_phi = 2.3;
    constexpr double s_theta = 1.1;
    constexpr double delta_sw = 1.0;
    const double mu_min = std::min(set_.kkt_tol, set_.feas_tol) / 10.0;

    scatter(y_);
    double fval = p_.objective.value(x_);
    Vec h = constraint_values(y_);
    eval_jacobian();
    Vec grad_f = objective_gradient();

    const double theta0 = m_ ? h.lpNorm<1>() : 0.0;
    const double theta_max = 1e4 * std::max(1.0, theta0);
    const double theta_min = 1e-4 * std::max(1.0, theta0);
    int soft_failures = 0;
    int restorations = 0;

    for (int iter = 0;; ++iter) {
      // Convergence in unscaled residual norms.
      const Errors e0 = errors(grad_f, h, 0.0);
      IterationRecord rec;
      rec.iter = iter;
      rec.objective = fval;
      rec.mu = mu_;
      rec.inf_pr = e0.feas;
      rec.inf_du = e0.stat;
      rec.compl_ = e0.compl_;
      if (e0.stat <= set_.kkt_tol && e0.feas <= set_.feas_tol &&
          e0.compl_ <= set_.kkt_tol) {
        res.status = SolveStatus::Optimal;
        res.iterations = iter;
        record(res, rec);
        return;
      }
      if (iter >= set_.max_iter) {
        res.status = SolveStatus::IterationLimit;
        res.iterations = iter;
        record(res, rec);
        return;
      }

      // Monotone barrier update.
      const double sd = dual_scaling();
      while (mu_ > mu_min) {
        const Errors em = errors(grad_f, h, mu_);
        const double emu = std::max({em.stat / sd, em.feas, em.compl_ / sd});
        if (emu > set_.kappa_eps * mu_) break;
        mu_ = std::max(mu_min, std::min(set_.kappa_mu * mu_, std::pow(mu_, set_.theta_mu)));
        filter_.clear();
      }
      const double tau = std::max(set_.tau_min, 1.0 - mu_);

      // Newton system.
      Vec sigma = Vec::Zero(static_cast<Eigen::Index>(ny_));
      for (std::size_t j = 0; j < ny_; ++j) {
        if (has_lo(j)) sigma[j] += zl_[j] / (y_[j] - ylo_[j]);
        if (has_hi(j)) sigma[j] += zu_[j] / (yhi_[j] - y_[j]);
      }
      if (!factor_with_correction(sigma)) {
        res.status = SolveStatus::NumericalFailure;
        res.message = "inertia correction exceeded its cap";
        res.iterations = iter;
        record(res, rec);
        return;
      }
      rec.delta_w = cur_dw_;
      const Vec grad_phi = barrier_gradient(y_, grad_f);
      const Eigen::Index ny = static_cast<Eigen::Index>(ny_);
      const Eigen::Index m = static_cast<Eigen::Index>(m_);
      Vec rhs(ny + m);
      rhs.head(ny) = -(grad_phi + jacobian_transpose_times(lambda_));
      rhs.tail(m) = -h;
      const Vec sol = solve_kkt(sigma, rhs);
      if (!sol.allFinite()) {
        res.status = SolveStatus::NumericalFailure;
        res.message = "non-finite Newton step";
        res.iterations = iter;
        record(res, rec);
        return;
      }
      const Vec dy = sol.head(ny);
      const Vec dl = sol.tail(m);
      Vec dzl = Vec::Zero(ny);
      Vec dzu = Vec::Zero(ny);
      for (Eigen::Index j = 0; j < ny; ++j) {
        if (has_lo(j)) {
          const double sl = y_[j] - ylo_[j];
          dzl[j] = mu_ / sl - zl_[j] - zl_[j] / sl * dy[j];
        }
        if (has_hi(j)) {
          const double su = yhi_[j] - y_[j];
          dzu[j] = mu_ / su - zu_[j] + zu_[j] / su * dy[j];
        }
      }

      const double alpha_max = max_step(y_, dy, ylo_, yhi_, tau);
      const double alpha_z = std::min(max_dual_step(zl_, dzl, tau), max_dual_step(zu_, dzu, tau));

      // Filter line search.
      const double theta = m_ ? h.lpNorm<1>() : 0.0;
      const double phi = barrier_value(y_, fval);
      const double gphi_d = grad_phi.dot(dy);
      double alpha_min = 1.0;
      {
        constexpr double gamma_alpha = 0.05;
        double amin = gamma_theta;
        if (gphi_d < 0.0) {
          amin = std::min({gamma_theta, gamma_phi * theta / -gphi_d,
                           delta_sw * std::pow(theta, s_theta) / std::pow(-gphi_d, s_phi)});
        }
        alpha_min = gamma_alpha * amin;
      }

      double alpha = alpha_max;
      bool accepted = false;
      bool f_type = false;
      int trials = 0;
      Vec y_trial;
      double f_trial = 0.0;
      Vec h_trial;

      auto try_point = [&](const Vec& yt, double a) -> bool {
        scatter(yt);
        const double ft = p_.objective.value(x_);
        const Vec ht = constraint_values(yt);
        const double th_t = m_ ? ht.lpNorm<1>() : 0.0;
        const double ph_t = barrier_value(yt, ft);
        if (!std::isfinite(ph_t) || !std::isfinite(th_t)) return false;
        if (th_t > theta_max) return false;
        if (!filter_accepts(th_t, ph_t)) return false;
        const bool switching =
            gphi_d < 0.0 && a * std::pow(-gphi_d, s_phi) > delta_sw * std::pow(theta, s_theta);
        bool ok = false;
        if (theta <= theta_min && switching) {
          ok = ph_t <= phi + eta_phi * a * gphi_d;
          f_type = ok;
        } else {
          ok = th_t <= (1.0 - gamma_theta) * theta || ph_t <= phi - gamma_phi * theta;
          f_type = false;
        }
        if (ok) {
          y_trial = yt;
          f_trial = ft;
          h_trial = ht;
        }
        return ok;
      };

      while (alpha >= alpha_min) {
        ++trials;
        const Vec yt = y_ + alpha * dy;
        if (try_point(yt, alpha)) {
          accepted = true;
          break;
        }
        // Second-order correction on the first trial.
        if (trials == 1 && m_ > 0) {
          scatter(yt);
          const Vec ht = constraint_values(yt);
          if (ht.lpNorm<1>() >= theta) {
            Vec c_soc = alpha * h + ht;
            double theta_soc_prev = theta;
            for (int p = 0; p < 4; ++p) {
              Vec rs(ny + m);
              rs.head(ny) = -(grad_phi + jacobian_transpose_times(lambda_));
              rs.tail(m) = -c_soc;
              const Vec ss = solve_kkt(sigma, rs);
              const Vec dys = ss.head(ny);
              const double as = max_step(y_, dys, ylo_, yhi_, tau);
              const Vec ys = y_ + as * dys;
              if (try_point(ys, alpha)) {
                accepted = true;
                alpha = as;
                break;
              }
              scatter(ys);
              const Vec hs = constraint_values(ys);
              const double th_s = hs.lpNorm<1>();
              if (th_s > 0.99 * theta_soc_prev) break;
              theta_soc_prev = th_s;
              c_soc = as * c_soc + hs;
            }
            if (accepted) break;
          }
        }
        alpha *= 0.5;
      }

      if (!accepted) {
        // Soft fallback: take the fraction-to-boundary step when it reduces
        // the primal-dual error of the barrier problem.
        const Vec yt = y_ + alpha_max * dy;
        scatter(yt);
        const double ft = p_.objective.value(x_);
        const Vec ht = constraint_values(yt);
        const Errors before = errors(grad_f, h, mu_);
        const Vec y_save = y_;
        const Vec l_save = lambda_;
        const Vec zl_save = zl_;
        const Vec zu_save = zu_;
        y_ = yt;
        lambda_ = lambda_ + alpha_max * dl;
        zl_ = zl_ + alpha_max * dzl;
        zu_ = zu_ + alpha_max * dzu;
        eval_jacobian();
        const Vec gf = objective_gradient();
        const Errors after = errors(gf, ht, mu_);
        const double eb = std::max({before.stat, before.feas, before.compl_});
        const double ea = std::max({after.stat, after.feas, after.compl_});
        if (std::isfinite(ea) && ea <= (1.0 - 1e-4) * eb && zl_.minCoeff() >= 0.0 &&
            zu_.minCoeff() >= 0.0) {
          ++soft_failures;
          filter_.clear();
          fval = ft;
          h = ht;
          grad_f = gf;
          clamp_duals();
          rec.alpha_pr = alpha_max;
          rec.alpha_du = alpha_max;
          rec.ls_trials = trials;
          record(res, rec);
          continue;
        }
        y_ = y_save;
        lambda_ = l_save;
        zl_ = zl_save;
        zu_ = zu_save;
        scatter(y_);
        if (set_.restoration && restorations < set_.max_restorations &&
            theta > set_.feas_tol) {
          ++restorations;
          if (restore(theta)) {
            filter_.clear();
            scatter(y_);
            fval = p_.objective.value(x_);
            h = constraint_values(y_);
            eval_jacobian();
            grad_f = objective_gradient();
            rec.ls_trials = trials;
            record(res, rec);
            continue;
          }
        }
        eval_jacobian();
        res.status = theta > set_.feas_tol ? SolveStatus::Infeasible
                                           : SolveStatus::NumericalFailure;
        res.message = restorations > 0 ? "restoration failed" : "line search failed";
        res.iterations = iter;
        record(res, rec);
        return;
      }

      if (!f_type) {
        filter_.push_back({(1.0 - gamma_theta) * theta, phi - gamma_phi * theta});
      }
      y_ = y_trial;
      lambda_ += alpha * dl;
      zl_ += alpha_z * dzl;
      zu_ += alpha_z * dzu;
      clamp_duals();
      scatter(y_);
      fval = f_trial;
      h = h_trial;
      eval_jacobian();
      grad_f = objective_gradient();

      rec.alpha_pr = alpha;
      rec.alpha_du = alpha_z;
      rec.ls_trials = trials;
      record(res, rec);
    }
  }

  /// Feasibility restoration: minimizes the l1 violation of the rows plus a
  /// proximity term around the current point, using elastic variables
  /// g(x) - p + n in [lo, hi], p, n >= 0. On success the iterate moves to the
  /// restored point with centered bound multipliers and zero row multipliers.
  bool restore(double theta) {
    const double rho = set_.restoration_penalty;
    const double zeta = std::sqrt(mu_);
    QcqpProblem rp;
    rp.x_lo = p_.x_lo;
    rp.x_hi = p_.x_hi;
    rp.coupling_vars = p_.coupling_vars;
    std::vector<double> x0 = x_;
    for (std::size_t j = 0; j < nf_; ++j) {
      const std::size_t v = free_vars_[j];
      const double d = std::min(1.0, 1.0 / std::max(1e-12, std::abs(x_[v])));
      rp.objective.add_quad(v, v, 0.5 * zeta * d * d);
      rp.objective.add_linear(v, -zeta * d * d * x_[v]);
      rp.objective.constant += 0.5 * zeta * d * d * x_[v] * x_[v];
    }
    for (const auto& rpl : rows_) {
      const auto& row = p_.rows[rpl.orig];
      ConstraintRow er = row;
      const std::size_t pv = rp.x_lo.size();
      rp.x_lo.insert(rp.x_lo.end(), {0.0, 0.0});
      rp.x_hi.insert(rp.x_hi.end(), {kInf, kInf});
      er.fn.add_linear(pv, -1.0);
      er.fn.add_linear(pv + 1, 1.0);
      rp.objective.add_linear(pv, rho);
      rp.objective.add_linear(pv + 1, rho);
      const double g = row.fn.value(x_);
      const double over = std::max(0.0, g - row.hi);
      const double under = std::max(0.0, row.lo - g);
      x0.push_back(over);
      x0.push_back(under);
      rp.rows.push_back(std::move(er));
    }
    SolverSettings inner = set_;
    inner.restoration = false;
    inner.keep_trace = false;
    inner.on_iteration = nullptr;
    inner.max_iter = std::min(set_.max_iter, 200);
    inner.kkt_tol = std::max(set_.kkt_tol, 1e-6);
    inner.feas_tol = set_.feas_tol * 0.1;
    inner.mu_init = std::max(mu_, 1e-2);
    const SolveResult r = solve_impl(rp, inner, InitialPoint{x0, std::nullopt});
    if (r.x.size() != rp.num_vars()) return false;
    for (double v : r.x) {
      if (!std::isfinite(v)) return false;
    }

    Vec y_new = y_;
    for (std::size_t j = 0; j < nf_; ++j) y_new[j] = r.x[free_vars_[j]];
    auto inside = [&](std::size_t j, double v) {
      const double lo = ylo_[j];
      const double hi = yhi_[j];
      const double margin = 1e-8 * std::max(1.0, std::abs(v));
      if (std::isfinite(lo) && std::isfinite(hi)) {
        const double mid = 0.5 * (lo + hi);
        const double m = std::min(margin, 0.25 * (hi - lo));
        return std::clamp(v, std::min(mid, lo + m), std::max(mid, hi - m));
      }
      if (std::isfinite(lo)) return std::max(v, lo + margin);
      if (std::isfinite(hi)) return std::min(v, hi - margin);
      return v;
    };
    for (std::size_t j = 0; j < nf_; ++j) y_new[j] = inside(j, y_new[j]);
    scatter(y_new);
    for (const auto& rpl : rows_) {
      if (!rpl.equality) {
        y_new[rpl.slack] = inside(rpl.slack, p_.rows[rpl.orig].fn.value(x_));
      }
    }
    const Vec h_new = constraint_values(y_new);
    const double theta_new = m_ ? h_new.lpNorm<1>() : 0.0;
    if (!(theta_new < 0.9 * theta)) {
      scatter(y_);
      return false;
    }
    y_ = y_new;
    lambda_.setZero();
    for (std::size_t j = 0; j < ny_; ++j) {
      if (has_lo(j)) zl_[j] = std::min(1e3, mu_ / (y_[j] - ylo_[j]));
      if (has_hi(j)) zu_[j] = std::min(1e3, mu_ / (yhi_[j] - y_[j]));
    }
    return true;
  }

  void clamp_duals() {
    constexpr double kappa_sigma = 1e10;
    for (std::size_t j = 0; j < ny_; ++j) {
      if (has_lo(j)) {
        const double s = y_[j] - ylo_[j];
        zl_[j] = std::clamp(zl_[j], mu_ / (kappa_sigma * s), kappa_sigma * mu_ / s);
      }
      if (has_hi(j)) {
        const double s = yhi_[j] - y_[j];
        zu_[j] = std::clamp(zu_[j], mu_ / (kappa_sigma * s), kappa_sigma * mu_ / s);
      }
    }
  }

  void record(SolveResult& res, const IterationRecord& rec) const {
    if (set_.keep_trace) res.trace.push_back(rec);
    if (set_.on_iteration) set_.on_iteration(rec);
  }

  void finish(SolveResult& res, std::chrono::steady_clock::time_point t0) {
    res.objective_scale = scale_;
    if (initialized_) scatter(y_);
    res.x = x_;
    res.objective = p_.objective.value(x_);
    const std::size_t n = p_.num_vars();
    auto& d = res.duals;
    d.rows.assign(p_.num_rows(), 0.0);
    d.row_lower.assign(p_.num_rows(), 0.0);
    d.row_upper.assign(p_.num_rows(), 0.0);
    d.var_lower.assign(n, 0.0);
    d.var_upper.assign(n, 0.0);
    if (initialized_) {
      for (std::size_t r = 0; r < m_; ++r) {
        const auto& rp = rows_[r];
        d.rows[rp.orig] = lambda_[r];
        if (!rp.equality) {
          d.row_lower[rp.orig] = zl_[rp.slack];
          d.row_upper[rp.orig] = zu_[rp.slack];
        }
      }
      for (std::size_t j = 0; j < nf_; ++j) {
        d.var_lower[free_vars_[j]] = zl_[j];
        d.var_upper[free_vars_[j]] = zu_[j];
      }
    }
    res.residuals = kkt_residuals(p_, res.x, d, scale_);
    if (res.status == SolveStatus::Optimal &&
        (res.residuals.stationarity > set_.kkt_tol ||
         res.residuals.feasibility > set_.feas_tol ||
         res.residuals.complementarity > set_.kkt_tol)) {
      // Internal and recomputed residuals disagree; do not claim optimality.
      res.status = SolveStatus::NumericalFailure;
      res.message = "recomputed KKT residuals exceed tolerance";
    }
    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  static constexpr double kDamping = 1e-5;

  const QcqpProblem& p_;
  const SolverSettings& set_;

  std::vector<double> x_;
  std::vector<int> free_pos_;
  std::vector<std::size_t> free_vars_;
  std::size_t nf_ = 0;
  std::size_t ny_ = 0;
  std::size_t m_ = 0;
  std::vector<RowPlan> rows_;
  std::vector<double> ylo_;
  std::vector<double> yhi_;

  std::vector<std::size_t> jrow_ptr_;
  std::vector<int> jcol_;
  std::vector<double> jval_;

  SpMat K_;
  std::vector<int> diag_pos_;
  std::vector<int> obj_kpos_;
  std::vector<int> kj_pos_;
  std::vector<int> slack_kpos_;
  BorderedBlockFactor kkt_;

  Vec y_;
  Vec lambda_;
  Vec zl_;
  Vec zu_;
  double mu_ = 0.1;
  double scale_ = 1.0;
  bool initialized_ = false;
  double last_dw_ = 0.0;
  double cur_dw_ = 0.0;
  double cur_dc_ = 0.0;
  std::vector<FilterEntry> filter_;
};

inline SolveResult solve_impl(const QcqpProblem& problem, const SolverSettings& settings,
                              const std::optional<InitialPoint>& init) {
  InteriorPoint ip(problem, settings);
  return ip.run(init);
}

}  // namespace detail

/// Solves `problem` to a local KKT point.
inline SolveResult solve(const QcqpProblem& problem, const SolverSettings& settings,
                         const std::optional<InitialPoint>& init = std::nullopt) {
  return detail::solve_impl(problem, settings, init);
}

/// Starting point for `problem` from a previous solution of a problem with
/// the same layout: the primal point is clipped into the new bounds and the
/// multipliers are reused.
inline InitialPoint warm_start_from(const SolveResult& previous,
                                    const QcqpProblem& problem) {
  if (previous.x.size() != problem.num_vars()) {
    throw std::invalid_argument("warm start: variable count mismatch (" +
                                std::to_string(previous.x.size()) + " vs " +
                                std::to_string(problem.num_vars()) + ")");
  }
  InitialPoint ip;
  ip.x = previous.x;
  for (std::size_t v = 0; v < ip.x.size(); ++v) {
    ip.x[v] = std::clamp(ip.x[v], problem.x_lo[v], std::max(problem.x_lo[v], problem.x_hi[v]));
  }
  if (previous.duals.rows.size() == problem.num_rows()) ip.duals = previous.duals;
  return ip;
}

}  // namespace sctep
