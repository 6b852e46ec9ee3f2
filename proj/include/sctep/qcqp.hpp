#pragma once

// Sparse quadratically constrained program:
//
//   min  f(x)               f, g_r polynomials of degree <= 2
//   s.t. lo_r <= g_r(x) <= hi_r
//        x_lo <= x <= x_hi
//
// Every Hessian is constant, so derivatives are assembled from the stored
// coefficients without differentiation machinery.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sctep {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct LinearTerm {
  std::size_t var;
  double coef;
};

/// coef * x[i] * x[j] with i <= j.
struct QuadTerm {
  std::size_t i;
  std::size_t j;
  double coef;
};

struct QuadraticFunction {
  double constant = 0.0;
  std::vector<LinearTerm> linear;
  std::vector<QuadTerm> quad;

  void add_linear(std::size_t var, double coef) {
    if (coef != 0.0) linear.push_back({var, coef});
  }
  void add_quad(std::size_t i, std::size_t j, double coef) {
    if (coef == 0.0) return;
    if (i > j) std::swap(i, j);
    quad.push_back({i, j, coef});
  }

  [[nodiscard]] double value(std::span<const double> x) const {
    double v = constant;
    for (const auto& t : linear) v += t.coef * x[t.var];
    for (const auto& t : quad) v += t.coef * x[t.i] * x[t.j];
    return v;
  }

  /// Adds scale * grad(x) into g.
  void accumulate_gradient(std::span<const double> x, double scale,
                           std::span<double> g) const {
    for (const auto& t : linear) g[t.var] += scale * t.coef;
    for (const auto& t : quad) {
      if (t.i == t.j) {
        g[t.i] += scale * 2.0 * t.coef * x[t.i];
      } else {
        g[t.i] += scale * t.coef * x[t.j];
        g[t.j] += scale * t.coef * x[t.i];
      }
    }
  }

  /// Merges duplicate terms and drops zeros. Keeps evaluation order stable.
  void compress() {
    std::map<std::size_t, double> lin;
    for (const auto& t : linear) lin[t.var] += t.coef;
    linear.clear();
    for (const auto& [v, c] : lin) {
      if (c != 0.0) linear.push_back({v, c});
    }
    std::map<std::pair<std::size_t, std::size_t>, double> qd;
    for (const auto& t : quad) qd[{t.i, t.j}] += t.coef;
    quad.clear();
    for (const auto& [ij, c] : qd) {
      if (c != 0.0) quad.push_back({ij.first, ij.second, c});
    }
  }
};

struct ConstraintRow {
  QuadraticFunction fn;
  double lo = -kInf;
  double hi = kInf;

  [[nodiscard]] bool is_equality() const { return lo == hi; }
};

struct QcqpProblem {
  std::vector<double> x_lo;
  std::vector<double> x_hi;
  std::vector<ConstraintRow> rows;
  QuadraticFunction objective;
  // Variables shared by otherwise independent groups of rows. Only used as a
  // hint to order the linear algebra.
  std::vector<std::size_t> coupling_vars;

  [[nodiscard]] std::size_t num_vars() const { return x_lo.size(); }
  [[nodiscard]] std::size_t num_rows() const { return rows.size(); }
};

/// Row values g_r(x) in declared order.
inline std::vector<double> row_values(const QcqpProblem& p,
                                      std::span<const double> x) {
  std::vector<double> out(p.rows.size());
  for (std::size_t r = 0; r < p.rows.size(); ++r) {
    out[r] = p.rows[r].fn.value(x);
  }
  return out;
}

/// Distance of each row value outside [lo, hi]; zero when satisfied.
inline std::vector<double> row_violations(const QcqpProblem& p,
                                          std::span<const double> x) {
  std::vector<double> out(p.rows.size());
  for (std::size_t r = 0; r < p.rows.size(); ++r) {
    const double v = p.rows[r].fn.value(x);
    out[r] = std::max({0.0, p.rows[r].lo - v, v - p.rows[r].hi});
  }
  return out;
}

struct ObjectiveEval {
  double value = 0.0;
  std::vector<double> gradient;
};

inline ObjectiveEval eval_objective(const QcqpProblem& p,
                                    std::span<const double> x) {
  ObjectiveEval e;
  e.value = p.objective.value(x);
  e.gradient.assign(p.num_vars(), 0.0);
  p.objective.accumulate_gradient(x, 1.0, e.gradient);
  return e;
}

/// Dense-free Jacobian-vector product J(x) v.
inline std::vector<double> jacobian_times(const QcqpProblem& p,
                                          std::span<const double> x,
                                          std::span<const double> v) {
  std::vector<double> out(p.rows.size(), 0.0);
  for (std::size_t r = 0; r < p.rows.size(); ++r) {
    double acc = 0.0;
    for (const auto& t : p.rows[r].fn.linear) acc += t.coef * v[t.var];
    for (const auto& t : p.rows[r].fn.quad) {
      if (t.i == t.j) {
        acc += 2.0 * t.coef * x[t.i] * v[t.i];
      } else {
        acc += t.coef * (x[t.j] * v[t.i] + x[t.i] * v[t.j]);
      }
    }
    out[r] = acc;
  }
  return out;
}

/// Hessian-vector product of a single quadratic function (x-independent).
inline std::vector<double> hessian_times(const QuadraticFunction& fn,
                                         std::size_t n,
                                         std::span<const double> v) {
  std::vector<double> out(n, 0.0);
  for (const auto& t : fn.quad) {
    if (t.i == t.j) {
      out[t.i] += 2.0 * t.coef * v[t.i];
    } else {
      out[t.i] += t.coef * v[t.j];
      out[t.j] += t.coef * v[t.i];
    }
  }
  return out;
}

/// d fn / d x[v] at x.
inline double partial(const QuadraticFunction& fn, std::span<const double> x,
                      std::size_t v) {
  double acc = 0.0;
  for (const auto& t : fn.linear) {
    if (t.var == v) acc += t.coef;
  }
  for (const auto& t : fn.quad) {
    if (t.i == v && t.j == v) {
      acc += 2.0 * t.coef * x[v];
    } else if (t.i == v) {
      acc += t.coef * x[t.j];
    } else if (t.j == v) {
      acc += t.coef * x[t.i];
    }
  }
  return acc;
}

/// fn(x + h e_v) - fn(x - h e_v), summing only the terms that contain v so
/// that unrelated large terms do not swamp the difference in rounding.
inline double central_delta(const QuadraticFunction& fn,
                            std::span<const double> x, std::size_t v,
                            double h) {
  const double xp = x[v] + h;
  const double xm = x[v] - h;
  double acc = 0.0;
  for (const auto& t : fn.linear) {
    if (t.var == v) acc += t.coef * (xp - xm);
  }
  for (const auto& t : fn.quad) {
    if (t.i == v && t.j == v) {
      acc += t.coef * (xp * xp - xm * xm);
    } else if (t.i == v) {
      acc += t.coef * (xp - xm) * x[t.j];
    } else if (t.j == v) {
      acc += t.coef * x[t.i] * (xp - xm);
    }
  }
  return acc;
}

/// Analytic derivatives against central finite differences. Reports the
/// worst relative error |analytic - fd| / max(1, |analytic|) over the
/// objective gradient, every constraint gradient and the Hessian-vector
/// product of every quadratic function along a fixed direction. Linear
/// terms have a zero Hessian, so the Hessian check differences only the
/// quadratic part of each gradient.
struct DerivativeReport {
  double max_rel_error = 0.0;
  double gradient_error = 0.0;
  double jacobian_error = 0.0;
  double hessian_error = 0.0;
};

inline DerivativeReport derivative_check(const QcqpProblem& p,
                                         std::span<const double> x,
                                         double step = 1e-6) {
  const std::size_t n = p.num_vars();
  DerivativeReport rep;
  auto rel = [](double a, double fd) {
    return std::abs(a - fd) / std::max(1.0, std::abs(a));
  };

  const auto grad = eval_objective(p, x).gradient;
  std::vector<std::vector<std::size_t>> col_rows(n);
  for (std::size_t r = 0; r < p.rows.size(); ++r) {
    for (const auto& t : p.rows[r].fn.linear) col_rows[t.var].push_back(r);
    for (const auto& t : p.rows[r].fn.quad) {
      col_rows[t.i].push_back(r);
      if (t.j != t.i) col_rows[t.j].push_back(r);
    }
  }
  for (std::size_t v = 0; v < n; ++v) {
    const double fd = central_delta(p.objective, x, v, step) / (2 * step);
    rep.gradient_error = std::max(rep.gradient_error, rel(grad[v], fd));

    auto& rows = col_rows[v];
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    for (const auto r : rows) {
      const auto& fn = p.rows[r].fn;
      const double fdr = central_delta(fn, x, v, step) / (2 * step);
      rep.jacobian_error =
          std::max(rep.jacobian_error, rel(partial(fn, x, v), fdr));
    }
  }

  // (grad_q(x + h d) - grad_q(x - h d)) / 2h against H d.
  std::vector<double> d(n);
  for (std::size_t v = 0; v < n; ++v) {
    d[v] = std::sin(1.0 + 0.7 * static_cast<double>(v));
  }
  std::vector<double> xp(n);
  std::vector<double> xm(n);
  for (std::size_t v = 0; v < n; ++v) {
    xp[v] = x[v] + step * d[v];
    xm[v] = x[v] - step * d[v];
  }
  auto check_hv = [&](const QuadraticFunction& fn) {
    QuadraticFunction q;
    q.quad = fn.quad;
    const auto hv = hessian_times(q, n, d);
    std::vector<double> gp(n, 0.0);
    std::vector<double> gm(n, 0.0);
    q.accumulate_gradient(xp, 1.0, gp);
    q.accumulate_gradient(xm, 1.0, gm);
    for (std::size_t v = 0; v < n; ++v) {
      const double fd = (gp[v] - gm[v]) / (2 * step);
      rep.hessian_error = std::max(rep.hessian_error, rel(hv[v], fd));
    }
  };
  check_hv(p.objective);
  for (const auto& row : p.rows) {
    if (!row.fn.quad.empty()) check_hv(row.fn);
  }

  rep.max_rel_error =
      std::max({rep.gradient_error, rep.jacobian_error, rep.hessian_error});
  return rep;
}

}  // namespace sctep
