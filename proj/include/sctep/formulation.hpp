#pragma once

// Monolithic stochastic AC security-constrained expansion model in
// rectangular voltage coordinates. One operating block per (scenario, state)
// pair plus first-stage investment variables shared by all blocks.
//
// Sizes, with N buses, L lines, G generators, F flex providers, S scenarios,
// K states, Lr reinforceable lines, Fr investable providers and
// L_k = L - (k >= 1 ? 1 : 0) in-service lines in state k:
//
//   variables = S*K*(4N + 4L + 2G + 4F) + Lr + Fr
//   rows      = S * sum_k (6*L_k + 3N + 4*Fr)
//
// Per block the rows are, in order: flow definitions (p, q at the from end,
// then p, q at the to end, per in-service line), active balances, reactive
// balances, thermal limits (from end, to end, per in-service line), voltage
// magnitude limits, flex caps coupled to FI (P up, P down, Q up, Q down, per
// investable provider). Investment caps are variable bounds, not rows.

#include <bit>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sctep/network_case.hpp"
#include "sctep/qcqp.hpp"

namespace sctep {

/// Subset of the case's investment options; bit i enables case.options[i].
struct Coalition {
  std::uint64_t bits = 0;

  [[nodiscard]] bool contains(std::size_t i) const { return (bits >> i) & 1U; }
  [[nodiscard]] Coalition with(std::size_t i) const {
    return {bits | (std::uint64_t{1} << i)};
  }
  [[nodiscard]] Coalition without(std::size_t i) const {
    return {bits & ~(std::uint64_t{1} << i)};
  }
  [[nodiscard]] int size() const { return std::popcount(bits); }
  [[nodiscard]] bool subset_of(Coalition o) const {
    return (bits & ~o.bits) == 0;
  }
  static Coalition all(std::size_t n) {
    return {n >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1};
  }
  friend bool operator==(Coalition, Coalition) = default;
  friend auto operator<=>(Coalition, Coalition) = default;
};

class FormulationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Case-level coalition from option ids; throws on unknown ids.
inline Coalition coalition_from_ids(const NetworkCase& c,
                                    const std::vector<int>& ids) {
  Coalition co;
  for (int id : ids) {
    auto idx = c.option_index(id);
    if (!idx) {
      throw FormulationError("unknown option id " + std::to_string(id));
    }
    co = co.with(*idx);
  }
  return co;
}

enum class ObjectiveKind { MinCurtailment, MinExpectedCost };

inline const char* to_string(ObjectiveKind k) {
  return k == ObjectiveKind::MinCurtailment ? "curtailment" : "cost";
}

class VariableLayout {
 public:
  VariableLayout() = default;

  explicit VariableLayout(const NetworkCase& c)
      : n_bus_(c.buses.size()),
        n_line_(c.lines.size()),
        n_gen_(c.generators.size()),
        n_flex_(c.flex_providers.size()),
        n_scen_(c.scenarios.size()),
        n_state_(c.states.size()) {
    li_slot_.assign(n_line_, kNone);
    fi_slot_.assign(n_flex_, kNone);
    // Investment variables follow the case's option order.
    std::size_t next = 0;
    for (const auto& opt : c.options) {
      if (const auto* lr = std::get_if<LineReinforcement>(&opt.kind)) {
        li_slot_[*c.line_index(lr->line)] = next++;
      } else {
        fi_slot_[*c.flex_index(std::get<FlexCapacity>(opt.kind).provider)] =
            next++;
      }
    }
    n_invest_ = next;
  }

  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  [[nodiscard]] std::size_t block_size() const {
    return 4 * n_bus_ + 4 * n_line_ + 2 * n_gen_ + 4 * n_flex_;
  }
  [[nodiscard]] std::size_t num_blocks() const { return n_scen_ * n_state_; }
  [[nodiscard]] std::size_t block(std::size_t s, std::size_t k) const {
    return s * n_state_ + k;
  }
  [[nodiscard]] std::size_t num_vars() const {
    return num_blocks() * block_size() + n_invest_;
  }

  [[nodiscard]] std::size_t e(std::size_t b, std::size_t n) const { return off(b) + n; }
  [[nodiscard]] std::size_t f(std::size_t b, std::size_t n) const {
    return off(b) + n_bus_ + n;
  }
  /// Flow variables; end 0 sends from `from_bus`, end 1 from `to_bus`.
  [[nodiscard]] std::size_t p(std::size_t b, std::size_t l, int end) const {
    return off(b) + 2 * n_bus_ + (end == 0 ? 0 : 2 * n_line_) + l;
  }
  [[nodiscard]] std::size_t q(std::size_t b, std::size_t l, int end) const {
    return off(b) + 2 * n_bus_ + (end == 0 ? 0 : 2 * n_line_) + n_line_ + l;
  }
  [[nodiscard]] std::size_t pg(std::size_t b, std::size_t g) const {
    return off(b) + 2 * n_bus_ + 4 * n_line_ + g;
  }
  [[nodiscard]] std::size_t qg(std::size_t b, std::size_t g) const {
    return pg(b, g) + n_gen_;
  }
  [[nodiscard]] std::size_t p_up(std::size_t b, std::size_t fl) const {
    return off(b) + 2 * n_bus_ + 4 * n_line_ + 2 * n_gen_ + fl;
  }
  [[nodiscard]] std::size_t p_dn(std::size_t b, std::size_t fl) const {
    return p_up(b, fl) + n_flex_;
  }
  [[nodiscard]] std::size_t q_up(std::size_t b, std::size_t fl) const {
    return p_up(b, fl) + 2 * n_flex_;
  }
  [[nodiscard]] std::size_t q_dn(std::size_t b, std::size_t fl) const {
    return p_up(b, fl) + 3 * n_flex_;
  }
  [[nodiscard]] std::size_t lc(std::size_t b, std::size_t n) const {
    return off(b) + 2 * n_bus_ + 4 * n_line_ + 2 * n_gen_ + 4 * n_flex_ + n;
  }
  [[nodiscard]] std::size_t rc(std::size_t b, std::size_t n) const {
    return lc(b, n) + n_bus_;
  }
  [[nodiscard]] bool has_li(std::size_t l) const { return li_slot_[l] != kNone; }
  [[nodiscard]] bool has_fi(std::size_t fl) const { return fi_slot_[fl] != kNone; }
  [[nodiscard]] std::size_t li(std::size_t l) const {
    return num_blocks() * block_size() + li_slot_[l];
  }
  [[nodiscard]] std::size_t fi(std::size_t fl) const {
    return num_blocks() * block_size() + fi_slot_[fl];
  }
  [[nodiscard]] std::size_t num_investment_vars() const { return n_invest_; }
  [[nodiscard]] std::size_t num_buses() const { return n_bus_; }
  [[nodiscard]] std::size_t num_lines() const { return n_line_; }
  [[nodiscard]] std::size_t num_generators() const { return n_gen_; }
  [[nodiscard]] std::size_t num_flex() const { return n_flex_; }
  [[nodiscard]] std::size_t num_scenarios() const { return n_scen_; }
  [[nodiscard]] std::size_t num_states() const { return n_state_; }

  [[nodiscard]] bool same_shape(const VariableLayout& o) const {
    return n_bus_ == o.n_bus_ && n_line_ == o.n_line_ && n_gen_ == o.n_gen_ &&
           n_flex_ == o.n_flex_ && n_scen_ == o.n_scen_ &&
           n_state_ == o.n_state_ && li_slot_ == o.li_slot_ &&
           fi_slot_ == o.fi_slot_;
  }

 private:
  [[nodiscard]] std::size_t off(std::size_t b) const { return b * block_size(); }

  std::size_t n_bus_ = 0;
  std::size_t n_line_ = 0;
  std::size_t n_gen_ = 0;
  std::size_t n_flex_ = 0;
  std::size_t n_scen_ = 0;
  std::size_t n_state_ = 0;
  std::size_t n_invest_ = 0;
  std::vector<std::size_t> li_slot_;
  std::vector<std::size_t> fi_slot_;
};

/// Where each row group of a block starts.
struct BlockRows {
  std::size_t flow = 0;
  std::size_t balance_p = 0;
  std::size_t balance_q = 0;
  std::size_t thermal = 0;
  std::size_t voltage = 0;
  std::size_t flex_cap = 0;
  std::size_t end = 0;
  /// In-service line indices, in row order.
  std::vector<std::size_t> lines;
};

struct SctepProblem {
  QcqpProblem qp;
  VariableLayout layout;
  std::vector<BlockRows> block_rows;
  ObjectiveKind objective = ObjectiveKind::MinCurtailment;
  Coalition coalition;
  double base_mva = 100.0;
};

namespace detail {

/// Adds +/- the flow expression of one branch end to `fn`:
/// sign * [(en^2+fn^2)G - (en em + fn fm)G - (fn em - en fm)B]   (active)
/// sign * [-(en^2+fn^2)B + (en em + fn fm)B - (fn em - en fm)G]  (reactive)
inline void add_flow_expression(QuadraticFunction& fn, bool reactive,
                                double sign, std::size_t en, std::size_t fnv,
                                std::size_t em, std::size_t fm, double g,
                                double b) {
  const double self = reactive ? -b : g;
  const double cross = reactive ? b : -g;
  const double skew = reactive ? -g : -b;
  fn.add_quad(en, en, sign * self);
  fn.add_quad(fnv, fnv, sign * self);
  fn.add_quad(en, em, sign * cross);
  fn.add_quad(fnv, fm, sign * cross);
  // skew * (fn em - en fm)
  fn.add_quad(fnv, em, sign * skew);
  fn.add_quad(en, fm, -sign * skew);
}

}  // namespace detail

/// Builds the NLP for `coalition` (bits over case.options) and `objective`.
inline SctepProblem build_nlp(const NetworkCase& c, Coalition coalition,
                              ObjectiveKind objective) {
  if (c.options.size() < 64 &&
      (coalition.bits >> c.options.size()) != 0) {
    throw FormulationError("coalition references an unknown option");
  }
  SctepProblem out;
  out.layout = VariableLayout(c);
  out.objective = objective;
  out.coalition = coalition;
  out.base_mva = c.base_mva;
  const auto& L = out.layout;
  auto& qp = out.qp;
  const double base = c.base_mva;
  const std::size_t nb = c.buses.size();
  const std::size_t ref = c.reference_bus();

  qp.x_lo.assign(L.num_vars(), -kInf);
  qp.x_hi.assign(L.num_vars(), kInf);

  std::vector<double> li_cap(c.lines.size(), 0.0);
  std::vector<double> fi_cap(c.flex_providers.size(), 0.0);
  for (std::size_t i = 0; i < c.options.size(); ++i) {
    if (!coalition.contains(i)) continue;
    const auto& opt = c.options[i];
    if (const auto* lr = std::get_if<LineReinforcement>(&opt.kind)) {
      const auto l = *c.line_index(lr->line);
      li_cap[l] = c.lines[l].li_max / base;
    } else {
      const auto fl = *c.flex_index(std::get<FlexCapacity>(opt.kind).provider);
      fi_cap[fl] = c.flex_providers[fl].fi_max / base;
    }
  }
  for (std::size_t l = 0; l < c.lines.size(); ++l) {
    if (L.has_li(l)) {
      qp.x_lo[L.li(l)] = 0.0;
      qp.x_hi[L.li(l)] = li_cap[l];
      qp.coupling_vars.push_back(L.li(l));
    }
  }
  for (std::size_t fl = 0; fl < c.flex_providers.size(); ++fl) {
    if (L.has_fi(fl)) {
      qp.x_lo[L.fi(fl)] = 0.0;
      qp.x_hi[L.fi(fl)] = fi_cap[fl];
      qp.coupling_vars.push_back(L.fi(fl));
    }
  }

  std::vector<std::size_t> from(c.lines.size());
  std::vector<std::size_t> to(c.lines.size());
  for (std::size_t l = 0; l < c.lines.size(); ++l) {
    from[l] = *c.bus_index(c.lines[l].from_bus);
    to[l] = *c.bus_index(c.lines[l].to_bus);
  }
  std::vector<std::size_t> gen_bus;
  for (const auto& g : c.generators) gen_bus.push_back(*c.bus_index(g.bus));
  std::vector<std::size_t> flex_bus;
  for (const auto& fl : c.flex_providers) flex_bus.push_back(*c.bus_index(fl.bus));

  auto& obj = qp.objective;

  for (std::size_t s = 0; s < c.scenarios.size(); ++s) {
    const auto prof = c.profile(s);
    for (std::size_t k = 0; k < c.states.size(); ++k) {
      const auto b = L.block(s, k);
      const auto& st = c.states[k];
      std::optional<std::size_t> outaged;
      if (st.outaged_line) outaged = c.line_index(*st.outaged_line);
      const double weight = c.scenarios[s].weight * st.weight;

      BlockRows br;
      for (std::size_t l = 0; l < c.lines.size(); ++l) {
        if (outaged && *outaged == l) continue;
        br.lines.push_back(l);
      }

      // Variable bounds.
      for (std::size_t n = 0; n < nb; ++n) {
        const double vmax = c.buses[n].v_max;
        qp.x_lo[L.e(b, n)] = n == ref ? 0.0 : -vmax;
        qp.x_hi[L.e(b, n)] = vmax;
        qp.x_lo[L.f(b, n)] = n == ref ? 0.0 : -vmax;
        qp.x_hi[L.f(b, n)] = n == ref ? 0.0 : vmax;
        qp.x_lo[L.lc(b, n)] = 0.0;
        qp.x_hi[L.lc(b, n)] = std::max(0.0, prof.demand_p[n]) / base;
        qp.x_lo[L.rc(b, n)] = 0.0;
        qp.x_hi[L.rc(b, n)] = prof.res_p[n] / base;
      }
      if (outaged) {
        for (int end = 0; end < 2; ++end) {
          qp.x_lo[L.p(b, *outaged, end)] = qp.x_hi[L.p(b, *outaged, end)] = 0.0;
          qp.x_lo[L.q(b, *outaged, end)] = qp.x_hi[L.q(b, *outaged, end)] = 0.0;
        }
      }
      for (std::size_t g = 0; g < c.generators.size(); ++g) {
        const auto& gen = c.generators[g];
        qp.x_lo[L.pg(b, g)] = gen.p_min / base;
        qp.x_hi[L.pg(b, g)] = gen.p_max / base;
        qp.x_lo[L.qg(b, g)] = gen.q_min / base;
        qp.x_hi[L.qg(b, g)] = gen.q_max / base;
      }
      for (std::size_t fl = 0; fl < c.flex_providers.size(); ++fl) {
        const auto& fp = c.flex_providers[fl];
        const double extra = fi_cap[fl];
        const std::size_t vars[4] = {L.p_up(b, fl), L.p_dn(b, fl),
                                     L.q_up(b, fl), L.q_dn(b, fl)};
        const double caps[4] = {fp.p_up_base, fp.p_dn_base, fp.q_up_base,
                                fp.q_dn_base};
        for (int t = 0; t < 4; ++t) {
          qp.x_lo[vars[t]] = 0.0;
          qp.x_hi[vars[t]] = caps[t] / base + extra;
        }
      }

      // Flow definitions.
      br.flow = qp.rows.size();
      for (auto l : br.lines) {
        const auto& ln = c.lines[l];
        for (int end = 0; end < 2; ++end) {
          const auto n = end == 0 ? from[l] : to[l];
          const auto m = end == 0 ? to[l] : from[l];
          for (int reactive = 0; reactive < 2; ++reactive) {
            ConstraintRow row;
            row.lo = row.hi = 0.0;
            row.fn.add_linear(reactive ? L.q(b, l, end) : L.p(b, l, end), 1.0);
            detail::add_flow_expression(row.fn, reactive != 0, -1.0, L.e(b, n),
                                        L.f(b, n), L.e(b, m), L.f(b, m), ln.g,
                                        ln.b);
            row.fn.compress();
            qp.rows.push_back(std::move(row));
          }
        }
      }

      // Nodal balances.
      br.balance_p = qp.rows.size();
      for (int reactive = 0; reactive < 2; ++reactive) {
        if (reactive) br.balance_q = qp.rows.size();
        for (std::size_t n = 0; n < nb; ++n) {
          ConstraintRow row;
          row.lo = row.hi = 0.0;
          auto& fn = row.fn;
          if (!reactive) {
            fn.constant = (prof.res_p[n] - prof.demand_p[n]) / base;
            fn.add_linear(L.rc(b, n), -1.0);
            fn.add_linear(L.lc(b, n), 1.0);
          } else {
            fn.constant = -prof.demand_q[n] / base;
          }
          for (std::size_t g = 0; g < gen_bus.size(); ++g) {
            if (gen_bus[g] == n) fn.add_linear(reactive ? L.qg(b, g) : L.pg(b, g), 1.0);
          }
          for (std::size_t fl = 0; fl < flex_bus.size(); ++fl) {
            if (flex_bus[fl] != n) continue;
            fn.add_linear(reactive ? L.q_up(b, fl) : L.p_up(b, fl), 1.0);
            fn.add_linear(reactive ? L.q_dn(b, fl) : L.p_dn(b, fl), -1.0);
          }
          for (auto l : br.lines) {
            if (from[l] == n) fn.add_linear(reactive ? L.q(b, l, 0) : L.p(b, l, 0), -1.0);
            if (to[l] == n) fn.add_linear(reactive ? L.q(b, l, 1) : L.p(b, l, 1), -1.0);
          }
          qp.rows.push_back(std::move(row));
        }
      }

      // Thermal limits p^2 + q^2 - (S + LI)^2 <= 0 at both ends.
      br.thermal = qp.rows.size();
      for (auto l : br.lines) {
        const double smax = c.lines[l].s_max / base;
        for (int end = 0; end < 2; ++end) {
          ConstraintRow row;
          row.hi = 0.0;
          auto& fn = row.fn;
          fn.add_quad(L.p(b, l, end), L.p(b, l, end), 1.0);
          fn.add_quad(L.q(b, l, end), L.q(b, l, end), 1.0);
          fn.constant = -smax * smax;
          if (L.has_li(l)) {
            fn.add_quad(L.li(l), L.li(l), -1.0);
            fn.add_linear(L.li(l), -2.0 * smax);
          }
          qp.rows.push_back(std::move(row));
        }
      }

      // Voltage magnitude.
      br.voltage = qp.rows.size();
      for (std::size_t n = 0; n < nb; ++n) {
        ConstraintRow row;
        row.lo = c.buses[n].v_min * c.buses[n].v_min;
        row.hi = c.buses[n].v_max * c.buses[n].v_max;
        row.fn.add_quad(L.e(b, n), L.e(b, n), 1.0);
        row.fn.add_quad(L.f(b, n), L.f(b, n), 1.0);
        qp.rows.push_back(std::move(row));
      }

      // Flex caps relaxed by FI: x - FI <= base capacity.
      br.flex_cap = qp.rows.size();
      for (std::size_t fl = 0; fl < c.flex_providers.size(); ++fl) {
        if (!L.has_fi(fl)) continue;
        const auto& fp = c.flex_providers[fl];
        const std::size_t vars[4] = {L.p_up(b, fl), L.p_dn(b, fl),
                                     L.q_up(b, fl), L.q_dn(b, fl)};
        const double caps[4] = {fp.p_up_base, fp.p_dn_base, fp.q_up_base,
                                fp.q_dn_base};
        for (int t = 0; t < 4; ++t) {
          ConstraintRow row;
          row.hi = caps[t] / base;
          row.fn.add_linear(vars[t], 1.0);
          row.fn.add_linear(L.fi(fl), -1.0);
          qp.rows.push_back(std::move(row));
        }
      }
      br.end = qp.rows.size();
      out.block_rows.push_back(std::move(br));

      // Objective contributions of this block.
      if (objective == ObjectiveKind::MinCurtailment) {
        for (std::size_t n = 0; n < nb; ++n) obj.add_linear(L.lc(b, n), base);
      } else {
        for (std::size_t g = 0; g < c.generators.size(); ++g) {
          const auto& gen = c.generators[g];
          obj.constant += weight * gen.cost_c0;
          obj.add_linear(L.pg(b, g), weight * gen.cost_c1 * base);
          obj.add_quad(L.pg(b, g), L.pg(b, g), weight * gen.cost_c2 * base * base);
        }
        for (std::size_t n = 0; n < nb; ++n) {
          obj.add_linear(L.lc(b, n), weight * c.c_curt_load * base);
          obj.add_linear(L.rc(b, n), weight * c.c_curt_res * base);
        }
        for (std::size_t fl = 0; fl < c.flex_providers.size(); ++fl) {
          const double cf = weight * c.flex_providers[fl].c_flex * base;
          obj.add_linear(L.p_up(b, fl), cf);
          obj.add_linear(L.p_dn(b, fl), cf);
        }
      }
    }
  }

  if (objective == ObjectiveKind::MinExpectedCost) {
    for (std::size_t l = 0; l < c.lines.size(); ++l) {
      if (L.has_li(l)) obj.add_linear(L.li(l), c.lines[l].c_inv * base);
    }
    for (std::size_t fl = 0; fl < c.flex_providers.size(); ++fl) {
      if (L.has_fi(fl)) obj.add_linear(L.fi(fl), c.flex_providers[fl].c_inv * base);
    }
  }
  return out;
}

/// Closed-form sizes; must agree with build_nlp.
struct ProblemSize {
  std::size_t vars = 0;
  std::size_t rows = 0;
};

inline ProblemSize expected_size(const NetworkCase& c) {
  const std::size_t N = c.buses.size();
  const std::size_t Ln = c.lines.size();
  const std::size_t G = c.generators.size();
  const std::size_t F = c.flex_providers.size();
  const std::size_t S = c.scenarios.size();
  std::size_t lr = 0;
  std::size_t fr = 0;
  for (const auto& o : c.options) (o.is_line() ? lr : fr) += 1;
  ProblemSize sz;
  sz.vars = S * c.states.size() * (4 * N + 4 * Ln + 2 * G + 4 * F) + lr + fr;
  for (const auto& st : c.states) {
    const std::size_t lk = Ln - (st.outaged_line ? 1 : 0);
    sz.rows += S * (6 * lk + 3 * N + 4 * fr);
  }
  return sz;
}

/// Row values g(x) in declared order. Equality rows are zero at a feasible
/// point; inequality rows are compared against their bounds.
inline std::vector<double> eval_constraints(const SctepProblem& p,
                                            std::span<const double> x) {
  return row_values(p.qp, x);
}

inline ObjectiveEval eval_objective(const SctepProblem& p,
                                    std::span<const double> x) {
  return eval_objective(p.qp, x);
}

/// Flat start: e = 1, f = 0, generators at the midpoint of their ranges and
/// everything else at zero. The solver moves the point inside the bounds.
inline std::vector<double> flat_start(const SctepProblem& p) {
  const auto& L = p.layout;
  std::vector<double> x(L.num_vars(), 0.0);
  for (std::size_t b = 0; b < L.num_blocks(); ++b) {
    for (std::size_t n = 0; n < L.num_buses(); ++n) x[L.e(b, n)] = 1.0;
    for (std::size_t g = 0; g < L.num_generators(); ++g) {
      x[L.pg(b, g)] = 0.5 * (p.qp.x_lo[L.pg(b, g)] + p.qp.x_hi[L.pg(b, g)]);
      x[L.qg(b, g)] = 0.5 * (p.qp.x_lo[L.qg(b, g)] + p.qp.x_hi[L.qg(b, g)]);
    }
  }
  return x;
}

/// Descriptive name of variable `v`, e.g. "e[s0,k2,bus3]".
inline std::string variable_name(const NetworkCase& c, const SctepProblem& p,
                                 std::size_t v) {
  const auto& L = p.layout;
  const std::size_t bs = L.block_size();
  if (v >= L.num_blocks() * bs) {
    for (std::size_t l = 0; l < c.lines.size(); ++l) {
      if (L.has_li(l) && L.li(l) == v) return "LI[line" + std::to_string(c.lines[l].id) + "]";
    }
    for (std::size_t fl = 0; fl < c.flex_providers.size(); ++fl) {
      if (L.has_fi(fl) && L.fi(fl) == v) {
        return "FI[flex" + std::to_string(c.flex_providers[fl].id) + "]";
      }
    }
    return "x" + std::to_string(v);
  }
  const std::size_t b = v / bs;
  const std::size_t s = b / L.num_states();
  const std::size_t k = b % L.num_states();
  std::size_t r = v % bs;
  const std::string tag = "[s" + std::to_string(c.scenarios[s].id) + ",k" +
                          std::to_string(c.states[k].k) + ",";
  const std::size_t N = L.num_buses();
  const std::size_t Ln = L.num_lines();
  const std::size_t G = L.num_generators();
  const std::size_t F = L.num_flex();
  auto bus = [&](std::size_t i) { return "bus" + std::to_string(c.buses[i].id) + "]"; };
  auto line = [&](std::size_t i) { return "line" + std::to_string(c.lines[i].id) + "]"; };
  auto gen = [&](std::size_t i) { return "gen" + std::to_string(c.generators[i].id) + "]"; };
  auto flex = [&](std::size_t i) {
    return "flex" + std::to_string(c.flex_providers[i].id) + "]";
  };
  if (r < N) return "e" + tag + bus(r);
  r -= N;
  if (r < N) return "f" + tag + bus(r);
  r -= N;
  static const char* flows[4] = {"p_ft", "q_ft", "p_tf", "q_tf"};
  if (r < 4 * Ln) return flows[r / Ln] + tag + line(r % Ln);
  r -= 4 * Ln;
  if (r < G) return "Pg" + tag + gen(r);
  r -= G;
  if (r < G) return "Qg" + tag + gen(r);
  r -= G;
  static const char* flexes[4] = {"Pup", "Pdn", "Qup", "Qdn"};
  if (r < 4 * F) return flexes[r / F] + tag + flex(r % F);
  r -= 4 * F;
  if (r < N) return "LC" + tag + bus(r);
  r -= N;
  return "RC" + tag + bus(r);
}

/// Plain-text dump for cross-checking against external modeling tools:
///
///   sctep-nlp 1
///   vars <n>
///   <index> <name> <lo> <hi>
///   rows <m>
///   <index> <lo> <hi> : <constant> {+ <coef> x<i>} {+ <coef> x<i>*x<j>}
///   objective : <same polynomial syntax>
///
/// Infinite bounds are written as -inf / inf.
inline void dump_nlp(const NetworkCase& c, const SctepProblem& p,
                     std::ostream& os) {
  auto num = [](double v) {
    if (std::isinf(v)) return std::string(v < 0 ? "-inf" : "inf");
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
  };
  auto poly = [&](const QuadraticFunction& fn) {
    std::string s = num(fn.constant);
    for (const auto& t : fn.linear) s += " + " + num(t.coef) + " x" + std::to_string(t.var);
    for (const auto& t : fn.quad) {
      s += " + " + num(t.coef) + " x" + std::to_string(t.i) + "*x" + std::to_string(t.j);
    }
    return s;
  };
  os << "sctep-nlp 1\n";
  os << "objective-kind " << to_string(p.objective) << '\n';
  os << "vars " << p.qp.num_vars() << '\n';
  for (std::size_t v = 0; v < p.qp.num_vars(); ++v) {
    os << v << ' ' << variable_name(c, p, v) << ' ' << num(p.qp.x_lo[v]) << ' '
       << num(p.qp.x_hi[v]) << '\n';
  }
  os << "rows " << p.qp.num_rows() << '\n';
  for (std::size_t r = 0; r < p.qp.num_rows(); ++r) {
    const auto& row = p.qp.rows[r];
    os << r << ' ' << num(row.lo) << ' ' << num(row.hi) << " : " << poly(row.fn) << '\n';
  }
  os << "objective : " << poly(p.qp.objective) << '\n';
}

}  // namespace sctep
