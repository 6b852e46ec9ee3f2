#pragma once

// Cooperative game over investment options. Players are a subset of the
// case's options; coalitions over players are bitmasks in player order and
// are translated to option-space coalitions only when a solve is needed.
//
// Characteristic values are reductions against the empty coalition, so both
// metrics read "larger is better" and v(empty) = 0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sctep/formulation.hpp"
#include "sctep/ipm_solver.hpp"
#include "sctep/network_case.hpp"

namespace sctep {

class GameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Metric { AvoidedCurtailment, ExpectedCostReduction };

inline const char* to_string(Metric m) {
  return m == Metric::AvoidedCurtailment ? "curtailment" : "cost";
}

inline std::optional<Metric> metric_from_string(const std::string& s) {
  if (s == "curtailment") return Metric::AvoidedCurtailment;
  if (s == "cost") return Metric::ExpectedCostReduction;
  return std::nullopt;
}

inline ObjectiveKind objective_for(Metric m) {
  return m == Metric::AvoidedCurtailment ? ObjectiveKind::MinCurtailment
                                         : ObjectiveKind::MinExpectedCost;
}

/// Solver settings for characteristic values. Unused investment variables
/// end at a distance of order mu from zero and still pay their investment
/// cost; at kkt_tol 1e-6 that residue (~1e-3 EUR/h per option) exceeds the
/// absolute tolerance applied to values near zero, so games solve tighter.
inline SolverSettings game_settings() {
  SolverSettings s;
  s.kkt_tol = 1e-8;
  s.keep_trace = false;
  return s;
}

/// Outcome of one SCTEP solve for an option-space coalition.
struct SolveRecord {
  Coalition coalition;  // option space
  double objective = 0.0;
  SolveStatus status = SolveStatus::NumericalFailure;
  int iterations = 0;
  // Option-space coalition whose solution seeded this one; empty for flat
  // start.
  std::optional<Coalition> warm_from;

  [[nodiscard]] bool ok() const { return status == SolveStatus::Optimal; }
};

/// Concurrent map from option-space coalition to solve record. Plain inserts
/// keep the first record; `improve` replaces a record only with a strictly
/// lower objective.
class ValueStore {
 public:
  bool insert(const SolveRecord& r) {
    std::lock_guard lock(mu_);
    return map_.emplace(r.coalition.bits, r).second;
  }
  bool improve(const SolveRecord& r) {
    std::lock_guard lock(mu_);
    auto it = map_.find(r.coalition.bits);
    if (it == map_.end()) {
      map_.emplace(r.coalition.bits, r);
      return true;
    }
    if (!r.ok() || (it->second.ok() && r.objective >= it->second.objective)) return false;
    it->second = r;
    return true;
  }
  [[nodiscard]] std::optional<SolveRecord> find(Coalition c) const {
    std::lock_guard lock(mu_);
    auto it = map_.find(c.bits);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }
  [[nodiscard]] bool contains(Coalition c) const {
    std::lock_guard lock(mu_);
    return map_.count(c.bits) != 0;
  }
  [[nodiscard]] std::size_t size() const {
    std::lock_guard lock(mu_);
    return map_.size();
  }
  /// Records ordered by coalition bits.
  [[nodiscard]] std::vector<SolveRecord> snapshot() const {
    std::lock_guard lock(mu_);
    std::vector<SolveRecord> out;
    out.reserve(map_.size());
    for (const auto& [k, v] : map_) out.push_back(v);
    return out;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::uint64_t, SolveRecord> map_;
};

/// Characteristic function over player-space coalitions.
class ValueTable {
 public:
  explicit ValueTable(std::size_t players = 0) : n_(players) {
    if (players > 63) throw GameError("at most 63 players");
  }
  [[nodiscard]] std::size_t players() const { return n_; }
  void set(Coalition s, double v) { values_[s.bits] = v; }
  [[nodiscard]] bool has(Coalition s) const { return values_.count(s.bits) != 0; }
  [[nodiscard]] double at(Coalition s) const {
    auto it = values_.find(s.bits);
    if (it == values_.end()) {
      throw GameError("missing value for coalition " + std::to_string(s.bits));
    }
    return it->second;
  }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] const std::map<std::uint64_t, double>& values() const { return values_; }

 private:
  std::size_t n_;
  std::map<std::uint64_t, double> values_;
};

/// v(S u {i}) - v(S).
inline double marginal_contribution(const ValueTable& v, std::size_t i, Coalition s) {
  if (i >= v.players()) throw GameError("player index out of range");
  if (s.contains(i)) throw GameError("player already in coalition");
  return v.at(s.with(i)) - v.at(s);
}

/// Shapley weight |S|! (n-|S|-1)! / n! = 1 / (n * C(n-1, |S|)).
inline double shapley_weight(std::size_t n, std::size_t s) {
  double c = 1.0;
  for (std::size_t k = 1; k <= s; ++k) {
    c = c * static_cast<double>(n - 1 - s + k) / static_cast<double>(k);
  }
  return 1.0 / (static_cast<double>(n) * c);
}

inline std::vector<double> shapley_exact(const ValueTable& v) {
  const std::size_t n = v.players();
  if (n == 0) return {};
  const std::uint64_t full = std::uint64_t{1} << n;
  if (v.size() < full) {
    throw GameError("exact Shapley needs all " + std::to_string(full) +
                    " coalition values, store has " + std::to_string(v.size()));
  }
  std::vector<double> weight(n);
  for (std::size_t s = 0; s < n; ++s) weight[s] = shapley_weight(n, s);
  std::vector<double> sh(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint64_t bits = 0; bits < full; ++bits) {
      const Coalition s{bits};
      if (s.contains(i)) continue;
      sh[i] += weight[static_cast<std::size_t>(s.size())] * (v.at(s.with(i)) - v.at(s));
    }
  }
  return sh;
}

/// Random player orders for permutation sampling; deterministic per seed.
inline std::vector<std::vector<std::size_t>> sample_permutations(std::size_t n,
                                                                 std::size_t m,
                                                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> out(m, std::vector<std::size_t>(n));
  for (auto& perm : out) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    // Fisher-Yates with explicit draws so the sequence does not depend on
    // the standard library's shuffle.
    for (std::size_t k = n; k > 1; --k) {
      const std::size_t j = static_cast<std::size_t>(rng() % k);
      std::swap(perm[k - 1], perm[j]);
    }
  }
  return out;
}

/// Every coalition visited as a prefix (before and after each player).
inline std::vector<Coalition> prefix_coalitions(
    const std::vector<std::vector<std::size_t>>& perms) {
  std::vector<std::uint64_t> bits;
  for (const auto& perm : perms) {
    Coalition s;
    bits.push_back(s.bits);
    for (auto i : perm) {
      s = s.with(i);
      bits.push_back(s.bits);
    }
  }
  std::sort(bits.begin(), bits.end());
  bits.erase(std::unique(bits.begin(), bits.end()), bits.end());
  std::vector<Coalition> out;
  for (auto b : bits) out.push_back(Coalition{b});
  return out;
}

struct SampledShapley {
  std::vector<double> mean;
  std::vector<double> std_error;
  std::size_t permutations = 0;
};

/// Mean and standard error of prefix marginal contributions over `perms`.
inline SampledShapley shapley_from_permutations(
    std::size_t n, const std::vector<std::vector<std::size_t>>& perms,
    const std::function<double(Coalition)>& v) {
  SampledShapley out;
  out.permutations = perms.size();
  out.mean.assign(n, 0.0);
  out.std_error.assign(n, 0.0);
  if (perms.empty()) return out;
  std::vector<double> sum(n, 0.0);
  std::vector<double> sumsq(n, 0.0);
  for (const auto& perm : perms) {
    Coalition s;
    double prev = v(s);
    for (auto i : perm) {
      s = s.with(i);
      const double cur = v(s);
      const double mc = cur - prev;
      sum[i] += mc;
      sumsq[i] += mc * mc;
      prev = cur;
    }
  }
  const double m = static_cast<double>(perms.size());
  for (std::size_t i = 0; i < n; ++i) {
    out.mean[i] = sum[i] / m;
    if (perms.size() > 1) {
      const double var = std::max(0.0, (sumsq[i] - m * out.mean[i] * out.mean[i]) / (m - 1.0));
      out.std_error[i] = std::sqrt(var / m);
    }
  }
  return out;
}

/// Permutation-sampled Shapley values of a known characteristic function.
inline SampledShapley shapley_sampled(std::size_t n, std::size_t m, std::uint64_t seed,
                                      const std::function<double(Coalition)>& v) {
  if (m == 0) throw GameError("sample count must be at least 1");
  return shapley_from_permutations(n, sample_permutations(n, m, seed), v);
}

// ---- solver-backed game ----------------------------------------------------

struct Player {
  std::size_t option = 0;  // index into NetworkCase::options
  int id = 0;
  std::string label;
};

inline std::vector<Player> all_players(const NetworkCase& c) {
  std::vector<Player> out;
  for (std::size_t i = 0; i < c.options.size(); ++i) {
    out.push_back({i, c.options[i].id, c.option_label(c.options[i])});
  }
  return out;
}

inline std::vector<Player> players_from_ids(const NetworkCase& c, const std::vector<int>& ids) {
  std::vector<Player> out;
  for (int id : ids) {
    const auto idx = c.option_index(id);
    if (!idx) throw GameError("unknown option id " + std::to_string(id));
    for (const auto& p : out) {
      if (p.id == id) throw GameError("duplicate player id " + std::to_string(id));
    }
    out.push_back({*idx, id, c.option_label(c.options[*idx])});
  }
  return out;
}

/// Player-space coalition to option-space coalition.
inline Coalition to_options(const std::vector<Player>& players, Coalition s) {
  Coalition out;
  for (std::size_t i = 0; i < players.size(); ++i) {
    if (s.contains(i)) out = out.with(players[i].option);
  }
  return out;
}

/// Solves single coalitions of one case under one metric.
class CoalitionEvaluator {
 public:
  CoalitionEvaluator(const NetworkCase& c, Metric metric, SolverSettings settings)
      : case_(c), metric_(metric), settings_(std::move(settings)) {
    settings_.keep_trace = false;
    settings_.on_iteration = nullptr;
  }

  [[nodiscard]] Metric metric() const { return metric_; }
  [[nodiscard]] const NetworkCase& network() const { return case_; }
  [[nodiscard]] const SolverSettings& settings() const { return settings_; }

  /// Flat-start solve.
  [[nodiscard]] SolveRecord evaluate(Coalition options) const {
    return run(options, std::nullopt).first;
  }

  /// Solve and keep the full result (for warm starts and reporting).
  [[nodiscard]] std::pair<SolveRecord, SolveResult> run(
      Coalition options, const std::optional<std::pair<Coalition, SolveResult>>& warm) const {
    const auto p = build_nlp(case_, options, objective_for(metric_));
    InitialPoint init = warm ? warm_start_from(warm->second, p.qp)
                             : InitialPoint{flat_start(p), std::nullopt};
    SolveResult r = solve(p.qp, settings_, init);
    SolveRecord rec;
    rec.coalition = options;
    rec.objective = r.objective;
    rec.status = r.status;
    rec.iterations = r.iterations;
    if (warm) rec.warm_from = warm->first;
    return {rec, std::move(r)};
  }

 private:
  const NetworkCase& case_;
  Metric metric_;
  SolverSettings settings_;
};

struct CharacteristicValue {
  Coalition coalition;  // player space
  double value = 0.0;
  double objective = 0.0;
  SolveStatus status = SolveStatus::Optimal;
  bool repaired = false;  // value came from a warm-started re-solve
};

/// Value of an option-space coalition against a known baseline objective.
/// Failed solves keep their status and a zero value.
inline CharacteristicValue characteristic_value(const CoalitionEvaluator& ev, Coalition options,
                                                double baseline_objective) {
  if (options.bits == 0) return {options, 0.0, baseline_objective, SolveStatus::Optimal, false};
  const auto r = ev.evaluate(options);
  return {options, r.ok() ? baseline_objective - r.objective : 0.0, r.objective, r.status, false};
}

struct McSample {
  Coalition coalition;  // S, without the player
  double value = 0.0;
};

struct MonotonicityViolation {
  Coalition smaller;  // player space
  std::size_t player = 0;
  double drop = 0.0;  // v(S) - v(S u {i}) > 0
};

struct Estimator {
  bool exact = true;
  std::size_t samples = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const Estimator&, const Estimator&) = default;
};

struct GameResult {
  Metric metric = Metric::AvoidedCurtailment;
  std::vector<Player> players;
  Estimator estimator;
  double baseline_objective = 0.0;
  std::vector<CharacteristicValue> values;  // ordered by coalition bits
  std::vector<std::vector<McSample>> mc;    // per player, ordered by coalition bits
  std::vector<double> shapley;
  std::vector<double> std_error;  // sampled estimator only
  std::vector<double> individual;
  std::vector<double> grand_marginal;
  std::vector<MonotonicityViolation> violations;
};

/// Tolerance used to flag a drop in value between nested coalitions.
inline double monotonicity_tolerance(double v_larger) {
  return 1e-4 * std::max(1.0, std::abs(v_larger));
}

/// Characteristic values of the listed player-space coalitions from solver
/// records. Throws if the baseline or any coalition is missing or failed.
inline ValueTable value_table(const std::vector<Player>& players, const ValueStore& store,
                              const std::vector<Coalition>& coalitions) {
  const auto base = store.find(Coalition{});
  if (!base || !base->ok()) throw GameError("baseline (empty coalition) not solved");
  ValueTable t(players.size());
  std::vector<std::string> missing;
  for (auto s : coalitions) {
    const auto rec = store.find(to_options(players, s));
    if (!rec || !rec->ok()) {
      missing.push_back(std::to_string(s.bits));
      continue;
    }
    t.set(s, s.bits == 0 ? 0.0 : base->objective - rec->objective);
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " coalition(s) unsolved or failed:";
    for (std::size_t k = 0; k < missing.size() && k < 10; ++k) msg += " " + missing[k];
    throw GameError(msg);
  }
  return t;
}

inline std::vector<Coalition> all_coalitions(std::size_t n) {
  std::vector<Coalition> out;
  for (std::uint64_t b = 0; b < (std::uint64_t{1} << n); ++b) out.push_back(Coalition{b});
  return out;
}

/// Nested pairs (S, i) with v(S u {i}) below v(S) by more than the tolerance.
inline std::vector<MonotonicityViolation> find_violations(const ValueTable& v) {
  std::vector<MonotonicityViolation> out;
  const std::size_t n = v.players();
  for (const auto& [bits, val] : v.values()) {
    const Coalition s{bits};
    for (std::size_t i = 0; i < n; ++i) {
      if (s.contains(i) || !v.has(s.with(i))) continue;
      const double larger = v.at(s.with(i));
      if (larger < val - monotonicity_tolerance(larger)) {
        out.push_back({s, i, val - larger});
      }
    }
  }
  return out;
}

/// Re-solves the larger coalition of each violating pair from the solution of
/// the smaller one (its point stays feasible when bounds only widen) and
/// keeps the better objective. Runs sequentially in coalition order, so the
/// outcome does not depend on how the initial values were computed.
/// Returns the number of improved records; `on_improve` sees each one.
inline std::size_t repair_monotonicity(const CoalitionEvaluator& ev,
                                       const std::vector<Player>& players, ValueStore& store,
                                       const std::vector<Coalition>& coalitions,
                                       int max_passes = 3,
                                       const std::function<void(const SolveRecord&)>& on_improve = {}) {
  // Solutions are not stored, so a seed is reproduced by replaying the
  // record's warm-start chain; solves are deterministic.
  std::map<std::uint64_t, SolveResult> cache;
  std::function<const SolveResult*(Coalition, int)> reproduce =
      [&](Coalition c, int depth) -> const SolveResult* {
    if (auto it = cache.find(c.bits); it != cache.end()) return &it->second;
    const auto rec = store.find(c);
    std::optional<std::pair<Coalition, SolveResult>> warm;
    if (rec && rec->warm_from && depth < 64) {
      const SolveResult* s = reproduce(*rec->warm_from, depth + 1);
      if (s) warm = std::make_pair(*rec->warm_from, *s);
    }
    auto [r, res] = ev.run(c, warm);
    if (!r.ok()) return nullptr;
    return &cache.emplace(c.bits, std::move(res)).first->second;
  };

  std::size_t improved = 0;
  for (int pass = 0; pass < max_passes; ++pass) {
    const auto viol = find_violations(value_table(players, store, coalitions));
    if (viol.empty()) break;
    std::size_t this_pass = 0;
    for (const auto& vi : viol) {
      const Coalition small = to_options(players, vi.smaller);
      const Coalition large = to_options(players, vi.smaller.with(vi.player));
      const SolveResult* seed = reproduce(small, 0);
      if (!seed) continue;
      auto [rec, res] = ev.run(large, std::make_pair(small, *seed));
      if (store.improve(rec)) {
        ++improved;
        ++this_pass;
        cache.erase(large.bits);
        if (on_improve) on_improve(rec);
      }
    }
    if (this_pass == 0) break;
  }
  return improved;
}

/// Builds the GameResult from a complete exact store.
inline GameResult assemble_exact(Metric metric, const std::vector<Player>& players,
                                 const ValueStore& store) {
  const std::size_t n = players.size();
  const auto coalitions = all_coalitions(n);
  const ValueTable v = value_table(players, store, coalitions);
  GameResult g;
  g.metric = metric;
  g.players = players;
  g.baseline_objective = store.find(Coalition{})->objective;
  for (auto s : coalitions) {
    const auto rec = store.find(to_options(players, s));
    g.values.push_back({s, v.at(s), rec->objective, rec->status, rec->warm_from.has_value()});
  }
  g.mc.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    for (auto s : coalitions) {
      if (!s.contains(i)) g.mc[i].push_back({s, marginal_contribution(v, i, s)});
    }
  }
  g.shapley = shapley_exact(v);
  const Coalition grand = Coalition::all(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.individual.push_back(v.at(Coalition{}.with(i)));
    g.grand_marginal.push_back(v.at(grand) - v.at(grand.without(i)));
  }
  g.violations = find_violations(v);
  return g;
}

/// Builds the GameResult for the sampled estimator. MC samples are the
/// distinct (S, i) pairs visited by the permutations.
inline GameResult assemble_sampled(Metric metric, const std::vector<Player>& players,
                                   const ValueStore& store, std::size_t m,
                                   std::uint64_t seed) {
  const std::size_t n = players.size();
  const auto perms = sample_permutations(n, m, seed);
  auto coalitions = prefix_coalitions(perms);
  const Coalition grand = Coalition::all(n);
  for (std::size_t i = 0; i < n; ++i) {
    coalitions.push_back(Coalition{}.with(i));
    coalitions.push_back(grand.without(i));
  }
  std::sort(coalitions.begin(), coalitions.end());
  coalitions.erase(std::unique(coalitions.begin(), coalitions.end()), coalitions.end());
  const ValueTable v = value_table(players, store, coalitions);

  GameResult g;
  g.metric = metric;
  g.players = players;
  g.estimator = {false, m, seed};
  g.baseline_objective = store.find(Coalition{})->objective;
  for (auto s : coalitions) {
    const auto rec = store.find(to_options(players, s));
    g.values.push_back({s, v.at(s), rec->objective, rec->status, rec->warm_from.has_value()});
  }
  const auto est = shapley_from_permutations(n, perms, [&](Coalition s) { return v.at(s); });
  g.shapley = est.mean;
  g.std_error = est.std_error;
  g.mc.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    for (auto s : coalitions) {
      if (!s.contains(i) && v.has(s.with(i))) {
        g.mc[i].push_back({s, marginal_contribution(v, i, s)});
      }
    }
    g.individual.push_back(v.at(Coalition{}.with(i)));
    g.grand_marginal.push_back(v.at(grand) - v.at(grand.without(i)));
  }
  g.violations = find_violations(v);
  return g;
}

/// Coalitions needed by an estimator, in player space.
inline std::vector<Coalition> plan_for(std::size_t n, const Estimator& est) {
  if (est.exact) return all_coalitions(n);
  auto c = prefix_coalitions(sample_permutations(n, est.samples, est.seed));
  const Coalition grand = Coalition::all(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.push_back(Coalition{}.with(i));
    c.push_back(grand.without(i));
  }
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

struct ScreenEntry {
  Player player;
  double value = 0.0;
  SolveStatus status = SolveStatus::Optimal;
  bool tied = false;  // equal value to a neighbour in the ranking
};

/// Ranks options by their single-player value, descending. Values within
/// `tol` of their neighbour form a tie group, ordered by option id and
/// flagged. The default tolerance is 1e-6 of the baseline objective.
inline std::vector<ScreenEntry> rank_options(const std::vector<Player>& players,
                                             const ValueStore& store,
                                             std::optional<double> tol = std::nullopt) {
  const auto base = store.find(Coalition{});
  if (!base || !base->ok()) throw GameError("baseline (empty coalition) not solved");
  const double eps = tol.value_or(1e-6 * std::max(1.0, std::abs(base->objective)));
  std::vector<ScreenEntry> out;
  for (std::size_t i = 0; i < players.size(); ++i) {
    const auto rec = store.find(Coalition{}.with(players[i].option));
    if (!rec) throw GameError("option " + std::to_string(players[i].id) + " not solved");
    out.push_back({players[i], rec->ok() ? base->objective - rec->objective : 0.0,
                   rec->status, false});
  }
  std::stable_sort(out.begin(), out.end(), [](const ScreenEntry& a, const ScreenEntry& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.player.id < b.player.id;
  });
  for (std::size_t lo = 0; lo < out.size();) {
    std::size_t hi = lo + 1;
    while (hi < out.size() && out[hi - 1].value - out[hi].value <= eps) ++hi;
    if (hi - lo > 1) {
      std::stable_sort(out.begin() + static_cast<std::ptrdiff_t>(lo),
                       out.begin() + static_cast<std::ptrdiff_t>(hi),
                       [](const ScreenEntry& a, const ScreenEntry& b) {
                         return a.player.id < b.player.id;
                       });
      for (std::size_t k = lo; k < hi; ++k) out[k].tied = true;
    }
    lo = hi;
  }
  return out;
}

}  // namespace sctep
