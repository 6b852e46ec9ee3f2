#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sctep/coalition_game.hpp"
#include "test_support.hpp"

using namespace sctep;

namespace {

ValueTable table_from(std::size_t n, const std::function<double(Coalition)>& f) {
  ValueTable t(n);
  for (auto s : all_coalitions(n)) t.set(s, f(s));
  return t;
}

// Left glove for player 0, right gloves for 1 and 2. A pair is worth 1.
double glove(Coalition s) { return s.contains(0) && (s.contains(1) || s.contains(2)) ? 1.0 : 0.0; }

// Average marginal contribution over all n! orderings.
std::vector<double> brute_force_shapley(const ValueTable& v) {
  const std::size_t n = v.players();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<long double> acc(n, 0.0L);
  long double count = 0.0L;
  do {
    Coalition s;
    for (auto i : perm) {
      acc[i] += static_cast<long double>(v.at(s.with(i))) - static_cast<long double>(v.at(s));
      s = s.with(i);
    }
    count += 1.0L;
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(acc[i] / count);
  return out;
}

// Monotone game: each coalition is worth at least every subset one player
// smaller, plus a random non-negative increment.
ValueTable random_monotone(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ValueTable t(n);
  t.set(Coalition{}, 0.0);
  for (std::uint64_t b = 1; b < (std::uint64_t{1} << n); ++b) {
    const Coalition s{b};
    double base = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (s.contains(i)) base = std::max(base, t.at(s.without(i)));
    }
    t.set(s, base + u(rng));
  }
  return t;
}

std::vector<Player> synthetic_players(std::size_t n) {
  std::vector<Player> p;
  for (std::size_t i = 0; i < n; ++i) p.push_back({i, static_cast<int>(i + 1), "P" + std::to_string(i + 1)});
  return p;
}

// Store whose objectives reproduce `v` against a baseline objective of 1000.
void fill_store(ValueStore& st, const ValueTable& v) {
  for (const auto& [bits, val] : v.values()) {
    st.insert({Coalition{bits}, 1000.0 - val, SolveStatus::Optimal, 10, std::nullopt});
  }
}

}  // namespace

TEST(Shapley, GloveGame) {
  const auto sh = shapley_exact(table_from(3, glove));
  EXPECT_NEAR(sh[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(sh[1], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(sh[2], 1.0 / 6.0, 1e-15);
}

TEST(Shapley, GloveMarginalContributions) {
  const auto v = table_from(3, glove);
  EXPECT_EQ(marginal_contribution(v, 0, Coalition{0b010}), 1.0);
  EXPECT_EQ(marginal_contribution(v, 2, Coalition{0b011}), 0.0);
  EXPECT_EQ(marginal_contribution(v, 1, Coalition{}), 0.0);
}

TEST(Shapley, MarginalContributionIsDifference) {
  ValueTable v(2);
  v.set(Coalition{}, 0.0);
  v.set(Coalition{0b01}, 2.0);
  v.set(Coalition{0b10}, 1.0);
  v.set(Coalition{0b11}, 5.0);
  EXPECT_EQ(marginal_contribution(v, 1, Coalition{0b01}), 3.0);
}

TEST(Shapley, AdditiveGameReturnsWeights) {
  const std::vector<double> a = {3.0, -1.0, 0.5, 7.25};
  const auto v = table_from(4, [&](Coalition s) {
    double t = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) t += s.contains(i) ? a[i] : 0.0;
    return t;
  });
  const auto sh = shapley_exact(v);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(sh[i], a[i], 1e-14);
}

TEST(Shapley, SymmetricGameSplitsEvenly) {
  const auto v = table_from(5, [](Coalition s) {
    const double k = s.size();
    return k * k;
  });
  const auto sh = shapley_exact(v);
  for (double x : sh) EXPECT_NEAR(x, 25.0 / 5.0, 1e-13);
}

TEST(Shapley, WeightsSumToOnePerPlayer) {
  for (std::size_t n = 1; n <= 12; ++n) {
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      double binom = 1.0;
      for (std::size_t k = 1; k <= s; ++k) binom = binom * static_cast<double>(n - 1 - s + k) / k;
      total += binom * shapley_weight(n, s);
    }
    EXPECT_NEAR(total, 1.0, 1e-13) << n;
  }
}

TEST(Shapley, MatchesPermutationOracle) {
  std::mt19937_64 rng(2024);
  for (std::size_t n = 1; n <= 8; ++n) {
    for (int trial = 0; trial < 3; ++trial) {
      const auto v = random_monotone(n, rng);
      const auto got = shapley_exact(v);
      const auto want = brute_force_shapley(v);
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(got[i], want[i], 1e-12) << n;
    }
  }
}

TEST(Shapley, Efficiency) {
  std::mt19937_64 rng(9);
  for (std::size_t n = 2; n <= 8; ++n) {
    const auto v = random_monotone(n, rng);
    const auto sh = shapley_exact(v);
    const double sum = std::accumulate(sh.begin(), sh.end(), 0.0);
    const double grand = v.at(Coalition::all(n));
    EXPECT_NEAR(sum, grand, 1e-12 * std::max(1.0, grand));
  }
}

TEST(Shapley, DummyGetsZero) {
  std::mt19937_64 rng(10);
  const auto base = random_monotone(4, rng);
  // Player 4 never changes the value.
  const auto v = table_from(5, [&](Coalition s) { return base.at(s.without(4)); });
  EXPECT_NEAR(shapley_exact(v)[4], 0.0, 1e-15);
}

TEST(Shapley, SymmetricPlayersShareEqually) {
  std::mt19937_64 rng(11);
  const auto base = random_monotone(4, rng);
  // Players 3 and 4 are interchangeable: only whether either is present counts.
  const auto v = table_from(5, [&](Coalition s) {
    Coalition t = s.without(4);
    if (s.contains(4)) t = t.with(3);
    return base.at(t);
  });
  const auto sh = shapley_exact(v);
  EXPECT_NEAR(sh[3], sh[4], 1e-13);
}

TEST(Shapley, SinglePlayerGetsOwnValue) {
  ValueTable v(1);
  v.set(Coalition{}, 0.0);
  v.set(Coalition{1}, 42.5);
  EXPECT_EQ(shapley_exact(v), std::vector<double>{42.5});
}

TEST(Shapley, MissingValueThrows) {
  ValueTable v(2);
  v.set(Coalition{}, 0.0);
  v.set(Coalition{0b01}, 1.0);
  EXPECT_THROW(marginal_contribution(v, 1, Coalition{0b01}), GameError);
  EXPECT_THROW(shapley_exact(v), GameError);
}

TEST(Shapley, PlayerAlreadyInCoalitionThrows) {
  const auto v = table_from(3, glove);
  EXPECT_THROW(marginal_contribution(v, 0, Coalition{0b001}), GameError);
}

TEST(Shapley, TooManyPlayersThrows) { EXPECT_THROW(ValueTable(64), GameError); }

TEST(Sampling, AdditiveGameHasNoVariance) {
  const std::vector<double> a = {1.0, 2.0, 3.0, 4.0, 5.0};
  const auto est = shapley_sampled(5, 50, 1, [&](Coalition s) {
    double t = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) t += s.contains(i) ? a[i] : 0.0;
    return t;
  });
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(est.mean[i], a[i], 1e-12);
    EXPECT_NEAR(est.std_error[i], 0.0, 1e-12);
  }
}

TEST(Sampling, SameSeedSameEstimate) {
  std::mt19937_64 rng(3);
  const auto v = random_monotone(6, rng);
  auto f = [&](Coalition s) { return v.at(s); };
  const auto a = shapley_sampled(6, 200, 77, f);
  const auto b = shapley_sampled(6, 200, 77, f);
  const auto c = shapley_sampled(6, 200, 78, f);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std_error, b.std_error);
  EXPECT_NE(a.mean, c.mean);
}

TEST(Sampling, PermutationsArePermutations) {
  for (const auto& p : sample_permutations(7, 100, 5)) {
    auto s = p;
    std::sort(s.begin(), s.end());
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i], i);
  }
}

TEST(Sampling, ZeroSamplesRejected) {
  EXPECT_THROW(shapley_sampled(3, 0, 1, glove), GameError);
}

TEST(Sampling, ConvergesToExact) {
  std::mt19937_64 rng(4);
  const auto v = random_monotone(8, rng);
  const auto exact = shapley_exact(v);
  const auto est = shapley_sampled(8, 2000, 123, [&](Coalition s) { return v.at(s); });
  const double top = *std::max_element(exact.begin(), exact.end());
  for (std::size_t i = 0; i < exact.size(); ++i) {
    EXPECT_LE(std::abs(est.mean[i] - exact[i]), 0.05 * top);
    EXPECT_LE(std::abs(est.mean[i] - exact[i]), 4.0 * est.std_error[i] + 1e-12);
  }
}

TEST(Sampling, StandardErrorShrinksWithRootM) {
  std::mt19937_64 rng(6);
  const auto v = random_monotone(8, rng);
  auto f = [&](Coalition s) { return v.at(s); };
  const std::size_t ms[] = {100, 400, 1600};
  std::vector<std::vector<double>> scaled;
  for (auto m : ms) {
    const auto est = shapley_sampled(8, m, 99, f);
    std::vector<double> row;
    for (double se : est.std_error) row.push_back(se * std::sqrt(static_cast<double>(m)));
    scaled.push_back(row);
  }
  for (std::size_t i = 0; i < 8; ++i) {
    double lo = scaled[0][i];
    double hi = lo;
    for (const auto& r : scaled) {
      lo = std::min(lo, r[i]);
      hi = std::max(hi, r[i]);
    }
    EXPECT_LE(hi, 2.0 * lo) << "player " << i;
  }
}

TEST(Store, InsertKeepsFirstImproveKeepsLower) {
  ValueStore st;
  const Coalition c{0b101};
  EXPECT_TRUE(st.insert({c, 10.0, SolveStatus::Optimal, 5, std::nullopt}));
  EXPECT_FALSE(st.insert({c, 1.0, SolveStatus::Optimal, 5, std::nullopt}));
  EXPECT_EQ(st.find(c)->objective, 10.0);
  EXPECT_FALSE(st.improve({c, 10.0, SolveStatus::Optimal, 5, Coalition{1}}));
  EXPECT_FALSE(st.improve({c, 2.0, SolveStatus::NumericalFailure, 5, Coalition{1}}));
  EXPECT_TRUE(st.improve({c, 9.0, SolveStatus::Optimal, 5, Coalition{1}}));
  EXPECT_EQ(st.find(c)->objective, 9.0);
  EXPECT_EQ(st.find(c)->warm_from, Coalition{1});
}

TEST(Store, ValueTableNeedsBaselineAndEveryCoalition) {
  const auto players = synthetic_players(2);
  ValueStore st;
  st.insert({Coalition{0b01}, 5.0, SolveStatus::Optimal, 1, std::nullopt});
  EXPECT_THROW(value_table(players, st, all_coalitions(2)), GameError);
  st.insert({Coalition{}, 9.0, SolveStatus::Optimal, 1, std::nullopt});
  EXPECT_THROW(value_table(players, st, all_coalitions(2)), GameError);
  st.insert({Coalition{0b10}, 8.0, SolveStatus::Optimal, 1, std::nullopt});
  st.insert({Coalition{0b11}, 1.0, SolveStatus::IterationLimit, 1, std::nullopt});
  EXPECT_THROW(value_table(players, st, all_coalitions(2)), GameError);
}

TEST(Store, PlayersMapToOptions) {
  std::vector<Player> players = {{5, 6, "a"}, {2, 3, "b"}};
  EXPECT_EQ(to_options(players, Coalition{0b01}).bits, std::uint64_t{1} << 5);
  EXPECT_EQ(to_options(players, Coalition{0b11}).bits, (std::uint64_t{1} << 5) | 4u);
}

TEST(Assemble, ExactResultIsConsistent) {
  std::mt19937_64 rng(12);
  const std::size_t n = 6;
  const auto v = random_monotone(n, rng);
  const auto players = synthetic_players(n);
  ValueStore st;
  fill_store(st, v);
  const auto g = assemble_exact(Metric::AvoidedCurtailment, players, st);
  EXPECT_EQ(g.values.size(), 64u);
  const auto want = shapley_exact(v);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_NEAR(g.shapley[i], want[i], 1e-12);
    ASSERT_EQ(g.mc[i].size(), 32u);
    for (const auto& mc : g.mc[i]) {
      // Same floating-point expression as the journaled objectives give.
      const double hi = 1000.0 - (1000.0 - v.at(mc.coalition.with(i)));
      const double lo = 1000.0 - (1000.0 - v.at(mc.coalition));
      EXPECT_EQ(mc.value, hi - (mc.coalition.bits == 0 ? 0.0 : lo));
    }
    EXPECT_NEAR(g.individual[i], v.at(Coalition{}.with(i)), 1e-12);
  }
  EXPECT_TRUE(g.violations.empty());
}

TEST(Assemble, SampledUsesOnlyPlannedCoalitions) {
  std::mt19937_64 rng(13);
  const std::size_t n = 8;
  const auto v = random_monotone(n, rng);
  const Estimator est{false, 30, 5};
  const auto plan = plan_for(n, est);
  ValueTable part(n);
  for (auto s : plan) part.set(s, v.at(s));
  ValueStore st;
  fill_store(st, part);
  const auto g = assemble_sampled(Metric::ExpectedCostReduction, synthetic_players(n), st,
                                  est.samples, est.seed);
  const auto direct = shapley_sampled(n, 30, 5, [&](Coalition s) { return v.at(s); });
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_NEAR(g.shapley[i], direct.mean[i], 1e-12);
    EXPECT_NEAR(g.grand_marginal[i], v.at(Coalition::all(n)) - v.at(Coalition::all(n).without(i)),
                1e-9);
  }
  EXPECT_LT(plan.size(), std::size_t{1} << n);
}

TEST(Assemble, ViolationsAreFlagged) {
  ValueTable v(2);
  v.set(Coalition{}, 0.0);
  v.set(Coalition{0b01}, 10.0);
  v.set(Coalition{0b10}, 1.0);
  v.set(Coalition{0b11}, 9.0);
  const auto viol = find_violations(v);
  ASSERT_EQ(viol.size(), 1u);
  EXPECT_EQ(viol[0].smaller.bits, 0b01u);
  EXPECT_EQ(viol[0].player, 1u);
  EXPECT_DOUBLE_EQ(viol[0].drop, 1.0);
  // A drop inside the tolerance is not a violation.
  v.set(Coalition{0b11}, 10.0 - 0.5 * monotonicity_tolerance(10.0));
  EXPECT_TRUE(find_violations(v).empty());
}

TEST(Screening, RanksDescendingWithTies) {
  std::vector<Player> players = {{0, 4, "d"}, {1, 2, "b"}, {2, 3, "c"}, {3, 1, "a"}};
  ValueStore st;
  st.insert({Coalition{}, 100.0, SolveStatus::Optimal, 1, std::nullopt});
  st.insert({Coalition{1}, 50.0, SolveStatus::Optimal, 1, std::nullopt});
  st.insert({Coalition{2}, 50.0 + 1e-7, SolveStatus::Optimal, 1, std::nullopt});
  st.insert({Coalition{4}, 20.0, SolveStatus::Optimal, 1, std::nullopt});
  st.insert({Coalition{8}, 90.0, SolveStatus::Optimal, 1, std::nullopt});
  const auto r = rank_options(players, st);
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0].player.id, 3);
  EXPECT_FALSE(r[0].tied);
  EXPECT_EQ(r[1].player.id, 2);  // tie group ordered by id
  EXPECT_EQ(r[2].player.id, 4);
  EXPECT_TRUE(r[1].tied);
  EXPECT_TRUE(r[2].tied);
  EXPECT_EQ(r[3].player.id, 1);
  EXPECT_DOUBLE_EQ(r[3].value, 10.0);
}

TEST(Screening, NeedsBaseline) {
  ValueStore st;
  EXPECT_THROW(rank_options(synthetic_players(1), st), GameError);
}

TEST(Metric, NamesRoundTrip) {
  for (auto m : {Metric::AvoidedCurtailment, Metric::ExpectedCostReduction}) {
    EXPECT_EQ(metric_from_string(to_string(m)), m);
  }
  EXPECT_FALSE(metric_from_string("profit").has_value());
  EXPECT_EQ(objective_for(Metric::AvoidedCurtailment), ObjectiveKind::MinCurtailment);
}

TEST(Players, IdsResolveAndDuplicatesThrow) {
  const auto c = sctep::testing::three_bus_case();
  const auto p = players_from_ids(c, {3, 1});
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].option, 2u);
  EXPECT_EQ(p[1].option, 0u);
  EXPECT_THROW(players_from_ids(c, {1, 1}), GameError);
  EXPECT_THROW(players_from_ids(c, {9}), GameError);
}

TEST(SolverGame, ThreeBusGameIsMonotoneAndEfficient) {
  const auto c = sctep::testing::three_bus_case();
  for (auto metric : {Metric::AvoidedCurtailment, Metric::ExpectedCostReduction}) {
    CoalitionEvaluator ev(c, metric, game_settings());
    const auto players = all_players(c);
    ValueStore st;
    for (auto s : all_coalitions(3)) st.insert(ev.evaluate(to_options(players, s)));
    repair_monotonicity(ev, players, st, all_coalitions(3));
    const auto g = assemble_exact(metric, players, st);
    const double grand = g.values.back().value;
    const double sum = std::accumulate(g.shapley.begin(), g.shapley.end(), 0.0);
    EXPECT_NEAR(sum, grand, 1e-6 * std::max(1.0, std::abs(grand)));
    EXPECT_TRUE(g.violations.empty()) << to_string(metric);
    for (const auto& cv : g.values) EXPECT_EQ(cv.status, SolveStatus::Optimal);
  }
}
