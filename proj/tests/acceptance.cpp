// Acceptance run on the bundled 5-bus case. Prints one PASS/FAIL line per
// criterion. Exit status is 0 when every criterion passes, or when the only
// failures are the ones named with --expect-fail.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "sctep/report.hpp"
#include "sctep/runner.hpp"

#ifndef SCTEP_DATA_DIR
#define SCTEP_DATA_DIR "data"
#endif
#ifndef SCTEP_CLI_PATH
#define SCTEP_CLI_PATH "sctep"
#endif

namespace fs = std::filesystem;
using namespace sctep;

namespace {

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    notes.push_back(std::string(ok ? "ok    " : "FAIL  ") + what);
    pass = pass && ok;
  }
  void note(const std::string& what) { notes.push_back("      " + what); }
};

std::string num(double v, int prec = 4) {
  std::ostringstream ss;
  ss << std::setprecision(prec) << v;
  return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SCTEP_CLI_PATH) + " " + args + " >" + log.string() +
                          ".out 2>" + log.string() + ".err";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

ValueTable table_of(const GameResult& g) {
  ValueTable t(g.players.size());
  for (const auto& cv : g.values) t.set(cv.coalition, cv.value);
  return t;
}

// ---- synthetic games for the axiom checks --------------------------------

std::vector<double> permutation_average(const ValueTable& v) {
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

ValueTable monotone_game(std::size_t n, std::mt19937_64& rng) {
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

ValueTable tabulate(std::size_t n, const std::function<double(Coalition)>& f) {
  ValueTable t(n);
  for (auto s : all_coalitions(n)) t.set(s, f(s));
  return t;
}

// ---- criteria ------------------------------------------------------------

Verdict solver_soundness(const NetworkCase& c) {
  Verdict v;
  std::mt19937_64 rng(17);
  std::vector<Coalition> sample = {Coalition{}, Coalition::all(c.options.size())};
  for (std::size_t i = 0; i < c.options.size(); ++i) sample.push_back(Coalition{}.with(i));
  for (int k = 0; k < 10; ++k) sample.push_back(Coalition{rng() & 0xFF});
  std::size_t optimal = 0;
  std::size_t total = 0;
  double worst_balance = 0.0;
  double worst_kkt = 0.0;
  double worst_time = 0.0;
  for (auto kind : {ObjectiveKind::MinCurtailment, ObjectiveKind::MinExpectedCost}) {
    for (auto s : sample) {
      const auto p = build_nlp(c, s, kind);
      const auto r = solve(p.qp, {}, InitialPoint{flat_start(p), std::nullopt});
      ++total;
      worst_time = std::max(worst_time, r.wall_seconds);
      if (!r.ok()) continue;
      ++optimal;
      const auto g = eval_constraints(p, r.x);
      for (const auto& br : p.block_rows) {
        for (std::size_t row = br.balance_p; row < br.thermal; ++row) {
          worst_balance = std::max(worst_balance, std::abs(g[row]));
        }
      }
      const auto k = kkt_residuals(p.qp, r.x, r.duals, r.objective_scale);
      worst_kkt = std::max({worst_kkt, k.stationarity, k.feasibility, k.complementarity});
    }
  }
  v.check(optimal == total, std::to_string(optimal) + "/" + std::to_string(total) +
                                " solves optimal");
  v.check(worst_balance <= 1e-6, "max power-balance residual " + num(worst_balance) + " p.u.");
  v.check(worst_kkt <= 1e-6, "max recomputed KKT residual " + num(worst_kkt));
  v.check(worst_time < 5.0, "slowest solve " + num(worst_time, 3) + " s (target < 5 s)");
  return v;
}

Verdict derivative_correctness(const NetworkCase& c) {
  Verdict v;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (auto kind : {ObjectiveKind::MinCurtailment, ObjectiveKind::MinExpectedCost}) {
    const auto p = build_nlp(c, Coalition::all(c.options.size()), kind);
    double worst = derivative_check(p.qp, flat_start(p)).max_rel_error;
    for (int t = 0; t < 10; ++t) {
      std::vector<double> x(p.qp.num_vars());
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double lo = std::isfinite(p.qp.x_lo[j]) ? p.qp.x_lo[j] : -2.0;
        const double hi = std::isfinite(p.qp.x_hi[j]) ? p.qp.x_hi[j] : 2.0;
        x[j] = lo + u(rng) * (hi - lo);
      }
      worst = std::max(worst, derivative_check(p.qp, x).max_rel_error);
    }
    v.check(worst < 1e-5, std::string(to_string(kind)) + ": max relative error " + num(worst));
  }
  return v;
}

Verdict shapley_axioms() {
  Verdict v;
  std::mt19937_64 rng(31);
  double worst = 0.0;
  auto compare = [&](const ValueTable& t) {
    const auto a = shapley_exact(t);
    const auto b = permutation_average(t);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return a;
  };

  const auto glove = compare(tabulate(3, [](Coalition s) {
    return s.contains(0) && (s.contains(1) || s.contains(2)) ? 1.0 : 0.0;
  }));
  v.check(std::abs(glove[0] - 2.0 / 3.0) < 1e-12 && std::abs(glove[1] - 1.0 / 6.0) < 1e-12 &&
              std::abs(glove[2] - 1.0 / 6.0) < 1e-12,
          "glove game gives (2/3, 1/6, 1/6)");

  std::uniform_real_distribution<double> w(-5.0, 5.0);
  double additive_err = 0.0;
  for (std::size_t n = 1; n <= 8; ++n) {
    std::vector<double> a(n);
    for (auto& x : a) x = w(rng);
    const auto sh = compare(tabulate(n, [&](Coalition s) {
      double t = 0.0;
      for (std::size_t i = 0; i < n; ++i) t += s.contains(i) ? a[i] : 0.0;
      return t;
    }));
    for (std::size_t i = 0; i < n; ++i) additive_err = std::max(additive_err, std::abs(sh[i] - a[i]));
  }
  v.check(additive_err < 1e-12, "additive games return their weights (err " + num(additive_err) + ")");

  double eff = 0.0;
  double dummy = 0.0;
  double sym = 0.0;
  for (std::size_t n = 2; n <= 8; ++n) {
    const auto t = monotone_game(n, rng);
    const auto sh = compare(t);
    const double grand = t.at(Coalition::all(n));
    eff = std::max(eff, std::abs(std::accumulate(sh.begin(), sh.end(), 0.0) - grand) /
                            std::max(1.0, std::abs(grand)));
    if (n < 8) {
      const auto with_dummy = tabulate(n + 1, [&](Coalition s) { return t.at(s.without(n)); });
      dummy = std::max(dummy, std::abs(compare(with_dummy)[n]));
      const auto twin = tabulate(n + 1, [&](Coalition s) {
        Coalition r = s.without(n);
        if (s.contains(n)) r = r.with(n - 1);
        return t.at(r);
      });
      const auto st = compare(twin);
      sym = std::max(sym, std::abs(st[n] - st[n - 1]));
    }
  }
  v.check(worst < 1e-12, "exact vs permutation average, |N| <= 8: max diff " + num(worst));
  v.check(eff < 1e-12, "efficiency: max relative gap " + num(eff));
  v.check(dummy < 1e-12, "dummy player: max |Sh| " + num(dummy));
  v.check(sym < 1e-12, "symmetric players: max gap " + num(sym));
  return v;
}

Verdict game_consistency(const GameResult& g, const fs::path& journal, double seconds) {
  Verdict v;
  const double grand = table_of(g).at(Coalition::all(g.players.size()));
  const double sum = std::accumulate(g.shapley.begin(), g.shapley.end(), 0.0);
  v.check(std::abs(sum - grand) <= 1e-6 * std::max(1.0, std::abs(grand)),
          "sum of Shapley " + num(sum, 10) + " vs v(N) " + num(grand, 10));

  // Values rebuilt from the journal alone.
  ValueStore store;
  load_records(replay_journal(journal).records, store);
  const double base = store.find(Coalition{})->objective;
  auto value = [&](Coalition s) {
    return s.bits == 0 ? 0.0 : base - store.find(to_options(g.players, s))->objective;
  };
  std::size_t checked = 0;
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < g.mc.size(); ++i) {
    for (const auto& mc : g.mc[i]) {
      ++checked;
      if (mc.value != value(mc.coalition.with(i)) - value(mc.coalition)) ++mismatched;
    }
  }
  v.check(checked == g.players.size() << (g.players.size() - 1) && mismatched == 0,
          std::to_string(checked) + " MCs equal journaled differences exactly (" +
              std::to_string(mismatched) + " mismatches)");
  v.check(seconds < 15 * 60, "single-worker game " + num(seconds, 3) + " s (target < 900 s)");
  v.note("speedup to 8 workers not measured: " + std::to_string(std::thread::hardware_concurrency()) +
         " hardware thread(s) available");
  return v;
}

Verdict monotonicity(const NetworkCase& c, const std::vector<const GameResult*>& games) {
  Verdict v;
  for (const auto* g : games) {
    const auto t = table_of(*g);
    const std::size_t n = g->players.size();
    std::mt19937_64 rng(41);
    std::size_t pairs = 0;
    std::size_t flagged = 0;
    std::size_t persisted = 0;
    CoalitionEvaluator ev(c, g->metric, game_settings());
    const double base = g->baseline_objective;
    while (pairs < 200) {
      const Coalition big{rng() & ((std::uint64_t{1} << n) - 1)};
      const Coalition small{big.bits & rng()};
      if (small == big) continue;
      ++pairs;
      const double vs = t.at(small);
      const double vt = t.at(big);
      if (vs <= vt + monotonicity_tolerance(vt)) continue;
      ++flagged;
      // Flat-start re-solve of the larger coalition.
      const auto r = ev.evaluate(to_options(g->players, big));
      const double vt2 = r.ok() ? base - r.objective : vt;
      if (vs > std::max(vt, vt2) + monotonicity_tolerance(std::max(vt, vt2))) ++persisted;
    }
    v.check(persisted == 0, std::string(to_string(g->metric)) + ": " + std::to_string(pairs) +
                                " nested pairs, " + std::to_string(flagged) + " flagged, " +
                                std::to_string(persisted) + " persisting");
  }
  return v;
}

Verdict sampling(const GameResult& g) {
  Verdict v;
  const auto t = table_of(g);
  const std::size_t n = g.players.size();
  auto f = [&](Coalition s) { return t.at(s); };
  const auto est = shapley_sampled(n, 2000, 2026, f);
  const double top = *std::max_element(g.shapley.begin(), g.shapley.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(est.mean[i] - g.shapley[i]) / top);
  v.check(worst <= 0.05, "M = 2000: max error " + num(100.0 * worst, 3) + "% of max Shapley");

  std::vector<std::vector<double>> scaled;
  for (std::size_t m : {100, 400, 1600}) {
    const auto e = shapley_sampled(n, m, 2026, f);
    std::vector<double> row;
    for (double se : e.std_error) row.push_back(se * std::sqrt(static_cast<double>(m)));
    scaled.push_back(row);
  }
  double worst_ratio = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    double lo = scaled[0][i];
    double hi = lo;
    for (const auto& r : scaled) {
      lo = std::min(lo, r[i]);
      hi = std::max(hi, r[i]);
    }
    if (hi == 0.0) continue;  // constant marginal contributions
    worst_ratio = std::max(worst_ratio, lo > 0.0 ? hi / lo : INFINITY);
  }
  v.check(worst_ratio <= 2.0,
          "SE * sqrt(M) over M in {100, 400, 1600}: max spread factor " + num(worst_ratio, 3));
  return v;
}

Verdict qualitative(const NetworkCase& c, const GameResult& curt, const GameResult& cost) {
  Verdict v;
  {
    const auto p = build_nlp(c, {}, ObjectiveKind::MinCurtailment);
    const auto r = solve(p.qp, {}, InitialPoint{flat_start(p), std::nullopt});
    const auto s = summarize(c, p, r);
    std::size_t curtailing = 0;
    double worst = 0.0;
    for (const auto& b : s.blocks) {
      if (b.state == 0) continue;
      if (b.load_curtailment > 1e-3) ++curtailing;
      worst = std::max(worst, b.load_curtailment);
    }
    v.check(r.ok() && curtailing > 0,
            "(a) no investment: " + std::to_string(curtailing) +
                " contingency blocks curtail load, worst " + num(worst) + " MW");
  }
  {
    const double top = *std::max_element(curt.shapley.begin(), curt.shapley.end());
    std::string small;
    bool ok = true;
    for (const char* label : {"L1-2", "L3-4", "L4-5"}) {
      for (std::size_t i = 0; i < curt.players.size(); ++i) {
        if (curt.players[i].label != label) continue;
        const double share = curt.shapley[i] / top;
        ok = ok && share <= 0.01;
        small += std::string(small.empty() ? "" : ", ") + label + " " + num(100.0 * share, 3) + "%";
      }
    }
    v.check(ok, "(b) weak lines at most 1% of max Shapley: " + small);
    std::size_t best = 0;
    for (std::size_t i = 1; i < curt.shapley.size(); ++i) {
      if (curt.shapley[i] > curt.shapley[best]) best = i;
    }
    std::size_t l14 = best;
    for (std::size_t i = 0; i < curt.players.size(); ++i) {
      if (curt.players[i].label == "L1-4") l14 = i;
    }
    v.check(curt.players[best].label == "L1-4",
            "(b) L1-4 has the largest Shapley value: largest is " + curt.players[best].label +
                " (" + num(curt.shapley[best]) + " MW), L1-4 has " + num(curt.shapley[l14]) +
                " MW");
    std::ostringstream all;
    for (std::size_t i = 0; i < curt.players.size(); ++i) {
      all << (i ? ", " : "") << curt.players[i].label << " " << num(curt.shapley[i]);
    }
    v.note("curtailment Shapley (MW): " + all.str());
  }
  {
    const double base = cost.baseline_objective;
    const double grand = table_of(cost).at(Coalition::all(cost.players.size()));
    v.check(grand > 0.0, "(c) grand coalition lowers expected cost by " + num(grand / 1e6) +
                             " mln EUR/h (" + num(base / 1e6) + " -> " +
                             num((base - grand) / 1e6) + ", " + num(100.0 * grand / base, 3) +
                             "%)");
    v.note("reference figures, not asserted: 0.621 -> 0.568 mln EUR/h, 8.5%");
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks on the bundled 5-bus case"};
  std::string case_path = std::string(SCTEP_DATA_DIR) + "/case5.json";
  std::string workdir = (fs::temp_directory_path() / "sctep_acceptance").string();
  std::vector<int> expect_fail;
  app.add_option("--case", case_path, "case JSON");
  app.add_option("--workdir", workdir, "scratch directory for game runs");
  app.add_option("--expect-fail", expect_fail, "criteria known to fail on this case");
  CLI11_PARSE(app, argc, argv);

  const NetworkCase c = load_case(case_path);
  fs::remove_all(workdir);
  fs::create_directories(workdir);
  const fs::path wd(workdir);
  std::map<int, Verdict> results;

  results[1] = solver_soundness(c);
  results[2] = derivative_correctness(c);
  results[3] = shapley_axioms();

  // Exact curtailment game twice (1 and 2 workers), cost game once.
  const std::string cq = q(case_path);
  auto t0 = std::chrono::steady_clock::now();
  const int rc_a = run_cli("game " + cq + " --objective curtailment --exact -w 1 -o " +
                               q(wd / "curt_w1.json"),
                           wd / "curt_w1");
  const double game_seconds = seconds_since(t0);
  const int rc_b = run_cli("game " + cq + " --objective curtailment --exact -w 2 -o " +
                               q(wd / "curt_w2.json"),
                           wd / "curt_w2");
  const int rc_c =
      run_cli("game " + cq + " --objective cost --exact -w 1 -o " + q(wd / "cost.json"),
              wd / "cost");
  const int rc_d = run_cli("game " + cq + " --sample 10 --seed 7 -w 1 -o " + q(wd / "s1.json"),
                           wd / "s1");
  const int rc_e = run_cli("game " + cq + " --sample 10 --seed 7 -w 2 -o " + q(wd / "s2.json"),
                           wd / "s2");

  if (rc_a != 0 || rc_c != 0) {
    std::cout << "game runs failed (exit " << rc_a << ", " << rc_c << "); see " << workdir << '\n';
    for (int k = 4; k <= 8; ++k) results[k].check(false, "game run failed");
  } else {
    const auto curt = game_from_json(nlohmann::json::parse(slurp(wd / "curt_w1.json")));
    const auto cost = game_from_json(nlohmann::json::parse(slurp(wd / "cost.json")));
    results[4] = game_consistency(curt, wd / "curt_w1.json.journal", game_seconds);
    results[5] = monotonicity(c, {&curt, &cost});
    results[6] = sampling(curt);
    results[7] = qualitative(c, curt, cost);

    Verdict det;
    det.check(rc_b == 0 && slurp(wd / "curt_w1.json") == slurp(wd / "curt_w2.json"),
              "exact game artifacts with 1 and 2 workers are byte-identical");
    det.check(rc_d == 0 && rc_e == 0 && slurp(wd / "s1.json") == slurp(wd / "s2.json"),
              "sampled game artifacts (M = 10, seed 7) are byte-identical");
    ValueStore a;
    ValueStore b;
    load_records(replay_journal(wd / "curt_w1.json.journal").records, a);
    load_records(replay_journal(wd / "curt_w2.json.journal").records, b);
    const auto sa = a.snapshot();
    const auto sb = b.snapshot();
    bool same = sa.size() == sb.size();
    for (std::size_t i = 0; same && i < sa.size(); ++i) {
      same = sa[i].coalition == sb[i].coalition && sa[i].objective == sb[i].objective &&
             sa[i].status == sb[i].status;
    }
    det.check(same, std::to_string(sa.size()) + " stored values identical across worker counts");
    results[8] = det;
  }

  const std::set<int> allowed(expect_fail.begin(), expect_fail.end());
  bool ok = true;
  for (const auto& [k, v] : results) {
    std::cout << "criterion " << k << ": " << (v.pass ? "PASS" : "FAIL")
              << (!v.pass && allowed.count(k) ? " (expected)" : "") << '\n';
    for (const auto& n : v.notes) std::cout << "    " << n << '\n';
    if (!v.pass && !allowed.count(k)) ok = false;
  }
  return ok ? 0 : 1;
}
