#pragma once

// Parallel coalition evaluation with an append-only journal.
//
// Journal: one JSON object per line.
//   {"type":"header","version":1,"case_hash":..,"metric":..,"settings_hash":..,
//    "players":[option ids],"estimator":{"exact":true}|{"exact":false,"samples":M,"seed":S},
//    "time":"2026-01-01T00:00:00Z"}
//   {"type":"value","coalition":<option-space bits>,"objective":..,"status":"optimal",
//    "iterations":n,"time":..}
//   {"type":"repair", same fields as value, "warm_from":<option-space bits>}
// A truncated last line (crash mid-write) is ignored on replay.
//
// The manifest is derived from the journal alone, so replay rebuilds it.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "sctep/coalition_game.hpp"

namespace sctep {

class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw RunError("sha256 failed");
  }
  std::ostringstream ss;
  for (unsigned int i = 0; i < len; ++i) {
    ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return ss.str();
}

inline std::string case_hash(const NetworkCase& c) { return sha256_hex(case_to_json(c).dump()); }

/// Settings that influence solver output. Callbacks and tracing do not.
inline nlohmann::json settings_to_json(const SolverSettings& s) {
  return {{"kkt_tol", s.kkt_tol},
          {"feas_tol", s.feas_tol},
          {"max_iter", s.max_iter},
          {"mu_init", s.mu_init},
          {"mu_init_warm", s.mu_init_warm},
          {"kappa_mu", s.kappa_mu},
          {"theta_mu", s.theta_mu},
          {"kappa_eps", s.kappa_eps},
          {"tau_min", s.tau_min},
          {"bound_push", s.bound_push},
          {"bound_push_warm", s.bound_push_warm},
          {"bound_relax", s.bound_relax},
          {"delta_w_init", s.delta_w_init},
          {"delta_w_growth", s.delta_w_growth},
          {"delta_w_max", s.delta_w_max},
          {"delta_c", s.delta_c},
          {"max_scaled_gradient", s.max_scaled_gradient},
          {"restoration", s.restoration},
          {"max_restorations", s.max_restorations},
          {"restoration_penalty", s.restoration_penalty}};
}

inline std::string settings_hash(const SolverSettings& s) {
  return sha256_hex(settings_to_json(s).dump());
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

inline nlohmann::json estimator_to_json(const Estimator& e) {
  if (e.exact) return {{"exact", true}};
  return {{"exact", false}, {"samples", e.samples}, {"seed", e.seed}};
}

inline Estimator estimator_from_json(const nlohmann::json& j) {
  Estimator e;
  e.exact = j.at("exact").get<bool>();
  if (!e.exact) {
    e.samples = j.at("samples").get<std::size_t>();
    e.seed = j.at("seed").get<std::uint64_t>();
  }
  return e;
}

struct RunManifest {
  std::string case_hash;
  Metric metric = Metric::AvoidedCurtailment;
  std::string settings_hash;
  std::vector<int> players;
  Estimator estimator;
  std::vector<std::uint64_t> completed;  // option-space bits, sorted
  std::vector<std::uint64_t> failed;     // failed and never later completed
  std::vector<std::uint64_t> repaired;
  std::string started;
  std::string updated;

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"case_hash", case_hash},
            {"metric", to_string(metric)},
            {"settings_hash", settings_hash},
            {"players", players},
            {"estimator", estimator_to_json(estimator)},
            {"completed", completed},
            {"failed", failed},
            {"repaired", repaired},
            {"started", started},
            {"updated", updated}};
  }
  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

inline nlohmann::json record_to_json(const SolveRecord& r) {
  nlohmann::json j = {{"type", r.warm_from ? "repair" : "value"},
                      {"coalition", r.coalition.bits},
                      {"objective", r.objective},
                      {"status", to_string(r.status)},
                      {"iterations", r.iterations}};
  if (r.warm_from) j["warm_from"] = r.warm_from->bits;
  return j;
}

inline SolveRecord record_from_json(const nlohmann::json& j) {
  SolveRecord r;
  r.coalition = Coalition{j.at("coalition").get<std::uint64_t>()};
  r.objective = j.at("objective").get<double>();
  const auto st = solve_status_from_string(j.at("status").get<std::string>());
  if (!st) throw RunError("journal: unknown status");
  r.status = *st;
  r.iterations = j.at("iterations").get<int>();
  if (j.contains("warm_from")) r.warm_from = Coalition{j.at("warm_from").get<std::uint64_t>()};
  return r;
}

/// Appends records; one mutex serializes all writers.
class Journal {
 public:
  Journal() = default;
  explicit Journal(const std::filesystem::path& path) : path_(path) {
    out_.open(path, std::ios::app);
    if (!out_) throw RunError("cannot open journal " + path.string());
  }
  [[nodiscard]] bool is_open() const { return out_.is_open(); }
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

  void write_header(const RunManifest& m) {
    nlohmann::json j = {{"type", "header"},
                        {"version", 1},
                        {"case_hash", m.case_hash},
                        {"metric", to_string(m.metric)},
                        {"settings_hash", m.settings_hash},
                        {"players", m.players},
                        {"estimator", estimator_to_json(m.estimator)},
                        {"time", utc_now()}};
    write_line(j);
  }
  void write_record(const SolveRecord& r) {
    auto j = record_to_json(r);
    j["time"] = utc_now();
    write_line(j);
  }

 private:
  void write_line(const nlohmann::json& j) {
    if (!out_.is_open()) return;
    std::lock_guard lock(mu_);
    out_ << j.dump() << '\n';
    out_.flush();
  }

  std::filesystem::path path_;
  std::ofstream out_;
  std::mutex mu_;
};

struct ReplayResult {
  RunManifest manifest;
  std::vector<SolveRecord> records;  // in journal order
  std::size_t headers = 0;
};

/// Reads a journal. Records from a header that does not match `expect`
/// (case hash, metric, settings hash) raise RunError.
inline ReplayResult replay_journal(const std::filesystem::path& path,
                                   const std::optional<RunManifest>& expect = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw RunError("cannot read journal " + path.string());
  ReplayResult out;
  std::set<std::uint64_t> done;
  std::set<std::uint64_t> failed;
  std::set<std::uint64_t> repaired;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      if (in.peek() == std::char_traits<char>::eof()) break;  // torn tail
      throw RunError("journal line " + std::to_string(lineno) + " is corrupt");
    }
    const auto type = j.value("type", "");
    if (type == "header") {
      RunManifest m;
      m.case_hash = j.at("case_hash").get<std::string>();
      m.metric = metric_from_string(j.at("metric").get<std::string>()).value_or(Metric::AvoidedCurtailment);
      m.settings_hash = j.at("settings_hash").get<std::string>();
      if (expect && (m.case_hash != expect->case_hash || m.metric != expect->metric ||
                     m.settings_hash != expect->settings_hash)) {
        throw RunError("journal " + path.string() +
                       " was written for a different case, metric or settings");
      }
      if (out.headers > 0 && (m.case_hash != out.manifest.case_hash ||
                              m.metric != out.manifest.metric ||
                              m.settings_hash != out.manifest.settings_hash)) {
        throw RunError("journal mixes runs with different inputs");
      }
      m.players = j.at("players").get<std::vector<int>>();
      m.estimator = estimator_from_json(j.at("estimator"));
      m.started = out.headers == 0 ? j.value("time", "") : out.manifest.started;
      m.updated = j.value("time", "");
      out.manifest = m;
      ++out.headers;
    } else if (type == "value" || type == "repair") {
      if (out.headers == 0) throw RunError("journal record before header");
      const auto r = record_from_json(j);
      out.records.push_back(r);
      out.manifest.updated = j.value("time", out.manifest.updated);
      if (r.ok()) {
        done.insert(r.coalition.bits);
        failed.erase(r.coalition.bits);
      } else if (!done.count(r.coalition.bits) && type == "value") {
        failed.insert(r.coalition.bits);
      }
      if (type == "repair") repaired.insert(r.coalition.bits);
    } else {
      throw RunError("journal line " + std::to_string(lineno) + ": unknown record type");
    }
  }
  out.manifest.completed.assign(done.begin(), done.end());
  out.manifest.failed.assign(failed.begin(), failed.end());
  out.manifest.repaired.assign(repaired.begin(), repaired.end());
  return out;
}

/// Loads successful records into `store`: plain values first-wins, repairs
/// through `improve`. Failed records are left out so they are retried.
inline void load_records(const std::vector<SolveRecord>& records, ValueStore& store) {
  for (const auto& r : records) {
    if (!r.ok()) continue;
    if (r.warm_from) {
      store.improve(r);
    } else {
      store.insert(r);
    }
  }
}

inline void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RunError("cannot write manifest " + path.string());
  out << m.to_json().dump(2) << '\n';
}

using Evaluator = std::function<SolveRecord(Coalition)>;

struct ExecuteStats {
  std::size_t requested = 0;  // after deduplication
  std::size_t cached = 0;
  std::size_t solved = 0;
  std::size_t failed = 0;
  bool interrupted = false;
  double wall_seconds = 0.0;
};

/// Solves every plan coalition (option space) that the store lacks, using a
/// fixed pool of `workers` threads. With `stop_after` set, stops handing out
/// work after that many solves (used to simulate interruption).
inline ExecuteStats execute(const std::vector<Coalition>& plan, const Evaluator& evaluate,
                            ValueStore& store, std::size_t workers, Journal* journal = nullptr,
                            std::optional<std::size_t> stop_after = std::nullopt) {
  if (workers == 0) throw RunError("workers must be at least 1");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::uint64_t> bits;
  for (auto c : plan) bits.push_back(c.bits);
  std::sort(bits.begin(), bits.end());
  bits.erase(std::unique(bits.begin(), bits.end()), bits.end());

  ExecuteStats st;
  st.requested = bits.size();
  std::vector<Coalition> todo;
  for (auto b : bits) {
    if (store.contains(Coalition{b})) {
      ++st.cached;
    } else {
      todo.push_back(Coalition{b});
    }
  }
  const std::size_t limit = stop_after ? std::min(*stop_after, todo.size()) : todo.size();
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failed{0};
  const std::function<void()> work = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= limit) return;
      SolveRecord r;
      try {
        r = evaluate(todo[k]);
      } catch (const std::exception&) {
        r = SolveRecord{};
        r.coalition = todo[k];
        r.status = SolveStatus::NumericalFailure;
      }
      r.coalition = todo[k];
      if (!r.ok()) ++failed;
      store.insert(r);
      if (journal) journal->write_record(r);
    }
  };
  const std::size_t nthreads = std::min(workers, std::max<std::size_t>(limit, 1));
  if (nthreads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < nthreads; ++w) pool.emplace_back(work);
  }
  st.solved = limit;
  st.failed = failed.load();
  st.interrupted = limit < todo.size();
  st.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return st;
}

/// Baseline plus every single-option coalition, ranked by value.
inline std::vector<ScreenEntry> screen_options(const NetworkCase& c, Metric metric,
                                               const SolverSettings& settings,
                                               std::size_t workers, ValueStore& store) {
  const auto players = all_players(c);
  CoalitionEvaluator ev(c, metric, settings);
  std::vector<Coalition> plan{Coalition{}};
  for (const auto& p : players) plan.push_back(Coalition{}.with(p.option));
  execute(plan, [&](Coalition s) { return ev.evaluate(s); }, store, workers);
  return rank_options(players, store);
}

/// Everything needed to run or resume one game.
struct GameRun {
  const NetworkCase* network = nullptr;
  Metric metric = Metric::AvoidedCurtailment;
  SolverSettings settings;
  std::vector<Player> players;
  Estimator estimator;
  std::size_t workers = 1;
  std::size_t max_players = 20;
  bool repair = true;
  std::optional<std::filesystem::path> journal;  // none: in-memory only
  bool resume = false;
  std::optional<std::size_t> stop_after;
};

struct GameRunOutput {
  GameResult result;
  RunManifest manifest;
  ExecuteStats stats;
  std::size_t repairs = 0;
  bool complete = false;
};

inline RunManifest manifest_for(const GameRun& run) {
  RunManifest m;
  m.case_hash = case_hash(*run.network);
  m.metric = run.metric;
  m.settings_hash = settings_hash(run.settings);
  for (const auto& p : run.players) m.players.push_back(p.id);
  m.estimator = run.estimator;
  return m;
}

/// Plans, evaluates (resuming from the journal when asked), repairs
/// monotonicity violations and assembles the GameResult. When interrupted
/// through `stop_after`, returns with complete = false.
inline GameRunOutput run_game(const GameRun& run, ValueStore& store) {
  if (!run.network) throw RunError("no case");
  const std::size_t n = run.players.size();
  if (n == 0) throw GameError("no players");
  if (run.estimator.exact && n > run.max_players) {
    throw GameError(std::to_string(n) + " players exceed the exact-game cap of " +
                    std::to_string(run.max_players) +
                    "; screen the options first or use sampling");
  }
  if (!run.estimator.exact && run.estimator.samples == 0) {
    throw GameError("sample count must be at least 1");
  }
  const RunManifest expect = manifest_for(run);
  std::unique_ptr<Journal> journal;
  if (run.journal) {
    if (run.resume && std::filesystem::exists(*run.journal)) {
      load_records(replay_journal(*run.journal, expect).records, store);
    } else if (std::filesystem::exists(*run.journal)) {
      std::filesystem::remove(*run.journal);
    }
    journal = std::make_unique<Journal>(*run.journal);
    journal->write_header(expect);
  }

  CoalitionEvaluator ev(*run.network, run.metric, run.settings);
  const auto player_plan = plan_for(n, run.estimator);
  std::vector<Coalition> plan;
  plan.reserve(player_plan.size());
  for (auto s : player_plan) plan.push_back(to_options(run.players, s));

  GameRunOutput out;
  out.stats = execute(
      plan, [&](Coalition c) { return ev.evaluate(c); }, store, run.workers, journal.get(),
      run.stop_after);

  auto finish_manifest = [&] {
    if (run.journal) {
      journal.reset();
      out.manifest = replay_journal(*run.journal, expect).manifest;
      auto mpath = *run.journal;
      mpath += ".manifest.json";
      write_manifest(out.manifest, mpath);
    } else {
      out.manifest = expect;
      for (const auto& r : store.snapshot()) {
        (r.ok() ? out.manifest.completed : out.manifest.failed).push_back(r.coalition.bits);
        if (r.warm_from) out.manifest.repaired.push_back(r.coalition.bits);
      }
    }
  };

  if (out.stats.interrupted) {
    finish_manifest();
    return out;
  }
  if (run.repair) {
    out.repairs = repair_monotonicity(ev, run.players, store, player_plan, 3,
                                      [&](const SolveRecord& r) {
                                        if (journal) journal->write_record(r);
                                      });
  }
  out.result = run.estimator.exact
                   ? assemble_exact(run.metric, run.players, store)
                   : assemble_sampled(run.metric, run.players, store, run.estimator.samples,
                                      run.estimator.seed);
  out.complete = true;
  finish_manifest();
  return out;
}

}  // namespace sctep
