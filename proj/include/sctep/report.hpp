#pragma once

// Artifacts: solve summaries, GameResult JSON, MC distribution CSV and the
// report bundle. Nothing here writes timestamps, so equal inputs give equal
// bytes.

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sctep/coalition_game.hpp"
#include "sctep/runner.hpp"

#ifndef SCTEP_VERSION
#define SCTEP_VERSION "0.0.0"
#endif

namespace sctep {

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kToolName = "sctep";

/// Metadata header carried by every artifact.
inline nlohmann::json artifact_metadata(const NetworkCase& c, const SolverSettings& s) {
  return {{"tool", kToolName},
          {"version", SCTEP_VERSION},
          {"case_hash", case_hash(c)},
          {"settings_hash", settings_hash(s)},
          {"settings", settings_to_json(s)}};
}

// ---- single solve ----------------------------------------------------------

struct BlockSummary {
  int scenario = 0;
  int state = 0;
  double load_curtailment = 0.0;  // MW
  double res_curtailment = 0.0;   // MW
};

struct SolutionSummary {
  double objective = 0.0;
  std::vector<std::pair<int, double>> line_investment;  // line id, MVA
  std::vector<std::pair<int, double>> flex_investment;  // provider id, MW
  std::vector<BlockSummary> blocks;
  double total_load_curtailment = 0.0;
};

inline SolutionSummary summarize(const NetworkCase& c, const SctepProblem& p,
                                 const SolveResult& r) {
  SolutionSummary s;
  s.objective = r.objective;
  if (r.x.size() != p.qp.num_vars()) return s;
  const auto& L = p.layout;
  const double base = p.base_mva;
  for (std::size_t l = 0; l < c.lines.size(); ++l) {
    if (L.has_li(l)) s.line_investment.emplace_back(c.lines[l].id, r.x[L.li(l)] * base);
  }
  for (std::size_t f = 0; f < c.flex_providers.size(); ++f) {
    if (L.has_fi(f)) s.flex_investment.emplace_back(c.flex_providers[f].id, r.x[L.fi(f)] * base);
  }
  for (std::size_t sc = 0; sc < L.num_scenarios(); ++sc) {
    for (std::size_t k = 0; k < L.num_states(); ++k) {
      const std::size_t b = L.block(sc, k);
      BlockSummary bs{c.scenarios[sc].id, c.states[k].k, 0.0, 0.0};
      for (std::size_t n = 0; n < L.num_buses(); ++n) {
        bs.load_curtailment += r.x[L.lc(b, n)] * base;
        bs.res_curtailment += r.x[L.rc(b, n)] * base;
      }
      s.total_load_curtailment += bs.load_curtailment;
      s.blocks.push_back(bs);
    }
  }
  return s;
}

inline nlohmann::json solve_artifact(const NetworkCase& c, const SctepProblem& p,
                                     const SolveResult& r, const SolverSettings& settings) {
  const auto sum = summarize(c, p, r);
  nlohmann::json j;
  j["metadata"] = artifact_metadata(c, settings);
  j["objective_kind"] = to_string(p.objective);
  j["coalition"] = p.coalition.bits;
  j["status"] = to_string(r.status);
  j["message"] = r.message;
  j["objective"] = r.objective;
  j["iterations"] = r.iterations;
  j["residuals"] = {{"stationarity", r.residuals.stationarity},
                    {"feasibility", r.residuals.feasibility},
                    {"complementarity", r.residuals.complementarity}};
  auto& li = j["line_investment"] = nlohmann::json::array();
  for (const auto& [id, v] : sum.line_investment) li.push_back({{"line", id}, {"mva", v}});
  auto& fi = j["flex_investment"] = nlohmann::json::array();
  for (const auto& [id, v] : sum.flex_investment) fi.push_back({{"provider", id}, {"mw", v}});
  auto& bl = j["blocks"] = nlohmann::json::array();
  for (const auto& b : sum.blocks) {
    bl.push_back({{"scenario", b.scenario},
                  {"state", b.state},
                  {"load_curtailment_mw", b.load_curtailment},
                  {"res_curtailment_mw", b.res_curtailment}});
  }
  j["total_load_curtailment_mw"] = sum.total_load_curtailment;
  j["x"] = r.x;
  j["duals"] = {{"rows", r.duals.rows},
                {"var_lower", r.duals.var_lower},
                {"var_upper", r.duals.var_upper},
                {"row_lower", r.duals.row_lower},
                {"row_upper", r.duals.row_upper}};
  j["objective_scale"] = r.objective_scale;
  return j;
}

// ---- game result -----------------------------------------------------------

inline nlohmann::json player_to_json(const Player& p) {
  return {{"id", p.id}, {"option", p.option}, {"label", p.label}};
}

inline nlohmann::json game_to_json(const GameResult& g, const nlohmann::json& metadata) {
  nlohmann::json j;
  j["metadata"] = metadata;
  j["metric"] = to_string(g.metric);
  j["estimator"] = estimator_to_json(g.estimator);
  j["baseline_objective"] = g.baseline_objective;
  auto& pl = j["players"] = nlohmann::json::array();
  for (std::size_t i = 0; i < g.players.size(); ++i) {
    nlohmann::json p = player_to_json(g.players[i]);
    p["shapley"] = g.shapley[i];
    if (!g.std_error.empty()) p["std_error"] = g.std_error[i];
    p["individual"] = g.individual[i];
    p["grand_marginal"] = g.grand_marginal[i];
    pl.push_back(p);
  }
  auto& vals = j["values"] = nlohmann::json::array();
  for (const auto& v : g.values) {
    nlohmann::json e = {{"coalition", v.coalition.bits},
                        {"value", v.value},
                        {"objective", v.objective},
                        {"status", to_string(v.status)}};
    if (v.repaired) e["repaired"] = true;
    vals.push_back(e);
  }
  auto& mc = j["marginal_contributions"] = nlohmann::json::array();
  for (std::size_t i = 0; i < g.mc.size(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& s : g.mc[i]) row.push_back({s.coalition.bits, s.value});
    mc.push_back(row);
  }
  auto& vi = j["monotonicity_violations"] = nlohmann::json::array();
  for (const auto& v : g.violations) {
    vi.push_back({{"coalition", v.smaller.bits}, {"player", v.player}, {"drop", v.drop}});
  }
  return j;
}

inline GameResult game_from_json(const nlohmann::json& j) {
  GameResult g;
  try {
    const auto m = metric_from_string(j.at("metric").get<std::string>());
    if (!m) throw ReportError("unknown metric");
    g.metric = *m;
    g.estimator = estimator_from_json(j.at("estimator"));
    g.baseline_objective = j.at("baseline_objective").get<double>();
    for (const auto& p : j.at("players")) {
      g.players.push_back({p.at("option").get<std::size_t>(), p.at("id").get<int>(),
                           p.at("label").get<std::string>()});
      g.shapley.push_back(p.at("shapley").get<double>());
      if (p.contains("std_error")) g.std_error.push_back(p.at("std_error").get<double>());
      g.individual.push_back(p.at("individual").get<double>());
      g.grand_marginal.push_back(p.at("grand_marginal").get<double>());
    }
    for (const auto& v : j.at("values")) {
      CharacteristicValue cv;
      cv.coalition = Coalition{v.at("coalition").get<std::uint64_t>()};
      cv.value = v.at("value").get<double>();
      cv.objective = v.at("objective").get<double>();
      cv.status = solve_status_from_string(v.at("status").get<std::string>())
                      .value_or(SolveStatus::NumericalFailure);
      cv.repaired = v.value("repaired", false);
      g.values.push_back(cv);
    }
    for (const auto& row : j.at("marginal_contributions")) {
      std::vector<McSample> samples;
      for (const auto& s : row) {
        samples.push_back({Coalition{s.at(0).get<std::uint64_t>()}, s.at(1).get<double>()});
      }
      g.mc.push_back(std::move(samples));
    }
    for (const auto& v : j.at("monotonicity_violations")) {
      g.violations.push_back({Coalition{v.at("coalition").get<std::uint64_t>()},
                              v.at("player").get<std::size_t>(), v.at("drop").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ReportError(std::string("malformed game artifact: ") + e.what());
  }
  if (g.mc.size() != g.players.size()) throw ReportError("malformed game artifact: mc rows");
  return g;
}

/// Coalition members as a space-separated label list.
inline std::string coalition_label(const std::vector<Player>& players, Coalition s) {
  std::string out;
  for (std::size_t i = 0; i < players.size(); ++i) {
    if (!s.contains(i)) continue;
    if (!out.empty()) out += ' ';
    out += players[i].label;
  }
  return out;
}

inline std::string format_number(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

/// Long-format MC table: one row per (player, coalition without the player).
inline void write_mc_csv(const GameResult& g, const nlohmann::json& metadata, std::ostream& os) {
  if (g.values.empty()) throw ReportError("game has no coalition values");
  os << "# tool=" << metadata.value("tool", "") << " version=" << metadata.value("version", "")
     << '\n';
  os << "# case_hash=" << metadata.value("case_hash", "") << '\n';
  os << "# settings_hash=" << metadata.value("settings_hash", "") << '\n';
  os << "# metric=" << to_string(g.metric) << '\n';
  os << "player,coalition_size,mc_value,coalition\n";
  for (std::size_t i = 0; i < g.players.size(); ++i) {
    for (const auto& s : g.mc[i]) {
      os << g.players[i].label << ',' << s.coalition.size() << ',' << format_number(s.value)
         << ",\"" << coalition_label(g.players, s.coalition) << "\"\n";
    }
  }
}

/// Report bundle: the data behind the violin plots plus run metadata.
inline nlohmann::json report_bundle(const GameResult& g, const nlohmann::json& metadata) {
  if (g.values.empty()) throw ReportError("game has no coalition values");
  nlohmann::json j;
  j["metadata"] = metadata;
  j["metric"] = to_string(g.metric);
  j["unit"] = g.metric == Metric::AvoidedCurtailment ? "MW" : "EUR/h";
  j["estimator"] = estimator_to_json(g.estimator);
  auto& pl = j["players"] = nlohmann::json::array();
  for (std::size_t i = 0; i < g.players.size(); ++i) {
    double lo = 0.0;
    double hi = 0.0;
    if (!g.mc[i].empty()) {
      lo = hi = g.mc[i].front().value;
      for (const auto& s : g.mc[i]) {
        lo = std::min(lo, s.value);
        hi = std::max(hi, s.value);
      }
    }
    pl.push_back({{"label", g.players[i].label},
                  {"id", g.players[i].id},
                  {"shapley", g.shapley[i]},
                  {"individual", g.individual[i]},
                  {"grand_marginal", g.grand_marginal[i]},
                  {"mc_min", lo},
                  {"mc_max", hi},
                  {"mc_count", g.mc[i].size()}});
  }
  auto& rows = j["mc"] = nlohmann::json::array();
  for (std::size_t i = 0; i < g.players.size(); ++i) {
    for (const auto& s : g.mc[i]) {
      rows.push_back({{"player", g.players[i].label},
                      {"coalition", s.coalition.bits},
                      {"coalition_size", static_cast<unsigned>(s.coalition.size())},
                      {"mc_value", s.value}});
    }
  }
  return j;
}

/// Structural check of a report bundle. Returns the problems found.
inline std::vector<std::string> validate_bundle(const nlohmann::json& j) {
  std::vector<std::string> err;
  auto need = [&](const nlohmann::json& obj, const char* key, auto pred, const char* what,
                  const std::string& where) {
    if (!obj.is_object() || !obj.contains(key) || !pred(obj.at(key))) {
      err.push_back(where + "." + key + " must be " + what);
      return false;
    }
    return true;
  };
  auto is_obj = [](const nlohmann::json& v) { return v.is_object(); };
  auto is_arr = [](const nlohmann::json& v) { return v.is_array(); };
  auto is_str = [](const nlohmann::json& v) { return v.is_string(); };
  auto is_num = [](const nlohmann::json& v) { return v.is_number(); };
  auto is_uint = [](const nlohmann::json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  };

  if (!j.is_object()) return {"bundle must be an object"};
  if (need(j, "metadata", is_obj, "an object", "bundle")) {
    for (const char* k : {"tool", "version", "case_hash", "settings_hash"}) {
      need(j["metadata"], k, is_str, "a string", "metadata");
    }
  }
  if (need(j, "metric", is_str, "a string", "bundle") &&
      !metric_from_string(j["metric"].get<std::string>())) {
    err.push_back("bundle.metric is not a known metric");
  }
  need(j, "unit", is_str, "a string", "bundle");
  need(j, "estimator", is_obj, "an object", "bundle");
  std::set<std::string> labels;
  if (need(j, "players", is_arr, "an array", "bundle")) {
    if (j["players"].empty()) err.push_back("bundle.players is empty");
    for (std::size_t i = 0; i < j["players"].size(); ++i) {
      const auto& p = j["players"][i];
      const std::string w = "players[" + std::to_string(i) + "]";
      if (need(p, "label", is_str, "a string", w)) labels.insert(p["label"].get<std::string>());
      for (const char* k : {"shapley", "individual", "grand_marginal", "mc_min", "mc_max"}) {
        need(p, k, is_num, "a number", w);
      }
      need(p, "mc_count", is_uint, "a count", w);
    }
  }
  if (need(j, "mc", is_arr, "an array", "bundle")) {
    for (std::size_t r = 0; r < j["mc"].size(); ++r) {
      const auto& row = j["mc"][r];
      const std::string w = "mc[" + std::to_string(r) + "]";
      if (need(row, "player", is_str, "a string", w) &&
          !labels.count(row["player"].get<std::string>())) {
        err.push_back(w + ".player is not a listed player");
      }
      need(row, "coalition", is_uint, "a bitmask", w);
      need(row, "coalition_size", is_uint, "a count", w);
      need(row, "mc_value", is_num, "a number", w);
    }
  }
  return err;
}

}  // namespace sctep
