#pragma once

// Planning case: grid topology, devices, scenarios, system states and the
// catalog of investment options. Quantities are stored in the units of the
// JSON case file (MW, MVAr, MVA, EUR/MWh); the formulation converts to
// per-unit on base_mva.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace sctep {

using json = nlohmann::json;

/// Raised by load_case for malformed files and failed validation.
class CaseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the case file cannot be read at all.
class CaseIoError : public CaseError {
 public:
  using CaseError::CaseError;
};

struct Bus {
  int id = 0;
  double v_min = 0.95;
  double v_max = 1.05;
  double demand_p = 0.0;
  double demand_q = 0.0;
  double res_p = 0.0;
  bool is_reference = false;
};

/// Series admittance branch. No shunt charging, taps or phase shift.
struct Line {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double g = 0.0;
  double b = 0.0;
  double s_max = 0.0;
  double li_max = 0.0;
  double c_inv = 0.0;
};

struct Generator {
  int id = 0;
  int bus = 0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  double cost_c0 = 0.0;
  double cost_c1 = 0.0;
  double cost_c2 = 0.0;
};

struct FlexProvider {
  int id = 0;
  int bus = 0;
  double p_up_base = 0.0;
  double p_dn_base = 0.0;
  double q_up_base = 0.0;
  double q_dn_base = 0.0;
  double fi_max = 0.0;
  double c_flex = 0.0;
  double c_inv = 0.0;
};

struct BusOverride {
  int bus = 0;
  std::optional<double> demand_p;
  std::optional<double> demand_q;
  std::optional<double> res_p;
};

struct Scenario {
  int id = 0;
  double weight = 1.0;
  std::vector<BusOverride> overrides;
};

/// k = 0 is normal operation; k >= 1 carries exactly one outaged line.
struct SystemState {
  int k = 0;
  std::optional<int> outaged_line;
  double weight = 1.0;
};

struct LineReinforcement {
  int line = 0;
};
struct FlexCapacity {
  int provider = 0;
};

struct InvestmentOption {
  int id = 0;
  std::variant<LineReinforcement, FlexCapacity> kind;

  [[nodiscard]] bool is_line() const {
    return std::holds_alternative<LineReinforcement>(kind);
  }
};

enum class Severity { Warning, Error };

struct Diagnostic {
  Severity severity = Severity::Error;
  std::string entity;
  std::string message;

  [[nodiscard]] std::string to_string() const {
    return std::string(severity == Severity::Error ? "error" : "warning") +
           " [" + entity + "]: " + message;
  }
};

/// Demand and RES availability resolved for one scenario, indexed like
/// NetworkCase::buses.
struct ScenarioProfile {
  std::vector<double> demand_p;
  std::vector<double> demand_q;
  std::vector<double> res_p;
};

struct NetworkCase {
  std::string name;
  double base_mva = 100.0;
  double c_curt_load = 1e4;
  double c_curt_res = 100.0;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Generator> generators;
  std::vector<FlexProvider> flex_providers;
  std::vector<Scenario> scenarios;
  std::vector<SystemState> states;
  std::vector<InvestmentOption> options;

  [[nodiscard]] std::optional<std::size_t> bus_index(int id) const {
    return find_index(buses, id);
  }
  [[nodiscard]] std::optional<std::size_t> line_index(int id) const {
    return find_index(lines, id);
  }
  [[nodiscard]] std::optional<std::size_t> flex_index(int id) const {
    return find_index(flex_providers, id);
  }
  [[nodiscard]] std::optional<std::size_t> option_index(int id) const {
    return find_index(options, id);
  }

  [[nodiscard]] std::size_t reference_bus() const {
    for (std::size_t i = 0; i < buses.size(); ++i) {
      if (buses[i].is_reference) {
        return i;
      }
    }
    throw CaseError("case has no reference bus");
  }

  [[nodiscard]] ScenarioProfile profile(std::size_t scenario) const {
    ScenarioProfile p;
    for (const auto& b : buses) {
      p.demand_p.push_back(b.demand_p);
      p.demand_q.push_back(b.demand_q);
      p.res_p.push_back(b.res_p);
    }
    for (const auto& o : scenarios.at(scenario).overrides) {
      auto bi = bus_index(o.bus);
      if (!bi) {
        continue;
      }
      if (o.demand_p) p.demand_p[*bi] = *o.demand_p;
      if (o.demand_q) p.demand_q[*bi] = *o.demand_q;
      if (o.res_p) p.res_p[*bi] = *o.res_p;
    }
    return p;
  }

  /// Human-readable option label, e.g. "L1-3" or "F@2".
  [[nodiscard]] std::string option_label(const InvestmentOption& opt) const {
    if (const auto* lr = std::get_if<LineReinforcement>(&opt.kind)) {
      if (auto li = line_index(lr->line)) {
        return "L" + std::to_string(lines[*li].from_bus) + "-" +
               std::to_string(lines[*li].to_bus);
      }
      return "L?" + std::to_string(lr->line);
    }
    const auto& fc = std::get<FlexCapacity>(opt.kind);
    if (auto fi = flex_index(fc.provider)) {
      return "F@" + std::to_string(flex_providers[*fi].bus);
    }
    return "F?" + std::to_string(fc.provider);
  }

 private:
  template <typename T>
  static std::optional<std::size_t> find_index(const std::vector<T>& v,
                                               int id) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i].id == id) {
        return i;
      }
    }
    return std::nullopt;
  }
};

namespace detail {

/// Breadth-first search over in-service lines; true iff every bus is reached.
inline bool is_connected(const NetworkCase& c, std::optional<int> outaged) {
  if (c.buses.empty()) {
    return true;
  }
  std::map<int, std::size_t> idx;
  for (std::size_t i = 0; i < c.buses.size(); ++i) {
    idx.emplace(c.buses[i].id, i);
  }
  std::vector<std::vector<std::size_t>> adj(c.buses.size());
  for (const auto& l : c.lines) {
    if (outaged && l.id == *outaged) {
      continue;
    }
    auto a = idx.find(l.from_bus);
    auto b = idx.find(l.to_bus);
    if (a == idx.end() || b == idx.end()) {
      continue;
    }
    adj[a->second].push_back(b->second);
    adj[b->second].push_back(a->second);
  }
  std::vector<bool> seen(c.buses.size(), false);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = true;
  std::size_t visited = 1;
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    for (auto v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++visited;
        q.push(v);
      }
    }
  }
  return visited == c.buses.size();
}

template <typename T>
void check_unique_ids(const std::vector<T>& items, const std::string& kind,
                      std::vector<Diagnostic>& out) {
  std::map<int, int> count;
  for (const auto& it : items) {
    if (++count[it.id] == 2) {
      out.push_back({Severity::Error, kind + " " + std::to_string(it.id),
                     "duplicate id"});
    }
  }
}

}  // namespace detail

/// Checks every case invariant. Returns an empty list iff the case is valid.
inline std::vector<Diagnostic> validate_case(const NetworkCase& c) {
  std::vector<Diagnostic> d;
  auto err = [&d](std::string entity, std::string msg) {
    d.push_back({Severity::Error, std::move(entity), std::move(msg)});
  };
  auto tag = [](const char* kind, int id) {
    return std::string(kind) + " " + std::to_string(id);
  };

  if (!(c.base_mva > 0.0)) err("case", "base_mva must be positive");
  if (c.c_curt_load < 0.0) err("case", "c_curt_load must be nonnegative");
  if (c.c_curt_res < 0.0) err("case", "c_curt_res must be nonnegative");
  if (c.buses.empty()) err("case", "no buses");

  detail::check_unique_ids(c.buses, "bus", d);
  detail::check_unique_ids(c.lines, "line", d);
  detail::check_unique_ids(c.generators, "generator", d);
  detail::check_unique_ids(c.flex_providers, "flex provider", d);
  detail::check_unique_ids(c.scenarios, "scenario", d);
  detail::check_unique_ids(c.options, "option", d);

  int n_ref = 0;
  for (const auto& b : c.buses) {
    if (b.is_reference) ++n_ref;
    if (!(b.v_min > 0.0) || b.v_min > b.v_max) {
      err(tag("bus", b.id), "require 0 < v_min <= v_max");
    }
    if (b.demand_p < 0.0) err(tag("bus", b.id), "demand_p must be >= 0");
    if (b.res_p < 0.0) err(tag("bus", b.id), "res_p must be >= 0");
  }
  if (n_ref == 0) err("case", "missing reference bus");
  if (n_ref > 1) err("case", "more than one reference bus");

  auto has_bus = [&c](int id) { return c.bus_index(id).has_value(); };
  for (const auto& l : c.lines) {
    if (!has_bus(l.from_bus) || !has_bus(l.to_bus)) {
      err(tag("line", l.id), "references unknown bus");
    }
    if (l.from_bus == l.to_bus) err(tag("line", l.id), "from_bus == to_bus");
    if (!(l.s_max > 0.0)) err(tag("line", l.id), "s_max must be > 0");
    if (l.li_max < 0.0) err(tag("line", l.id), "li_max must be >= 0");
    if (l.c_inv < 0.0) err(tag("line", l.id), "c_inv must be >= 0");
  }
  for (const auto& g : c.generators) {
    if (!has_bus(g.bus)) err(tag("generator", g.id), "references unknown bus");
    if (g.p_min > g.p_max) err(tag("generator", g.id), "p_min > p_max");
    if (g.q_min > g.q_max) err(tag("generator", g.id), "q_min > q_max");
    if (g.cost_c2 < 0.0) err(tag("generator", g.id), "cost_c2 must be >= 0");
  }
  for (const auto& f : c.flex_providers) {
    if (!has_bus(f.bus)) err(tag("flex provider", f.id), "references unknown bus");
    if (f.p_up_base < 0.0 || f.p_dn_base < 0.0 || f.q_up_base < 0.0 ||
        f.q_dn_base < 0.0) {
      err(tag("flex provider", f.id), "base capacities must be >= 0");
    }
    if (f.fi_max < 0.0) err(tag("flex provider", f.id), "fi_max must be >= 0");
    if (f.c_flex < 0.0) err(tag("flex provider", f.id), "c_flex must be >= 0");
    if (f.c_inv < 0.0) err(tag("flex provider", f.id), "c_inv must be >= 0");
  }
  if (c.scenarios.empty()) err("case", "no scenarios");
  for (const auto& s : c.scenarios) {
    if (s.weight < 0.0) err(tag("scenario", s.id), "weight must be >= 0");
    for (const auto& o : s.overrides) {
      if (!has_bus(o.bus)) {
        err(tag("scenario", s.id),
            "override references unknown bus " + std::to_string(o.bus));
      }
      if ((o.demand_p && *o.demand_p < 0.0) || (o.res_p && *o.res_p < 0.0)) {
        err(tag("scenario", s.id), "negative demand_p or res_p override");
      }
    }
  }

  bool has_normal = false;
  std::map<int, int> k_seen;
  std::map<int, int> outage_seen;
  for (const auto& st : c.states) {
    const auto t = tag("state", st.k);
    if (++k_seen[st.k] == 2) err(t, "duplicate state index");
    if (st.weight < 0.0) err(t, "weight must be >= 0");
    if (st.k == 0) {
      has_normal = true;
      if (st.outaged_line) err(t, "normal state must not outage a line");
      continue;
    }
    if (st.k < 0) {
      err(t, "state index must be >= 0");
      continue;
    }
    if (!st.outaged_line) {
      err(t, "contingency state without outaged_line");
      continue;
    }
    if (!c.line_index(*st.outaged_line)) {
      err(t, "outages unknown line " + std::to_string(*st.outaged_line));
      continue;
    }
    if (++outage_seen[*st.outaged_line] == 2) {
      err(t, "line " + std::to_string(*st.outaged_line) +
                 " outaged by more than one state");
    }
  }
  if (!has_normal) err("case", "missing normal state k=0");

  std::map<int, int> line_opts;
  std::map<int, int> flex_opts;
  for (const auto& o : c.options) {
    const auto t = tag("option", o.id);
    if (const auto* lr = std::get_if<LineReinforcement>(&o.kind)) {
      if (!c.line_index(lr->line)) err(t, "references unknown line");
      if (++line_opts[lr->line] == 2) err(t, "line already has an option");
    } else {
      const auto& fc = std::get<FlexCapacity>(o.kind);
      if (!c.flex_index(fc.provider)) err(t, "references unknown flex provider");
      if (++flex_opts[fc.provider] == 2) err(t, "provider already has an option");
    }
  }
  if (c.options.size() > 64) err("case", "more than 64 investment options");

  // Connectivity only makes sense once all references resolve.
  if (d.empty()) {
    if (!detail::is_connected(c, std::nullopt)) {
      err("case", "network is not connected in the normal state");
    }
    for (const auto& st : c.states) {
      if (st.outaged_line && !detail::is_connected(c, st.outaged_line)) {
        err(tag("line", *st.outaged_line),
            "outage in state " + std::to_string(st.k) + " islands the network");
      }
    }
  }
  return d;
}

inline bool has_errors(const std::vector<Diagnostic>& diags) {
  return std::any_of(diags.begin(), diags.end(), [](const Diagnostic& x) {
    return x.severity == Severity::Error;
  });
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw CaseError(where + ": missing field '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw CaseError(where + ": field '" + key + "': " + e.what());
  }
}

template <typename T>
T optional_or(const json& j, const char* key, T fallback,
              const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    return fallback;
  }
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw CaseError(where + ": field '" + key + "': " + e.what());
  }
}

inline const json& required_array(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_array()) {
    throw CaseError(std::string("case: missing array '") + key + "'");
  }
  return *it;
}

}  // namespace detail

inline NetworkCase case_from_json(const json& j) {
  using detail::optional_or;
  using detail::required;
  if (!j.is_object()) {
    throw CaseError("case: top-level value must be an object");
  }
  NetworkCase c;
  c.name = optional_or<std::string>(j, "name", "", "case");
  c.base_mva = optional_or(j, "base_mva", 100.0, "case");
  c.c_curt_load = required<double>(j, "c_curt_load", "case");
  c.c_curt_res = required<double>(j, "c_curt_res", "case");

  for (const auto& b : detail::required_array(j, "buses")) {
    const std::string w = "bus";
    Bus x;
    x.id = required<int>(b, "id", w);
    const auto wi = w + " " + std::to_string(x.id);
    x.v_min = required<double>(b, "v_min", wi);
    x.v_max = required<double>(b, "v_max", wi);
    x.demand_p = optional_or(b, "demand_p", 0.0, wi);
    x.demand_q = optional_or(b, "demand_q", 0.0, wi);
    x.res_p = optional_or(b, "res_p", 0.0, wi);
    x.is_reference = optional_or(b, "reference", false, wi);
    c.buses.push_back(x);
  }
  for (const auto& l : detail::required_array(j, "lines")) {
    Line x;
    x.id = required<int>(l, "id", "line");
    const auto wi = "line " + std::to_string(x.id);
    x.from_bus = required<int>(l, "from", wi);
    x.to_bus = required<int>(l, "to", wi);
    x.g = required<double>(l, "g", wi);
    x.b = required<double>(l, "b", wi);
    x.s_max = required<double>(l, "s_max", wi);
    x.li_max = optional_or(l, "li_max", 0.0, wi);
    x.c_inv = optional_or(l, "c_inv", 0.0, wi);
    c.lines.push_back(x);
  }
  for (const auto& g : detail::required_array(j, "generators")) {
    Generator x;
    x.id = required<int>(g, "id", "generator");
    const auto wi = "generator " + std::to_string(x.id);
    x.bus = required<int>(g, "bus", wi);
    x.p_min = required<double>(g, "p_min", wi);
    x.p_max = required<double>(g, "p_max", wi);
    x.q_min = required<double>(g, "q_min", wi);
    x.q_max = required<double>(g, "q_max", wi);
    auto cost = optional_or<std::vector<double>>(g, "cost", {}, wi);
    if (cost.size() > 3) {
      throw CaseError(wi + ": cost must have at most 3 coefficients");
    }
    cost.resize(3, 0.0);
    x.cost_c0 = cost[0];
    x.cost_c1 = cost[1];
    x.cost_c2 = cost[2];
    c.generators.push_back(x);
  }
  if (auto it = j.find("flex_providers"); it != j.end()) {
    for (const auto& f : *it) {
      FlexProvider x;
      x.id = required<int>(f, "id", "flex provider");
      const auto wi = "flex provider " + std::to_string(x.id);
      x.bus = required<int>(f, "bus", wi);
      x.p_up_base = optional_or(f, "p_up", 0.0, wi);
      x.p_dn_base = optional_or(f, "p_dn", 0.0, wi);
      x.q_up_base = optional_or(f, "q_up", 0.0, wi);
      x.q_dn_base = optional_or(f, "q_dn", 0.0, wi);
      x.fi_max = optional_or(f, "fi_max", 0.0, wi);
      x.c_flex = optional_or(f, "c_flex", 0.0, wi);
      x.c_inv = optional_or(f, "c_inv", 0.0, wi);
      c.flex_providers.push_back(x);
    }
  }
  for (const auto& s : detail::required_array(j, "scenarios")) {
    Scenario x;
    x.id = required<int>(s, "id", "scenario");
    const auto wi = "scenario " + std::to_string(x.id);
    x.weight = optional_or(s, "weight", 1.0, wi);
    if (auto it = s.find("buses"); it != s.end()) {
      for (const auto& o : *it) {
        BusOverride bo;
        bo.bus = required<int>(o, "bus", wi);
        if (o.contains("demand_p")) bo.demand_p = required<double>(o, "demand_p", wi);
        if (o.contains("demand_q")) bo.demand_q = required<double>(o, "demand_q", wi);
        if (o.contains("res_p")) bo.res_p = required<double>(o, "res_p", wi);
        x.overrides.push_back(bo);
      }
    }
    c.scenarios.push_back(std::move(x));
  }
  for (const auto& s : detail::required_array(j, "states")) {
    SystemState x;
    x.k = required<int>(s, "k", "state");
    const auto wi = "state " + std::to_string(x.k);
    x.weight = required<double>(s, "weight", wi);
    if (s.contains("outaged_line") && !s["outaged_line"].is_null()) {
      x.outaged_line = required<int>(s, "outaged_line", wi);
    }
    c.states.push_back(x);
  }
  if (auto it = j.find("options"); it != j.end()) {
    for (const auto& o : *it) {
      InvestmentOption x;
      x.id = required<int>(o, "id", "option");
      const auto wi = "option " + std::to_string(x.id);
      const bool has_line = o.contains("line");
      const bool has_flex = o.contains("flex");
      if (has_line == has_flex) {
        throw CaseError(wi + ": exactly one of 'line' or 'flex' required");
      }
      if (has_line) {
        x.kind = LineReinforcement{required<int>(o, "line", wi)};
      } else {
        x.kind = FlexCapacity{required<int>(o, "flex", wi)};
      }
      c.options.push_back(x);
    }
  }
  return c;
}

inline json case_to_json(const NetworkCase& c) {
  json j;
  j["name"] = c.name;
  j["base_mva"] = c.base_mva;
  j["c_curt_load"] = c.c_curt_load;
  j["c_curt_res"] = c.c_curt_res;
  j["buses"] = json::array();
  for (const auto& b : c.buses) {
    j["buses"].push_back({{"id", b.id},
                          {"v_min", b.v_min},
                          {"v_max", b.v_max},
                          {"demand_p", b.demand_p},
                          {"demand_q", b.demand_q},
                          {"res_p", b.res_p},
                          {"reference", b.is_reference}});
  }
  j["lines"] = json::array();
  for (const auto& l : c.lines) {
    j["lines"].push_back({{"id", l.id},
                          {"from", l.from_bus},
                          {"to", l.to_bus},
                          {"g", l.g},
                          {"b", l.b},
                          {"s_max", l.s_max},
                          {"li_max", l.li_max},
                          {"c_inv", l.c_inv}});
  }
  j["generators"] = json::array();
  for (const auto& g : c.generators) {
    j["generators"].push_back(
        {{"id", g.id},
         {"bus", g.bus},
         {"p_min", g.p_min},
         {"p_max", g.p_max},
         {"q_min", g.q_min},
         {"q_max", g.q_max},
         {"cost", {g.cost_c0, g.cost_c1, g.cost_c2}}});
  }
  j["flex_providers"] = json::array();
  for (const auto& f : c.flex_providers) {
    j["flex_providers"].push_back({{"id", f.id},
                                   {"bus", f.bus},
                                   {"p_up", f.p_up_base},
                                   {"p_dn", f.p_dn_base},
                                   {"q_up", f.q_up_base},
                                   {"q_dn", f.q_dn_base},
                                   {"fi_max", f.fi_max},
                                   {"c_flex", f.c_flex},
                                   {"c_inv", f.c_inv}});
  }
  j["scenarios"] = json::array();
  for (const auto& s : c.scenarios) {
    json js = {{"id", s.id}, {"weight", s.weight}, {"buses", json::array()}};
    for (const auto& o : s.overrides) {
      json jo = {{"bus", o.bus}};
      if (o.demand_p) jo["demand_p"] = *o.demand_p;
      if (o.demand_q) jo["demand_q"] = *o.demand_q;
      if (o.res_p) jo["res_p"] = *o.res_p;
      js["buses"].push_back(jo);
    }
    j["scenarios"].push_back(js);
  }
  j["states"] = json::array();
  for (const auto& s : c.states) {
    json js = {{"k", s.k}, {"weight", s.weight}};
    if (s.outaged_line) js["outaged_line"] = *s.outaged_line;
    j["states"].push_back(js);
  }
  j["options"] = json::array();
  for (const auto& o : c.options) {
    if (const auto* lr = std::get_if<LineReinforcement>(&o.kind)) {
      j["options"].push_back({{"id", o.id}, {"line", lr->line}});
    } else {
      j["options"].push_back(
          {{"id", o.id}, {"flex", std::get<FlexCapacity>(o.kind).provider}});
    }
  }
  return j;
}

/// Parses and validates; throws CaseError naming the first offending entity.
inline NetworkCase parse_case(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CaseError(std::string("parse error: ") + e.what());
  }
  auto c = case_from_json(j);
  auto diags = validate_case(c);
  if (has_errors(diags)) {
    std::string msg = "invalid case:";
    for (const auto& d : diags) {
      msg += "\n  " + d.to_string();
    }
    throw CaseError(msg);
  }
  return c;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CaseIoError("cannot open '" + path + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline NetworkCase load_case(const std::string& path) {
  return parse_case(read_text_file(path));
}

inline void save_case(const NetworkCase& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw CaseIoError("cannot write '" + path + "'");
  }
  out << case_to_json(c).dump(2) << '\n';
}

/// Every line whose outage keeps the network connected, as states k = 1..n
/// with the given weight. State 0 is the normal state.
inline std::vector<SystemState> n_minus_1_states(const NetworkCase& c,
                                                 double normal_weight,
                                                 double contingency_weight) {
  std::vector<SystemState> out{{0, std::nullopt, normal_weight}};
  int k = 1;
  for (const auto& l : c.lines) {
    if (detail::is_connected(c, l.id)) {
      out.push_back({k++, l.id, contingency_weight});
    }
  }
  return out;
}

}  // namespace sctep
