#pragma once

// Import of MATPOWER-style case files (version 2 tables). Only the fields
// the expansion model uses are read: bus demand and voltage limits, in-service
// generators with polynomial costs, and in-service branches reduced to a
// series admittance. Shunts, charging, taps and phase shifts are dropped.

#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sctep/network_case.hpp"

namespace sctep {

struct MatpowerImportOptions {
  double c_curt_load = 1e4;
  double c_curt_res = 100.0;
  double normal_weight = 0.95;
  double contingency_weight = 0.05;
  double unlimited_rating = 1e5;  // MVA used where rateA is 0
};

namespace detail {

using Table = std::vector<std::vector<double>>;

inline std::string strip_matlab_comments(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool in_comment = false;
  bool in_string = false;
  for (char ch : text) {
    if (ch == '\n') {
      in_comment = false;
      in_string = false;
      out += ch;
      continue;
    }
    if (in_comment) continue;
    if (ch == '\'') in_string = !in_string;
    if (ch == '%' && !in_string) {
      in_comment = true;
      continue;
    }
    out += ch;
  }
  return out;
}

/// Rows of `mpc.<name> = [ ... ];`.
inline std::optional<Table> matpower_table(const std::string& text, const std::string& name) {
  const std::string key = "mpc." + name;
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    const std::size_t after = pos + key.size();
    if (after < text.size() && (std::isalnum(static_cast<unsigned char>(text[after])) ||
                                text[after] == '_')) {
      pos = after;
      continue;
    }
    const std::size_t open = text.find('[', after);
    const std::size_t eq = text.find('=', after);
    if (open == std::string::npos || eq == std::string::npos || eq > open) {
      pos = after;
      continue;
    }
    const std::size_t close = text.find(']', open);
    if (close == std::string::npos) throw CaseError("unterminated table mpc." + name);
    Table rows;
    std::string body = text.substr(open + 1, close - open - 1);
    for (char& ch : body) {
      if (ch == ',' || ch == '\t' || ch == '\r') ch = ' ';
      if (ch == '\n') ch = ';';
    }
    std::stringstream rs(body);
    std::string row;
    while (std::getline(rs, row, ';')) {
      std::stringstream cs(row);
      std::vector<double> vals;
      std::string tok;
      while (cs >> tok) {
        try {
          std::size_t used = 0;
          const double v = tok == "Inf" || tok == "inf" ? std::numeric_limits<double>::infinity()
                           : tok == "-Inf" || tok == "-inf" ? -std::numeric_limits<double>::infinity()
                                                            : std::stod(tok, &used);
          if (used != 0 && used != tok.size()) throw std::invalid_argument(tok);
          vals.push_back(v);
        } catch (const std::exception&) {
          throw CaseError("mpc." + name + ": bad number '" + tok + "'");
        }
      }
      if (!vals.empty()) rows.push_back(std::move(vals));
    }
    return rows;
  }
  return std::nullopt;
}

inline std::optional<double> matpower_scalar(const std::string& text, const std::string& name) {
  const std::string key = "mpc." + name;
  const std::size_t pos = text.find(key);
  if (pos == std::string::npos) return std::nullopt;
  const std::size_t eq = text.find('=', pos);
  const std::size_t end = text.find(';', eq);
  if (eq == std::string::npos || end == std::string::npos) return std::nullopt;
  try {
    return std::stod(text.substr(eq + 1, end - eq - 1));
  } catch (const std::exception&) {
    throw CaseError("mpc." + name + " is not a number");
  }
}

}  // namespace detail

inline NetworkCase parse_matpower(const std::string& source,
                                  const MatpowerImportOptions& opt = {}) {
  const std::string text = detail::strip_matlab_comments(source);
  const auto bus = detail::matpower_table(text, "bus");
  const auto gen = detail::matpower_table(text, "gen");
  const auto branch = detail::matpower_table(text, "branch");
  if (!bus || !gen || !branch) throw CaseError("matpower: bus, gen and branch tables are required");
  const auto gencost = detail::matpower_table(text, "gencost");

  NetworkCase c;
  c.base_mva = detail::matpower_scalar(text, "baseMVA").value_or(100.0);
  c.c_curt_load = opt.c_curt_load;
  c.c_curt_res = opt.c_curt_res;

  for (const auto& r : *bus) {
    if (r.size() < 13) throw CaseError("matpower: bus rows need 13 columns");
    Bus b;
    b.id = static_cast<int>(r[0]);
    b.is_reference = static_cast<int>(r[1]) == 3;
    b.demand_p = r[2];
    b.demand_q = r[3];
    b.v_max = r[11];
    b.v_min = r[12];
    c.buses.push_back(b);
  }

  int gid = 0;
  for (std::size_t g = 0; g < gen->size(); ++g) {
    const auto& r = (*gen)[g];
    if (r.size() < 10) throw CaseError("matpower: gen rows need 10 columns");
    ++gid;
    if (r[7] <= 0) continue;  // out of service
    Generator G;
    G.id = gid;
    G.bus = static_cast<int>(r[0]);
    G.q_max = r[3];
    G.q_min = r[4];
    G.p_max = r[8];
    G.p_min = r[9];
    if (gencost && g < gencost->size()) {
      const auto& cr = (*gencost)[g];
      if (cr.size() >= 4 && static_cast<int>(cr[0]) == 2) {
        const int n = static_cast<int>(cr[3]);
        if (n > 3) throw CaseError("matpower: generator " + std::to_string(gid) +
                                   " cost is above quadratic");
        if (static_cast<int>(cr.size()) < 4 + n) throw CaseError("matpower: short gencost row");
        // Highest order first.
        std::vector<double> coef(3, 0.0);
        for (int k = 0; k < n; ++k) coef[static_cast<std::size_t>(n - 1 - k)] = cr[4 + static_cast<std::size_t>(k)];
        G.cost_c0 = coef[0];
        G.cost_c1 = coef[1];
        G.cost_c2 = coef[2];
      } else if (!cr.empty()) {
        throw CaseError("matpower: only polynomial generator costs are supported");
      }
    }
    c.generators.push_back(G);
  }

  int lid = 0;
  for (const auto& r : *branch) {
    if (r.size() < 11) throw CaseError("matpower: branch rows need 11 columns");
    ++lid;
    if (r[10] <= 0) continue;
    const double rr = r[2];
    const double xx = r[3];
    const double z2 = rr * rr + xx * xx;
    if (z2 == 0.0) throw CaseError("matpower: branch " + std::to_string(lid) + " has zero impedance");
    Line l;
    l.id = lid;
    l.from_bus = static_cast<int>(r[0]);
    l.to_bus = static_cast<int>(r[1]);
    l.g = rr / z2;
    l.b = -xx / z2;
    l.s_max = r[5] > 0 ? r[5] : opt.unlimited_rating;
    c.lines.push_back(l);
  }

  c.scenarios.push_back({1, 1.0, {}});
  c.states = n_minus_1_states(c, opt.normal_weight, opt.contingency_weight);
  return c;
}

inline NetworkCase import_matpower(const std::string& path, const MatpowerImportOptions& opt = {}) {
  return parse_matpower(read_text_file(path), opt);
}

}  // namespace sctep
