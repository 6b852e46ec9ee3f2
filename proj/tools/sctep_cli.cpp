// sctep: command-line front end.
//
// Exit codes: 0 success, 1 domain or validation failure, 2 I/O or usage error.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sctep/coalition_game.hpp"
#include "sctep/formulation.hpp"
#include "sctep/matpower.hpp"
#include "sctep/network_case.hpp"
#include "sctep/report.hpp"
#include "sctep/runner.hpp"

namespace fs = std::filesystem;
using namespace sctep;

namespace {

constexpr int kOk = 0;
constexpr int kDomain = 1;
constexpr int kIo = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::size_t default_workers() {
  if (const char* env = std::getenv("SCTEP_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw UsageError("SCTEP_WORKERS must be a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Metric parse_metric(const std::string& s) {
  if (auto m = metric_from_string(s)) return *m;
  throw UsageError("--objective must be curtailment or cost");
}

std::vector<int> parse_ids(const std::string& text) {
  std::vector<int> ids;
  std::string tok;
  std::stringstream ss(text);
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      ids.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("bad option id '" + tok + "'");
    }
  }
  return ids;
}

Coalition parse_coalition(const NetworkCase& c, const std::string& spec) {
  if (spec == "all") return Coalition::all(c.options.size());
  if (spec == "none" || spec.empty()) return {};
  return coalition_from_ids(c, parse_ids(spec));
}

/// Kept-player file: option ids separated by whitespace or commas; '#'
/// starts a comment.
std::vector<int> read_player_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open player file '" + path + "'");
  std::vector<int> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    for (char& ch : line) {
      if (ch == ',') ch = ' ';
    }
    std::stringstream ss(line);
    std::string tok;
    while (ss >> tok) {
      auto part = parse_ids(tok);
      ids.insert(ids.end(), part.begin(), part.end());
    }
  }
  return ids;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::string fmt(double v, int prec = 4) {
  if (std::abs(v) < 0.5 * std::pow(10.0, -prec)) v = 0.0;  // no "-0.000"
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(prec) << v;
  return ss.str();
}

/// Objective in display units.
std::string show_objective(double v, Metric m, bool mln) {
  if (m == Metric::AvoidedCurtailment) return fmt(v, 3) + " MW";
  if (mln) return fmt(v / 1e6, 4) + " mln EUR/h";
  return fmt(v, 2) + " EUR/h";
}

struct Common {
  std::string case_path;
  std::string objective = "curtailment";
  bool mln = false;
};

int cmd_validate(const std::string& path) {
  const std::string text = read_text_file(path);
  NetworkCase c;
  try {
    c = case_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDomain;
  }
  const auto diags = validate_case(c);
  for (const auto& d : diags) std::cout << d.to_string() << '\n';
  if (has_errors(diags)) return kDomain;
  std::cout << "ok: " << c.buses.size() << " buses, " << c.lines.size() << " lines, "
            << c.generators.size() << " generators, " << c.flex_providers.size()
            << " flex providers, " << c.scenarios.size() << " scenarios, " << c.states.size()
            << " states, " << c.options.size() << " options\n";
  return kOk;
}

int cmd_solve(const Common& o, const std::string& coalition, const std::string& out_path,
              bool log) {
  const auto c = load_case(o.case_path);
  const Metric metric = parse_metric(o.objective);
  const Coalition s = parse_coalition(c, coalition);
  const auto p = build_nlp(c, s, objective_for(metric));
  SolverSettings settings;
  settings.keep_trace = false;
  if (log) {
    settings.on_iteration = [](const IterationRecord& it) {
      nlohmann::json j = {{"iter", it.iter},       {"objective", it.objective},
                          {"mu", it.mu},           {"inf_pr", it.inf_pr},
                          {"inf_du", it.inf_du},   {"compl", it.compl_},
                          {"alpha_pr", it.alpha_pr}, {"alpha_du", it.alpha_du},
                          {"delta_w", it.delta_w}, {"ls", it.ls_trials}};
      std::cerr << j.dump() << '\n';
    };
  }
  const auto r = solve(p.qp, settings, InitialPoint{flat_start(p), std::nullopt});
  const auto sum = summarize(c, p, r);

  std::cout << "status      " << to_string(r.status) << '\n';
  std::cout << "objective   " << show_objective(r.objective, metric, o.mln) << '\n';
  std::cout << "iterations  " << r.iterations << "  (" << fmt(r.wall_seconds, 2) << " s)\n";
  for (const auto& [id, v] : sum.line_investment) {
    const auto& l = c.lines[*c.line_index(id)];
    std::cout << "LI  line " << id << " (" << l.from_bus << "-" << l.to_bus << ")  " << fmt(v, 3)
              << " MVA\n";
  }
  for (const auto& [id, v] : sum.flex_investment) {
    const auto& f = c.flex_providers[*c.flex_index(id)];
    std::cout << "FI  flex " << id << " (bus " << f.bus << ")  " << fmt(v, 3) << " MW\n";
  }
  for (const auto& b : sum.blocks) {
    std::cout << "s" << b.scenario << " k" << b.state << "  LC " << fmt(b.load_curtailment, 3)
              << " MW  RC " << fmt(b.res_curtailment, 3) << " MW\n";
  }
  std::cout << "total LC    " << fmt(sum.total_load_curtailment, 3) << " MW\n";
  if (!out_path.empty()) write_file(out_path, solve_artifact(c, p, r, settings).dump(2) + "\n");
  if (!r.ok()) {
    std::cerr << "solver: " << to_string(r.status) << ": " << r.message << '\n';
    return kDomain;
  }
  return kOk;
}

int cmd_screen(const Common& o, std::size_t top, const std::string& kept_path,
               std::size_t workers) {
  const auto c = load_case(o.case_path);
  const Metric metric = parse_metric(o.objective);
  ValueStore store;
  const auto ranked = screen_options(c, metric, game_settings(), workers, store);

  std::cout << "baseline    " << show_objective(store.find({})->objective, metric, o.mln) << '\n';
  std::cout << "rank  id  option    value       status\n";
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const auto& e = ranked[r];
    std::cout << std::setw(4) << r + 1 << std::setw(4) << e.player.id << "  " << std::left
              << std::setw(8) << e.player.label << std::right << "  " << std::setw(10)
              << fmt(metric == Metric::ExpectedCostReduction && o.mln ? e.value / 1e6 : e.value)
              << "  " << to_string(e.status) << (e.tied ? "  (tie)" : "") << '\n';
  }
  bool failed = false;
  for (const auto& e : ranked) failed = failed || e.status != SolveStatus::Optimal;
  if (!kept_path.empty()) {
    std::ostringstream ss;
    ss << "# top " << std::min(top, ranked.size()) << " by " << to_string(metric) << '\n';
    for (std::size_t r = 0; r < ranked.size() && r < top; ++r) ss << ranked[r].player.id << '\n';
    write_file(kept_path, ss.str());
  }
  return failed ? kDomain : kOk;
}

struct GameFlags {
  std::string players = "all";
  bool exact = false;
  std::size_t samples = 0;
  std::uint64_t seed = 1;
  std::size_t workers = 0;
  bool resume = false;
  std::string out;
  std::string journal;
  std::size_t stop_after = 0;
  double kkt_tol = game_settings().kkt_tol;
};

int cmd_game(const Common& o, const GameFlags& g) {
  const auto c = load_case(o.case_path);
  GameRun run;
  run.network = &c;
  run.metric = parse_metric(o.objective);
  run.settings = game_settings();
  run.settings.kkt_tol = g.kkt_tol;
  run.players = g.players == "all" ? all_players(c)
                                   : players_from_ids(c, read_player_file(g.players));
  if (g.exact && g.samples > 0) throw UsageError("--exact and --sample are exclusive");
  run.estimator = g.samples > 0 ? Estimator{false, g.samples, g.seed} : Estimator{};
  run.workers = g.workers > 0 ? g.workers : default_workers();
  run.journal = g.journal.empty() ? fs::path(g.out + ".journal") : fs::path(g.journal);
  run.resume = g.resume;
  if (g.stop_after > 0) run.stop_after = g.stop_after;

  ValueStore store;
  const auto out = run_game(run, store);
  std::cerr << "solved " << out.stats.solved << " of " << out.stats.requested << " coalitions ("
            << out.stats.cached << " from journal, " << out.stats.failed << " failed, "
            << out.repairs << " repaired) in " << fmt(out.stats.wall_seconds, 1) << " s\n";
  if (!out.complete) {
    std::cerr << "interrupted; rerun with --resume to continue\n";
    return kDomain;
  }
  const auto& res = out.result;
  write_file(g.out, game_to_json(res, artifact_metadata(c, run.settings)).dump(1) + "\n");

  const bool cost = run.metric == Metric::ExpectedCostReduction;
  const double scale = cost && o.mln ? 1e-6 : 1.0;
  std::cout << "metric " << to_string(run.metric) << "  baseline "
            << show_objective(res.baseline_objective, run.metric, o.mln) << '\n';
  std::cout << "player      shapley  individual  grand-marginal\n";
  for (std::size_t i = 0; i < res.players.size(); ++i) {
    std::cout << std::left << std::setw(8) << res.players[i].label << std::right << std::setw(12)
              << fmt(res.shapley[i] * scale) << std::setw(12) << fmt(res.individual[i] * scale)
              << std::setw(16) << fmt(res.grand_marginal[i] * scale);
    if (!res.std_error.empty()) std::cout << "  +/- " << fmt(res.std_error[i] * scale);
    std::cout << '\n';
  }
  if (!res.violations.empty()) {
    std::cout << res.violations.size() << " monotonicity violation(s) remain\n";
  }
  return kOk;
}

int cmd_report(const std::string& game_path, const std::string& format, const std::string& out) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(game_path));
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDomain;
  }
  const auto g = game_from_json(j);
  const auto meta = j.value("metadata", nlohmann::json::object());
  std::string text;
  if (format == "csv") {
    std::ostringstream ss;
    write_mc_csv(g, meta, ss);
    text = ss.str();
  } else {
    const auto bundle = report_bundle(g, meta);
    const auto problems = validate_bundle(bundle);
    if (!problems.empty()) {
      for (const auto& p : problems) std::cerr << "error: " << p << '\n';
      return kDomain;
    }
    text = bundle.dump(1) + "\n";
  }
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_file(out, text);
  }
  return kOk;
}

int cmd_dump(const Common& o, const std::string& coalition, const std::string& out) {
  const auto c = load_case(o.case_path);
  const auto p = build_nlp(c, parse_coalition(c, coalition), objective_for(parse_metric(o.objective)));
  if (out.empty() || out == "-") {
    dump_nlp(c, p, std::cout);
  } else {
    std::ofstream f(out);
    if (!f) throw IoError("cannot write '" + out + "'");
    dump_nlp(c, p, f);
  }
  return kOk;
}

int cmd_import(const std::string& in, const std::string& out, const MatpowerImportOptions& opt) {
  const auto c = import_matpower(in, opt);
  const auto diags = validate_case(c);
  for (const auto& d : diags) std::cerr << d.to_string() << '\n';
  if (has_errors(diags)) return kDomain;
  write_file(out, case_to_json(c).dump(2) + "\n");
  std::cout << "wrote " << out << ": " << c.buses.size() << " buses, " << c.lines.size()
            << " lines, " << c.states.size() - 1 << " contingencies\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic AC security-constrained expansion planning with Shapley valuation"};
  app.set_version_flag("--version", std::string(SCTEP_VERSION));
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub, bool with_objective) {
    sub->add_option("case", common.case_path, "case JSON file")->required();
    if (with_objective) {
      sub->add_option("--objective", common.objective, "curtailment or cost")
          ->check(CLI::IsMember({"curtailment", "cost"}));
      sub->add_flag("--mln", common.mln, "show costs in mln EUR/h");
    }
  };

  auto* validate = app.add_subcommand("validate", "check a case file");
  add_common(validate, false);

  std::string coalition = "none";
  std::string out;
  auto* solve_cmd = app.add_subcommand("solve", "solve one coalition");
  add_common(solve_cmd, true);
  solve_cmd->add_option("--coalition", coalition, "all, none or comma-separated option ids");
  solve_cmd->add_option("-o,--out", out, "write the full result as JSON");
  bool log = false;
  solve_cmd->add_flag("--log", log, "iteration log as JSON lines on stderr");

  std::size_t top = 0;
  std::string kept;
  std::size_t workers = 0;
  auto* screen = app.add_subcommand("screen", "rank options by their single-option value");
  add_common(screen, true);
  screen->add_option("--top", top, "number of options to keep");
  screen->add_option("--kept", kept, "write the kept option ids here");
  screen->add_option("-w,--workers", workers, "parallel solves (default: SCTEP_WORKERS or cores)");

  GameFlags gf;
  auto* game = app.add_subcommand("game", "evaluate the coalition game");
  add_common(game, true);
  game->add_option("--players", gf.players, "player file or 'all'");
  auto* exact = game->add_flag("--exact", gf.exact, "all 2^N coalitions (default)");
  auto* sample = game->add_option("--sample", gf.samples, "permutation samples")
                     ->check(CLI::PositiveNumber);
  exact->excludes(sample);
  game->add_option("--seed", gf.seed, "sampling seed");
  game->add_option("-w,--workers", gf.workers, "parallel solves (default: SCTEP_WORKERS or cores)");
  game->add_flag("--resume", gf.resume, "reuse coalition values from the journal");
  game->add_option("-o,--out", gf.out, "GameResult JSON")->required();
  game->add_option("--journal", gf.journal, "journal path (default: <out>.journal)");
  game->add_option("--kkt-tol", gf.kkt_tol, "solver KKT tolerance for coalition values")
      ->check(CLI::PositiveNumber);
  game->add_option("--stop-after", gf.stop_after, "stop after this many solves")->group("");

  std::string game_path;
  std::string format = "json";
  auto* report = app.add_subcommand("report", "export report data from a game artifact");
  report->add_option("game", game_path, "GameResult JSON")->required();
  report->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  report->add_option("-o,--out", out, "output file (default stdout)");

  auto* dump = app.add_subcommand("dump-nlp", "write the NLP in plain text");
  add_common(dump, true);
  dump->add_option("--coalition", coalition, "all, none or comma-separated option ids");
  dump->add_option("-o,--out", out, "output file (default stdout)");

  std::string mp_in;
  MatpowerImportOptions mp;
  auto* imp = app.add_subcommand("import-matpower", "convert a MATPOWER case");
  imp->add_option("input", mp_in, "MATPOWER .m file")->required();
  imp->add_option("output", out, "case JSON to write")->required();
  imp->add_option("--c-curt-load", mp.c_curt_load, "load curtailment penalty, EUR/MWh");
  imp->add_option("--c-curt-res", mp.c_curt_res, "RES curtailment penalty, EUR/MWh");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kIo;
  }

  try {
    if (*validate) return cmd_validate(common.case_path);
    if (*solve_cmd) return cmd_solve(common, coalition, out, log);
    if (*screen) {
      return cmd_screen(common, top, kept, workers > 0 ? workers : default_workers());
    }
    if (*game) return cmd_game(common, gf);
    if (*report) return cmd_report(game_path, format, out);
    if (*dump) return cmd_dump(common, coalition, out);
    if (*imp) return cmd_import(mp_in, out, mp);
  } catch (const CaseIoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const RunError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDomain;
  }
  return kIo;
}
