// wfcpl: run coupled heat simulations and the benchmark suites.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "wfcpl/experiment.hpp"
#include "wfcpl/spawn.hpp"

namespace {

using namespace wfcpl;
using namespace wfcpl::experiment;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAborted = 3;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--override", o.overrides, "section.key=value, applied after --config")->allow_extra_args(false);
  cmd->add_option("--out", o.out, "CSV output path (default: output.csv_path, else stdout)");
}

// Subcommand defaults, then the config file, then overrides.
ExperimentConfig load_config(const CommonOptions& o, const json& defaults) {
  json doc = defaults;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read config file " + o.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    json file = json::parse(ss.str(), nullptr, false);
    if (file.is_discarded() || !file.is_object()) {
      throw Error(ErrorCode::InvalidConfig, o.config_path + " is not a JSON object");
    }
    for (const auto& [section, body] : file.items()) {
      if (!body.is_object() || !doc.contains(section)) {
        doc[section] = body;  // rejected with its name by from_json
        continue;
      }
      for (const auto& [k, v] : body.items()) doc[section][k] = v;
    }
  }
  for (const auto& o_ : o.overrides) apply_override(doc, o_);
  return from_json(doc);
}

template <class Fn>
void with_output(const CommonOptions& o, const ExperimentConfig& cfg, Fn&& write) {
  const std::string path = o.out.empty() ? cfg.csv_path : o.out;
  if (path.empty()) {
    write(std::cout);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::InvalidConfig, "cannot write " + path);
  write(f);
}

std::vector<Setup> parse_setups(const std::vector<std::string>& specs) {
  std::vector<Setup> out;
  for (const auto& s : specs) {
    const auto x = s.find('x');
    try {
      if (x == std::string::npos) throw std::invalid_argument(s);
      out.push_back({std::stoul(s.substr(0, x)), std::stoul(s.substr(x + 1))});
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "setup '" + s + "' must look like 3x5");
    }
  }
  return out;
}

std::vector<Setup> square(std::initializer_list<std::size_t> ns) {
  std::vector<Setup> out;
  for (auto d : ns) {
    for (auto n : ns) out.push_back({d, n});
  }
  return out;
}

json base_defaults(double t_end, double tol, const char* g_kind) {
  json d = to_json(ExperimentConfig{});
  d["coupling"]["t_end"] = t_end;
  d["coupling"]["tol_rel"] = tol;
  d["problem"]["g_kind"] = g_kind;
  return d;
}

int cmd_run(const CommonOptions& o, const std::string& listen, const std::string& connect, const std::string& role) {
  ExperimentConfig cfg = load_config(o, to_json(ExperimentConfig{}));
  if (!connect.empty()) {
    if (role.empty()) throw Error(ErrorCode::InvalidConfig, "--connect needs --role");
    serve_tcp(cfg, parse_role(role), transport::parse_endpoint(connect));
    return kExitOk;
  }
  if (!role.empty()) throw Error(ErrorCode::InvalidConfig, "--role is only valid with --connect");
  if (!listen.empty()) {
    const auto ep = transport::parse_endpoint(listen);
    cfg.transport = TransportMode::Tcp;
    cfg.address = ep.host;
    cfg.port = ep.port;
  }

  RunOutcome run;
  if (cfg.transport == TransportMode::Tcp) {
    ParticipantProcesses children("/proc/self/exe", cfg);
    run = run_tcp(cfg, children.launcher());
    if (!children.wait()) throw Error(ErrorCode::ChannelClosed, "a participant process failed");
  } else {
    run = run_inprocess(cfg);
  }
  with_output(o, cfg, [&](std::ostream& os) { write_run_csv(os, cfg, run); });
  if (run.sim.aborted) {
    std::cerr << "window " << run.sim.reports.back().window << " did not converge within "
              << cfg.coupling.max_iterations << " iterations; run aborted\n";
    return kExitAborted;
  }
  return kExitOk;
}

int cmd_table(const CommonOptions& o, const std::vector<std::string>& variant_names, std::vector<double> dts,
              const std::vector<std::string>& setup_specs) {
  const ExperimentConfig cfg = load_config(o, base_defaults(10.0, 1e-5, "tri"));
  std::vector<Variant> variants;
  for (const auto& v : variant_names) variants.push_back(parse_variant(v));
  if (variants.empty()) variants = {Variant::Rel_WI, Variant::QN_SC, Variant::rQN_WI, Variant::QN_WI};
  if (dts.empty()) dts = {5.0, 2.0, 1.0, 0.5, 0.2, 0.1};
  std::vector<Setup> setups = setup_specs.empty() ? square({1, 3, 5}) : parse_setups(setup_specs);

  std::cerr << "iteration counts come from a finite-difference discretization; compare trends, not cells\n";
  const auto cells = run_iteration_table(cfg, variants, dts, setups);
  with_output(o, cfg, [&](std::ostream& os) { write_table_csv(os, cells); });
  return kExitOk;
}

struct CaseSpec {
  int alpha;
  heat::Integrator integrator;
  std::size_t p;
};

CaseSpec parse_case(const std::string& text) {
  // alpha:integrator:p, e.g. 2:TR:2
  const auto a = text.find(':');
  const auto b = text.find(':', a == std::string::npos ? a : a + 1);
  if (a == std::string::npos || b == std::string::npos) {
    throw Error(ErrorCode::InvalidConfig, "case '" + text + "' must look like alpha:integrator:p");
  }
  try {
    return {std::stoi(text.substr(0, a)), parse_integrator(text.substr(a + 1, b - a - 1)),
            static_cast<std::size_t>(std::stoul(text.substr(b + 1)))};
  } catch (const std::invalid_argument&) {
    throw Error(ErrorCode::InvalidConfig, "case '" + text + "' must look like alpha:integrator:p");
  }
}

int cmd_recovery(const CommonOptions& o, const std::vector<std::string>& case_specs, std::vector<double> dts,
                 const std::vector<std::string>& setup_specs) {
  json defaults = base_defaults(1.0, 1e-12, "pol");
  const ExperimentConfig cfg = load_config(o, defaults);
  std::vector<CaseSpec> cases;
  for (const auto& c : case_specs) cases.push_back(parse_case(c));
  if (cases.empty()) {
    cases = {{1, heat::Integrator::IE, 1}, {1, heat::Integrator::TR, 1}, {2, heat::Integrator::TR, 2},
             {3, heat::Integrator::SDC, 3}};
  }
  if (dts.empty()) dts = {0.0125, 0.025, 0.05, 0.1, 0.2, 0.5, 1.0};
  const std::vector<Setup> setups = setup_specs.empty() ? square({1, 2, 3, 5}) : parse_setups(setup_specs);

  std::vector<RecoveryCase> grid;
  for (const auto& c : cases) {
    auto g = recovery_grid(c.alpha, c.integrator, c.p, cfg.coupling.scheme, setups, dts);
    grid.insert(grid.end(), g.begin(), g.end());
  }
  const auto results = run_recovery_matrix(cfg, grid);
  std::size_t passed = 0;
  for (const auto& r : results) passed += r.passed ? 1 : 0;
  std::cerr << passed << " of " << results.size() << " cases recovered the exact solution\n";
  with_output(o, cfg, [&](std::ostream& os) { write_recovery_csv(os, results); });
  return kExitOk;
}

int cmd_order(const CommonOptions& o, double dt0, std::size_t levels) {
  const ExperimentConfig cfg = load_config(o, base_defaults(1.0, 1e-5, "tri"));
  const auto study = run_order_study(cfg, halving_levels(dt0, levels));
  with_output(o, cfg, [&](std::ostream& os) { write_order_csv(os, study); });
  const std::size_t clean = levels_before_floor(study.errors);
  std::cerr << "observed order " << format_double(study.order);
  if (clean >= 2 && clean < study.errors.size()) {
    std::cerr << " (first " << clean << " levels: "
              << format_double(compute_observed_order(std::span(study.errors).first(clean),
                                                      std::span(study.dts).first(clean)))
              << ")";
  }
  std::cerr << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Waveform-iteration coupling of two heat-equation participants"};
  app.require_subcommand(1);

  CommonOptions run_o, table_o, recovery_o, order_o;
  std::string listen, connect, role;
  auto* run = app.add_subcommand("run", "one coupled simulation; CSV row per window");
  add_common(run, run_o);
  run->add_option("--listen", listen, "tcp mode: orchestrate on host:port and start both participants");
  run->add_option("--connect", connect, "tcp mode: serve as a participant of the orchestrator at host:port");
  run->add_option("--role", role, "participant role with --connect")->check(CLI::IsMember({"dirichlet", "neumann"}));

  std::vector<std::string> variants, table_setups, cases, recovery_setups;
  std::vector<double> table_dts, recovery_dts;
  auto* table = app.add_subcommand("table", "average coupling iterations per window");
  add_common(table, table_o);
  table->add_option("--variant", variants, "QN-WI, rQN-WI, QN-SC, rel-WI or full-WI (repeatable)");
  table->add_option("--dt", table_dts, "window size (repeatable)");
  table->add_option("--setup", table_setups, "substeps as n_Dxn_N, e.g. 3x5 (repeatable)");

  auto* recovery = app.add_subcommand("recovery", "exact-recovery matrix on the polynomial solution");
  add_common(recovery, recovery_o);
  recovery->add_option("--case", cases, "alpha:integrator:p, e.g. 2:TR:2 (repeatable)");
  recovery->add_option("--dt", recovery_dts, "window size (repeatable)");
  recovery->add_option("--setup", recovery_setups, "substeps as n_Dxn_N (repeatable)");

  double dt0 = 0.25;
  std::size_t levels = 5;
  auto* order = app.add_subcommand("order", "convergence-order study on the trigonometric solution");
  add_common(order, order_o);
  order->add_option("--dt0", dt0, "coarsest window size")->check(CLI::PositiveNumber);
  order->add_option("--levels", levels, "number of halvings + 1")->check(CLI::Range(3, 20));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_o, listen, connect, role);
    if (*table) return cmd_table(table_o, variants, table_dts, table_setups);
    if (*recovery) return cmd_recovery(recovery_o, cases, recovery_dts, recovery_setups);
    if (*order) return cmd_order(order_o, dt0, levels);
  } catch (const Error& e) {
    std::cerr << "wfcpl: " << e.what() << '\n';
    return e.code() == ErrorCode::InvalidConfig ? kExitConfig : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "wfcpl: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
