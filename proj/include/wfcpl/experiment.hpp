#pragma once

// Experiment configuration and the benchmark suites built on the coupled
// heat problem: single runs, iteration tables, exact-recovery matrices and
// convergence-order studies.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wfcpl/accel.hpp"
#include "wfcpl/error.hpp"
#include "wfcpl/heat.hpp"
#include "wfcpl/orchestrator.hpp"
#include "wfcpl/transport.hpp"

namespace wfcpl::experiment {

using json = nlohmann::json;

enum class TransportMode { InProcess, Tcp };

struct ExperimentConfig {
  heat::ManufacturedSolution problem{};
  CouplingConfig coupling{};
  heat::Integrator dirichlet = heat::Integrator::IE;
  heat::Integrator neumann = heat::Integrator::IE;
  std::size_t sdc_sweeps = 16;
  double h = 0.05;
  TransportMode transport = TransportMode::InProcess;
  std::string address = "127.0.0.1";
  /// 0 picks a free port.
  std::uint16_t port = 0;
  std::string csv_path;

  std::size_t cells() const { return static_cast<std::size_t>(std::llround(1.0 / h)); }

  heat::HeatSetup setup(heat::Side side) const {
    return {side, side == heat::Side::Dirichlet ? dirichlet : neumann, problem, cells(), sdc_sweeps};
  }

  std::size_t substeps(heat::Side side) const { return side == heat::Side::Dirichlet ? coupling.n_D : coupling.n_N; }

  void validate() const {
    if (problem.alpha < 1) throw Error(ErrorCode::InvalidConfig, "problem.alpha must be a positive integer");
    if (!(h > 0.0) || h > 0.5 || std::abs(static_cast<double>(cells()) * h - 1.0) > 1e-9) {
      throw Error(ErrorCode::InvalidConfig, "grid.h must be 1/N for an integer N >= 2");
    }
    coupling.validate();
  }

  bool operator==(const ExperimentConfig&) const = default;
};

// ---- names ------------------------------------------------------------------

namespace detail {

template <class E>
using NameTable = std::span<const std::pair<std::string_view, E>>;

inline constexpr std::array<std::pair<std::string_view, CouplingScheme>, 2> kSchemes{
    {{"SC", CouplingScheme::SC}, {"WI", CouplingScheme::WI}}};
inline constexpr std::array<std::pair<std::string_view, AccelScheme>, 3> kAccels{
    {{"full_fp", AccelScheme::FullFP}, {"relaxation", AccelScheme::Relaxation}, {"qn", AccelScheme::QN}}};
inline constexpr std::array<std::pair<std::string_view, Weighting>, 2> kWeightings{
    {{"none", Weighting::None}, {"residual_sum", Weighting::ResidualSum}}};
inline constexpr std::array<std::pair<std::string_view, ResidualView>, 3> kViews{
    {{"all_substeps", ResidualView::AllSubsteps},
     {"last_substep", ResidualView::LastSubstep},
     {"end_value", ResidualView::EndValue}}};
inline constexpr std::array<std::pair<std::string_view, heat::Integrator>, 3> kIntegrators{
    {{"IE", heat::Integrator::IE}, {"TR", heat::Integrator::TR}, {"SDC", heat::Integrator::SDC}}};
inline constexpr std::array<std::pair<std::string_view, heat::ManufacturedSolution::Kind>, 2> kKinds{
    {{"pol", heat::ManufacturedSolution::Kind::Pol}, {"tri", heat::ManufacturedSolution::Kind::Tri}}};
inline constexpr std::array<std::pair<std::string_view, TransportMode>, 2> kModes{
    {{"inprocess", TransportMode::InProcess}, {"tcp", TransportMode::Tcp}}};

template <class E, std::size_t N>
std::string name_of(const std::array<std::pair<std::string_view, E>, N>& table, E value) {
  for (const auto& [name, v] : table) {
    if (v == value) return std::string(name);
  }
  return "?";
}

template <class E, std::size_t N>
E value_of(const std::array<std::pair<std::string_view, E>, N>& table, std::string_view name, const std::string& key) {
  std::string choices;
  for (const auto& [n, v] : table) {
    if (n == name) return v;
    choices += (choices.empty() ? "" : ", ") + std::string(n);
  }
  throw Error(ErrorCode::InvalidConfig, key + ": '" + std::string(name) + "' is not one of " + choices);
}

}  // namespace detail

inline std::string to_string(CouplingScheme s) { return detail::name_of(detail::kSchemes, s); }
inline std::string to_string(AccelScheme s) { return detail::name_of(detail::kAccels, s); }
inline std::string to_string(Weighting w) { return detail::name_of(detail::kWeightings, w); }
inline std::string to_string(ResidualView v) { return detail::name_of(detail::kViews, v); }
inline std::string to_string(heat::Integrator i) { return detail::name_of(detail::kIntegrators, i); }
inline std::string to_string(TransportMode m) { return detail::name_of(detail::kModes, m); }

inline heat::Integrator parse_integrator(std::string_view name) {
  return detail::value_of(detail::kIntegrators, name, "integrator");
}

/// Shortest decimal form that reads back to the same double; empty for NaN.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ---- JSON -------------------------------------------------------------------

inline json to_json(const ExperimentConfig& c) {
  const auto& a = c.coupling.accel;
  return json{
      {"problem",
       {{"g_kind", detail::name_of(detail::kKinds, c.problem.kind)}, {"alpha", c.problem.alpha}}},
      {"coupling",
       {{"scheme", to_string(c.coupling.scheme)},
        {"n_D", c.coupling.n_D},
        {"n_N", c.coupling.n_N},
        {"p", c.coupling.p},
        {"dt_window", c.coupling.dt_window},
        {"t_end", c.coupling.t_end},
        {"tol_rel", c.coupling.tol_rel},
        {"max_iterations", c.coupling.max_iterations},
        {"abort_on_divergence", c.coupling.abort_on_divergence}}},
      {"accel",
       {{"scheme", to_string(a.scheme)},
        {"omega", a.omega},
        {"qr2_epsilon", a.qr2_epsilon},
        {"weighting", to_string(a.weighting)},
        {"residual_view", to_string(a.residual_view)}}},
      {"integrators",
       {{"dirichlet", to_string(c.dirichlet)}, {"neumann", to_string(c.neumann)}, {"sdc_sweeps", c.sdc_sweeps}}},
      {"grid", {{"h", c.h}}},
      {"transport", {{"mode", to_string(c.transport)}, {"address", c.address}, {"port", c.port}}},
      {"output", {{"csv_path", c.csv_path}}},
  };
}

namespace detail {

class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (!doc.contains(name_)) return;
    body_ = &doc.at(name_);
    if (!body_->is_object()) throw Error(ErrorCode::InvalidConfig, name_ + " must be an object");
  }

  void expect_keys(std::initializer_list<std::string_view> known) const {
    if (body_ == nullptr) return;
    for (const auto& [k, v] : body_->items()) {
      if (std::find(known.begin(), known.end(), k) == known.end()) {
        throw Error(ErrorCode::InvalidConfig, "unknown key '" + name_ + "." + k + "'");
      }
    }
  }

  void number(const char* key, double& out) const {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw Error(ErrorCode::InvalidConfig, path(key) + " must be a number");
      out = v->get<double>();
    }
  }

  template <class T>
  void count(const char* key, T& out) const {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned() || v->get<std::uint64_t>() > std::numeric_limits<T>::max()) {
        throw Error(ErrorCode::InvalidConfig, path(key) + " must be a non-negative integer");
      }
      out = static_cast<T>(v->get<std::uint64_t>());
    }
  }

  void integer(const char* key, int& out) const {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw Error(ErrorCode::InvalidConfig, path(key) + " must be an integer");
      const auto x = v->get<std::int64_t>();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        throw Error(ErrorCode::InvalidConfig, path(key) + " out of range");
      }
      out = static_cast<int>(x);
    }
  }

  void boolean(const char* key, bool& out) const {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw Error(ErrorCode::InvalidConfig, path(key) + " must be true or false");
      out = v->get<bool>();
    }
  }

  void string(const char* key, std::string& out) const {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw Error(ErrorCode::InvalidConfig, path(key) + " must be a string");
      out = v->get<std::string>();
    }
  }

  template <class E, std::size_t N>
  void choice(const char* key, const std::array<std::pair<std::string_view, E>, N>& table, E& out) const {
    std::string s;
    string(key, s);
    if (find(key)) out = value_of(table, s, path(key));
  }

 private:
  const json* find(const char* key) const {
    if (body_ == nullptr || !body_->contains(key)) return nullptr;
    return &body_->at(key);
  }
  std::string path(const char* key) const { return name_ + "." + key; }

  std::string name_;
  const json* body_ = nullptr;
};

}  // namespace detail

/// Reads a config document; absent keys keep their defaults.
inline ExperimentConfig from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  static constexpr std::array<std::string_view, 7> kSections{"problem",     "coupling", "accel",  "integrators",
                                                             "grid",        "transport", "output"};
  for (const auto& [k, v] : doc.items()) {
    if (std::find(kSections.begin(), kSections.end(), k) == kSections.end()) {
      throw Error(ErrorCode::InvalidConfig, "unknown key '" + k + "'");
    }
  }
  ExperimentConfig c;

  const detail::Section problem(doc, "problem");
  problem.expect_keys({"g_kind", "alpha"});
  problem.choice("g_kind", detail::kKinds, c.problem.kind);
  problem.integer("alpha", c.problem.alpha);

  const detail::Section coupling(doc, "coupling");
  coupling.expect_keys({"scheme", "n_D", "n_N", "p", "dt_window", "t_end", "tol_rel", "max_iterations",
                        "abort_on_divergence"});
  coupling.choice("scheme", detail::kSchemes, c.coupling.scheme);
  coupling.count("n_D", c.coupling.n_D);
  coupling.count("n_N", c.coupling.n_N);
  coupling.count("p", c.coupling.p);
  coupling.number("dt_window", c.coupling.dt_window);
  coupling.number("t_end", c.coupling.t_end);
  coupling.number("tol_rel", c.coupling.tol_rel);
  coupling.count("max_iterations", c.coupling.max_iterations);
  coupling.boolean("abort_on_divergence", c.coupling.abort_on_divergence);

  const detail::Section accel(doc, "accel");
  accel.expect_keys({"scheme", "omega", "qr2_epsilon", "weighting", "residual_view"});
  accel.choice("scheme", detail::kAccels, c.coupling.accel.scheme);
  accel.number("omega", c.coupling.accel.omega);
  accel.number("qr2_epsilon", c.coupling.accel.qr2_epsilon);
  accel.choice("weighting", detail::kWeightings, c.coupling.accel.weighting);
  accel.choice("residual_view", detail::kViews, c.coupling.accel.residual_view);

  const detail::Section integrators(doc, "integrators");
  integrators.expect_keys({"dirichlet", "neumann", "sdc_sweeps"});
  integrators.choice("dirichlet", detail::kIntegrators, c.dirichlet);
  integrators.choice("neumann", detail::kIntegrators, c.neumann);
  integrators.count("sdc_sweeps", c.sdc_sweeps);

  const detail::Section grid(doc, "grid");
  grid.expect_keys({"h"});
  grid.number("h", c.h);

  const detail::Section transport(doc, "transport");
  transport.expect_keys({"mode", "address", "port"});
  transport.choice("mode", detail::kModes, c.transport);
  transport.string("address", c.address);
  transport.count("port", c.port);

  const detail::Section output(doc, "output");
  output.expect_keys({"csv_path"});
  output.string("csv_path", c.csv_path);

  c.validate();
  return c;
}

inline ExperimentConfig parse_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(doc);
}

inline std::string serialize_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

/// Applies "section.key=value" overrides to a config document. The value is
/// read as JSON when it parses, otherwise as a string.
inline void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw Error(ErrorCode::InvalidConfig, "override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  const auto dot = key.find('.');
  if (dot == std::string::npos || key.find('.', dot + 1) != std::string::npos) {
    throw Error(ErrorCode::InvalidConfig, "override key '" + key + "' must look like section.key");
  }
  const std::string section = key.substr(0, dot);
  const std::string field = key.substr(dot + 1);
  const json schema = to_json(ExperimentConfig{});
  if (!schema.contains(section) || !schema.at(section).contains(field)) {
    throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "'");
  }
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  doc[section][field] = std::move(value);
}

/// Parameters both ends of a transport session must agree on.
inline transport::ConfigDigest config_digest(const ExperimentConfig& c) {
  transport::ConfigDigest d;
  const json doc = to_json(c);
  for (const char* section : {"problem", "coupling", "accel", "integrators", "grid"}) {
    for (const auto& [k, v] : doc.at(section).items()) {
      std::string text;
      if (v.is_string()) {
        text = v.get<std::string>();
      } else if (v.is_number_float()) {
        text = format_double(v.get<double>());
      } else {
        text = v.dump();
      }
      d[std::string(section) + "." + k] = text;
    }
  }
  return d;
}

inline std::string role_name(heat::Side side) { return side == heat::Side::Dirichlet ? "dirichlet" : "neumann"; }

inline heat::Side parse_role(std::string_view name) {
  if (name == "dirichlet") return heat::Side::Dirichlet;
  if (name == "neumann") return heat::Side::Neumann;
  throw Error(ErrorCode::InvalidConfig, "role must be dirichlet or neumann, got '" + std::string(name) + "'");
}

// ---- coupled runs -------------------------------------------------------------

struct RunOutcome {
  SimulationResult sim;
  /// L2 error over both subdomains at every window end; NaN when the
  /// participants ran in other processes.
  std::vector<double> l2_errors;
};

namespace detail {

// Records the subdomain's squared error each time a window is accepted.
class RecordingParticipant : public heat::HeatParticipant {
 public:
  RecordingParticipant(heat::HeatSetup setup, std::size_t substeps, std::vector<double>& sink)
      : HeatParticipant(setup, substeps), sink_(sink) {}

  void accept() override {
    HeatParticipant::accept();
    sink_.push_back(solver().l2_error_squared(solver().time()));
  }

 private:
  std::vector<double>& sink_;
};

inline transport::ConfigDigest participant_digest(const ExperimentConfig& cfg, heat::Side side) {
  auto d = config_digest(cfg);
  d["role"] = role_name(side);
  return d;
}

inline void serve(transport::Session& s, const ExperimentConfig& cfg, heat::Side side, std::vector<double>* errors) {
  transport::handshake(s, transport::Role::Participant, participant_digest(cfg, side));
  std::vector<double> ignored;
  RecordingParticipant p(cfg.setup(side), cfg.substeps(side), errors ? *errors : ignored);
  transport::serve_participant(s, p, cfg.coupling);
}

inline SimulationResult orchestrate(transport::Session& d, transport::Session& n, const ExperimentConfig& cfg) {
  transport::RemoteParticipant dirichlet(d, cfg.coupling, cfg.coupling.n_D);
  transport::RemoteParticipant neumann(n, cfg.coupling, cfg.coupling.n_N);
  SimulationResult sim = run_simulation(dirichlet, neumann, cfg.coupling);
  dirichlet.terminate();
  neumann.terminate();
  return sim;
}

}  // namespace detail

/// Runs both participants on threads of this process, talking through
/// in-memory channels with the same framing as the TCP transport.
inline RunOutcome run_inprocess(const ExperimentConfig& cfg) {
  cfg.validate();
  auto [d_orch, d_part] = transport::memory_pipe();
  auto [n_orch, n_part] = transport::memory_pipe();
  std::vector<double> err_d, err_n;
  std::exception_ptr ex_d, ex_n;

  auto serve = [&cfg](heat::Side side, std::unique_ptr<transport::Channel> ch, std::vector<double>* errors,
                      std::exception_ptr* ex) {
    transport::Session s(std::move(ch));
    try {
      detail::serve(s, cfg, side, errors);
    } catch (...) {
      *ex = std::current_exception();
      s.close();
    }
  };
  std::thread td(serve, heat::Side::Dirichlet, std::move(d_part), &err_d, &ex_d);
  std::thread tn(serve, heat::Side::Neumann, std::move(n_part), &err_n, &ex_n);

  transport::Session ds(std::move(d_orch));
  transport::Session ns(std::move(n_orch));
  RunOutcome out;
  std::exception_ptr ex;
  try {
    const auto digest = config_digest(cfg);
    transport::handshake(ds, transport::Role::Orchestrator, digest);
    transport::handshake(ns, transport::Role::Orchestrator, digest);
    out.sim = detail::orchestrate(ds, ns, cfg);
  } catch (const Error& e) {
    ex = std::current_exception();
    ds.close();
    ns.close();
    td.join();
    tn.join();
    // A closed channel usually means a participant failed; report that.
    if (e.code() == ErrorCode::ChannelClosed) {
      if (ex_d) std::rethrow_exception(ex_d);
      if (ex_n) std::rethrow_exception(ex_n);
    }
    std::rethrow_exception(ex);
  } catch (...) {
    ds.close();
    ns.close();
    td.join();
    tn.join();
    throw;
  }
  td.join();
  tn.join();
  if (ex_d) std::rethrow_exception(ex_d);
  if (ex_n) std::rethrow_exception(ex_n);

  const std::size_t windows = std::min(err_d.size(), err_n.size());
  out.l2_errors.resize(windows);
  for (std::size_t i = 0; i < windows; ++i) out.l2_errors[i] = std::sqrt(err_d[i] + err_n[i]);
  return out;
}

/// Starts a participant that will connect to the given endpoint.
using Launcher = std::function<void(heat::Side, const transport::Endpoint&)>;

/// Orchestrator side of a TCP run. Participants are started by `launch`
/// and identify their role during the handshake.
inline RunOutcome run_tcp(const ExperimentConfig& cfg, const Launcher& launch,
                          std::chrono::milliseconds timeout = transport::kDefaultTimeout) {
  cfg.validate();
  transport::TcpListener listener({cfg.address, cfg.port});
  const transport::Endpoint ep{cfg.address, listener.port()};
  launch(heat::Side::Dirichlet, ep);
  launch(heat::Side::Neumann, ep);

  std::array<std::optional<transport::Session>, 2> sessions;
  const auto digest = config_digest(cfg);
  for (int k = 0; k < 2; ++k) {
    transport::Session s(listener.accept(timeout));
    const auto peer = transport::handshake(s, transport::Role::Orchestrator, digest);
    const auto role = peer.find("role");
    if (role == peer.end()) throw Error(ErrorCode::ConfigMismatch, "participant did not announce a role");
    const std::size_t slot = parse_role(role->second) == heat::Side::Dirichlet ? 0 : 1;
    if (sessions[slot]) throw Error(ErrorCode::ConfigMismatch, "two participants claim role " + role->second);
    sessions[slot].emplace(std::move(s));
  }
  RunOutcome out;
  out.sim = detail::orchestrate(*sessions[0], *sessions[1], cfg);
  out.l2_errors.assign(out.sim.reports.size(), std::numeric_limits<double>::quiet_NaN());
  return out;
}

/// Participant side of a TCP run.
inline void serve_tcp(const ExperimentConfig& cfg, heat::Side side, const transport::Endpoint& ep,
                      std::chrono::milliseconds timeout = transport::kDefaultTimeout) {
  cfg.validate();
  transport::Session s(transport::tcp_connect(ep, timeout));
  detail::serve(s, cfg, side, nullptr);
}

// ---- CSV ----------------------------------------------------------------------

/// window,t_end,iterations,converged,final_residual,l2_error,residual_norms
/// (residual_norms is ';'-separated, one per iteration).
inline void write_run_csv(std::ostream& os, const ExperimentConfig& cfg, const RunOutcome& run) {
  os << "window,t_end,iterations,converged,final_residual,l2_error,residual_norms\n";
  for (std::size_t i = 0; i < run.sim.reports.size(); ++i) {
    const WindowReport& r = run.sim.reports[i];
    os << r.window << ',' << format_double(window_at(cfg.coupling, r.window).end()) << ',' << r.iterations << ','
       << (r.converged ? 1 : 0) << ',' << format_double(r.residual_norms.empty() ? 0.0 : r.residual_norms.back()) << ','
       << (i < run.l2_errors.size() ? format_double(run.l2_errors[i]) : "") << ',';
    for (std::size_t k = 0; k < r.residual_norms.size(); ++k) {
      os << (k ? ";" : "") << format_double(r.residual_norms[k]);
    }
    os << '\n';
  }
}

// ---- iteration tables ---------------------------------------------------------

enum class Variant { QN_WI, rQN_WI, QN_SC, Rel_WI, Full_WI };

inline constexpr std::array<std::pair<std::string_view, Variant>, 5> kVariants{{{"QN-WI", Variant::QN_WI},
                                                                               {"rQN-WI", Variant::rQN_WI},
                                                                               {"QN-SC", Variant::QN_SC},
                                                                               {"rel-WI", Variant::Rel_WI},
                                                                               {"full-WI", Variant::Full_WI}}};

inline std::string to_string(Variant v) { return detail::name_of(kVariants, v); }
inline Variant parse_variant(std::string_view name) { return detail::value_of(kVariants, name, "variant"); }

/// Coupling scheme, acceleration and residual view of a named variant.
inline ExperimentConfig with_variant(ExperimentConfig cfg, Variant v) {
  auto& a = cfg.coupling.accel;
  cfg.coupling.scheme = v == Variant::QN_SC ? CouplingScheme::SC : CouplingScheme::WI;
  switch (v) {
    case Variant::QN_WI:
      a.scheme = AccelScheme::QN;
      a.residual_view = ResidualView::AllSubsteps;
      break;
    case Variant::rQN_WI:
      a.scheme = AccelScheme::QN;
      a.residual_view = ResidualView::LastSubstep;
      break;
    case Variant::QN_SC:
      a.scheme = AccelScheme::QN;
      a.residual_view = ResidualView::EndValue;
      break;
    case Variant::Rel_WI: a.scheme = AccelScheme::Relaxation; break;
    case Variant::Full_WI: a.scheme = AccelScheme::FullFP; break;
  }
  return cfg;
}

struct Setup {
  std::size_t n_D = 1;
  std::size_t n_N = 1;
};

struct TableCell {
  Variant variant{};
  CouplingScheme scheme{};
  ResidualView view{};
  AccelScheme accel{};
  std::size_t n_D = 0;
  std::size_t n_N = 0;
  std::size_t p = 0;
  double dt_window = 0.0;
  double average_iterations = 0.0;
  bool all_converged = false;
};

inline TableCell run_table_cell(const ExperimentConfig& base, Variant v, Setup s, double dt) {
  ExperimentConfig cfg = with_variant(base, v);
  cfg.coupling.n_D = s.n_D;
  cfg.coupling.n_N = s.n_N;
  cfg.coupling.dt_window = dt;
  const RunOutcome run = run_inprocess(cfg);
  bool converged = !run.sim.aborted;
  for (const auto& r : run.sim.reports) converged = converged && r.converged;
  return {v,   cfg.coupling.scheme, cfg.coupling.accel.residual_view, cfg.coupling.accel.scheme, s.n_D, s.n_N,
          cfg.coupling.p, dt, average_iterations(run.sim.reports), converged};
}

/// Average iterations per window for every (variant, setup, dt).
inline std::vector<TableCell> run_iteration_table(const ExperimentConfig& base, std::span<const Variant> variants,
                                                  std::span<const double> dts, std::span<const Setup> setups) {
  std::vector<TableCell> cells;
  for (Variant v : variants) {
    for (const Setup& s : setups) {
      for (double dt : dts) cells.push_back(run_table_cell(base, v, s, dt));
    }
  }
  return cells;
}

inline void write_table_csv(std::ostream& os, std::span<const TableCell> cells) {
  os << "variant,scheme,residual_view,accel,n_D,n_N,p,dt_window,avg_iterations,all_converged\n";
  for (const auto& c : cells) {
    os << to_string(c.variant) << ',' << to_string(c.scheme) << ',' << to_string(c.view) << ',' << to_string(c.accel)
       << ',' << c.n_D << ',' << c.n_N << ',' << c.p << ',' << format_double(c.dt_window) << ','
       << format_double(c.average_iterations) << ',' << (c.all_converged ? 1 : 0) << '\n';
  }
}

// ---- exact recovery -----------------------------------------------------------

/// L2 error below which a run counts as reproducing the exact solution.
inline constexpr double kExactThreshold = 1e-12;

struct RecoveryCase {
  int alpha = 1;
  heat::Integrator integrator = heat::Integrator::IE;
  std::size_t p = 1;
  CouplingScheme scheme = CouplingScheme::WI;
  std::size_t n_D = 1;
  std::size_t n_N = 1;
  double dt_window = 1.0;
};

struct RecoveryResult {
  RecoveryCase c;
  double max_error = 0.0;
  bool converged = false;
  bool passed = false;
};

inline ExperimentConfig recovery_config(ExperimentConfig base, const RecoveryCase& rc) {
  base.problem = {heat::ManufacturedSolution::Kind::Pol, rc.alpha};
  base.dirichlet = base.neumann = rc.integrator;
  base.coupling.scheme = rc.scheme;
  base.coupling.p = rc.p;
  base.coupling.n_D = rc.n_D;
  base.coupling.n_N = rc.n_N;
  base.coupling.dt_window = rc.dt_window;
  if (rc.scheme == CouplingScheme::SC) base.coupling.accel.residual_view = ResidualView::EndValue;
  return base;
}

/// Passes iff every window converged and every window-end error is below
/// kExactThreshold.
inline RecoveryResult run_recovery_case(const ExperimentConfig& base, const RecoveryCase& rc) {
  const RunOutcome run = run_inprocess(recovery_config(base, rc));
  RecoveryResult r{rc, 0.0, !run.sim.aborted, false};
  for (const auto& w : run.sim.reports) r.converged = r.converged && w.converged;
  for (double e : run.l2_errors) r.max_error = std::max(r.max_error, e);
  r.passed = r.converged && r.max_error < kExactThreshold;
  return r;
}

inline std::vector<RecoveryResult> run_recovery_matrix(const ExperimentConfig& base,
                                                       std::span<const RecoveryCase> cases) {
  std::vector<RecoveryResult> out;
  out.reserve(cases.size());
  for (const auto& c : cases) out.push_back(run_recovery_case(base, c));
  return out;
}

/// All (setup, dt) combinations of one (alpha, integrator, p) case. WI
/// setups with fewer substeps than p are skipped.
inline std::vector<RecoveryCase> recovery_grid(int alpha, heat::Integrator integ, std::size_t p, CouplingScheme scheme,
                                               std::span<const Setup> setups, std::span<const double> dts) {
  std::vector<RecoveryCase> out;
  for (const Setup& s : setups) {
    if (scheme == CouplingScheme::WI && (p > s.n_D || p > s.n_N)) continue;
    for (double dt : dts) out.push_back({alpha, integ, p, scheme, s.n_D, s.n_N, dt});
  }
  return out;
}

inline void write_recovery_csv(std::ostream& os, std::span<const RecoveryResult> results) {
  os << "alpha,integrator,scheme,n_D,n_N,p,dt_window,max_l2_error,converged,pass\n";
  for (const auto& r : results) {
    os << r.c.alpha << ',' << to_string(r.c.integrator) << ',' << to_string(r.c.scheme) << ',' << r.c.n_D << ','
       << r.c.n_N << ',' << r.c.p << ',' << format_double(r.c.dt_window) << ',' << format_double(r.max_error) << ','
       << (r.converged ? 1 : 0) << ',' << (r.passed ? 1 : 0) << '\n';
  }
}

// ---- convergence order --------------------------------------------------------

/// Least-squares slope of log(error) over log(dt).
inline double compute_observed_order(std::span<const double> errors, std::span<const double> dts) {
  if (errors.size() != dts.size()) throw Error(ErrorCode::LengthMismatch, "errors and dts differ in length");
  if (errors.size() < 2) throw Error(ErrorCode::Empty, "need at least two levels");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!(errors[i] > 0.0) || !(dts[i] > 0.0)) throw Error(ErrorCode::NonPositive, "errors and dts must be positive");
    mx += std::log(dts[i]);
    my += std::log(errors[i]);
  }
  const double n = static_cast<double>(errors.size());
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const double dx = std::log(dts[i]) - mx;
    sxy += dx * (std::log(errors[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw Error(ErrorCode::NonPositive, "dts must not all be equal");
  return sxy / sxx;
}

/// Number of leading levels whose error keeps falling at least twofold per
/// halving of dt. Later levels sit on the coupling-tolerance floor.
inline std::size_t levels_before_floor(std::span<const double> errors) {
  if (errors.empty()) return 0;
  std::size_t k = 1;
  while (k < errors.size() && errors[k] * 2.0 <= errors[k - 1]) ++k;
  return k;
}

/// dt0, dt0/2, ... (`levels` entries).
inline std::vector<double> halving_levels(double dt0, std::size_t levels) {
  std::vector<double> dts(levels);
  for (std::size_t i = 0; i < levels; ++i) dts[i] = std::ldexp(dt0, -static_cast<int>(i));
  return dts;
}

struct OrderStudy {
  std::vector<double> dts;
  std::vector<double> errors;
  std::vector<double> average_iterations;
  double order = 0.0;
};

/// Error at t_end for each window size, and the fitted order over all levels.
inline OrderStudy run_order_study(const ExperimentConfig& base, std::span<const double> dts) {
  if (dts.size() < 3) throw Error(ErrorCode::InvalidConfig, "an order study needs at least 3 levels");
  for (std::size_t i = 1; i < dts.size(); ++i) {
    if (std::abs(dts[i] * 2.0 - dts[i - 1]) > 1e-12 * dts[i - 1]) {
      throw Error(ErrorCode::InvalidConfig, "order study levels must halve dt");
    }
  }
  OrderStudy s;
  s.dts.assign(dts.begin(), dts.end());
  for (double dt : dts) {
    ExperimentConfig cfg = base;
    cfg.coupling.dt_window = dt;
    const RunOutcome run = run_inprocess(cfg);
    if (run.sim.aborted) throw Error(ErrorCode::MaxIterationsExceeded, "coupling diverged at dt=" + format_double(dt));
    s.errors.push_back(run.l2_errors.back());
    s.average_iterations.push_back(average_iterations(run.sim.reports));
  }
  s.order = compute_observed_order(s.errors, s.dts);
  return s;
}

inline void write_order_csv(std::ostream& os, const OrderStudy& s) {
  os << "level,dt_window,l2_error,avg_iterations\n";
  for (std::size_t i = 0; i < s.dts.size(); ++i) {
    os << i << ',' << format_double(s.dts[i]) << ',' << format_double(s.errors[i]) << ','
       << format_double(s.average_iterations[i]) << '\n';
  }
}

}  // namespace wfcpl::experiment
