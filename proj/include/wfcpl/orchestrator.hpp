#pragma once

// Serial (Gauss-Seidel) Dirichlet-Neumann coupling over time windows.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wfcpl/accel.hpp"
#include "wfcpl/error.hpp"
#include "wfcpl/participant.hpp"
#include "wfcpl/waveform.hpp"

namespace wfcpl {

struct CouplingConfig {
  CouplingScheme scheme = CouplingScheme::WI;
  std::size_t n_D = 1;
  std::size_t n_N = 1;
  std::size_t p = 1;
  double dt_window = 1.0;
  double t_end = 1.0;
  double tol_rel = 1e-5;
  std::size_t max_iterations = 100;
  /// Stop the run at the first window that hits max_iterations.
  bool abort_on_divergence = true;
  AccelConfig accel{};

  std::size_t window_count() const { return static_cast<std::size_t>(std::llround(t_end / dt_window)); }

  void validate() const {
    if (n_D < 1 || n_N < 1) throw Error(ErrorCode::InvalidConfig, "coupling.n_D and coupling.n_N must be >= 1");
    if (!(dt_window > 0.0)) throw Error(ErrorCode::InvalidConfig, "coupling.dt_window must be positive");
    if (!(t_end > 0.0)) throw Error(ErrorCode::InvalidConfig, "coupling.t_end must be positive");
    if (!(tol_rel > 0.0)) throw Error(ErrorCode::InvalidConfig, "coupling.tol_rel must be positive");
    if (max_iterations < 1) throw Error(ErrorCode::InvalidConfig, "coupling.max_iterations must be >= 1");
    const double windows = t_end / dt_window;
    if (std::llround(windows) < 1 || std::abs(windows - std::round(windows)) > 1e-12 * windows) {
      throw Error(ErrorCode::InvalidConfig, "coupling.t_end must be an integer multiple of coupling.dt_window");
    }
    if (scheme == CouplingScheme::WI) {
      if (p < 1 || p > 3) throw Error(ErrorCode::InvalidConfig, "coupling.p must be 1, 2 or 3");
      if (p > n_D || p > n_N) {
        throw Error(ErrorCode::InvalidConfig, "coupling.p=" + std::to_string(p) + " exceeds the substep count of a participant");
      }
    }
    accel.validate();
  }

  bool operator==(const CouplingConfig&) const = default;
};

/// Window w of a run; every process derives window times the same way.
inline TimeWindow window_at(const CouplingConfig& cfg, std::size_t w) {
  return TimeWindow(static_cast<double>(w) * cfg.dt_window, cfg.dt_window);
}

struct WindowReport {
  std::size_t window = 0;
  std::size_t iterations = 0;
  /// ||H(x^k) - x^k||_2 of every iteration.
  std::vector<double> residual_norms;
  bool converged = false;
  SampleSet c_D;
  SampleSet c_N;

  bool operator==(const WindowReport&) const = default;
};

struct ConvergenceCheck {
  bool converged = false;
  double residual_norm = 0.0;
};

/// converged iff ||new - old|| <= tol_rel * ||new||.
inline ConvergenceCheck convergence_measure(std::span<const double> new_flat, std::span<const double> old_flat,
                                            double tol_rel) {
  if (new_flat.size() != old_flat.size()) throw Error(ErrorCode::LayoutMismatch, "convergence vectors differ in length");
  double diff = 0.0;
  for (std::size_t i = 0; i < new_flat.size(); ++i) {
    const double d = new_flat[i] - old_flat[i];
    diff += d * d;
  }
  diff = std::sqrt(diff);
  return {diff <= tol_rel * norm2(new_flat), diff};
}

inline ConvergenceCheck convergence_measure(const SampleSet& new_samples, std::span<const double> old_flat,
                                            double tol_rel) {
  return convergence_measure(flatten_samples(new_samples), old_flat, tol_rel);
}

namespace detail {

// The fixed-point variable: all of c_D's substeps for WI, its end value for SC.
inline Vector fixed_point_variable(CouplingScheme scheme, const SampleSet& c_D) {
  if (scheme == CouplingScheme::SC) return c_D.values.back();
  return flatten_samples(c_D);
}

inline SampleSet fixed_point_samples(CouplingScheme scheme, std::span<const double> x, const TimeWindow& window,
                                     const Vector& c0) {
  if (scheme == CouplingScheme::SC) return make_samples(window, {c0, Vector(x.begin(), x.end())});
  return unflatten_samples(x, window, c0);
}

}  // namespace detail

/// Accelerator layout matching `cfg` for an interface of m DoFs.
inline Accelerator make_accelerator(const CouplingConfig& cfg, std::size_t m) {
  return Accelerator(cfg.accel, m, cfg.scheme == CouplingScheme::SC ? 1 : cfg.n_N);
}

/// Implicit coupling loop of one window. Both participants must be
/// checkpointed at the window start; on return they hold the accepted state.
inline WindowReport run_window(Participant& dirichlet, Participant& neumann, const CouplingConfig& cfg,
                               std::size_t window_index, const Waveform& c_D_init, Accelerator& accel) {
  const TimeWindow window = c_D_init.window();
  const Vector c0 = c_D_init(window.t_ini());
  accel.reset();

  WindowReport report;
  report.window = window_index;

  Waveform c_D = c_D_init;
  Vector x;
  if (cfg.scheme == CouplingScheme::SC) {
    x = c0;
  } else {
    x.reserve(c0.size() * cfg.n_N);
    for (std::size_t i = 1; i <= cfg.n_N; ++i) {
      const Vector v = c_D_init(window.substep_time(i, cfg.n_N));
      x.insert(x.end(), v.begin(), v.end());
    }
  }

  for (std::size_t k = 0; k < cfg.max_iterations; ++k) {
    SampleSet c_N_samples = dirichlet.solve_window(window, c_D);
    const Waveform c_N = boundary_waveform(cfg.scheme, cfg.p, c_N_samples);
    SampleSet c_D_samples = neumann.solve_window(window, c_N);
    const Vector x_tilde = detail::fixed_point_variable(cfg.scheme, c_D_samples);

    const ConvergenceCheck check = convergence_measure(x_tilde, x, cfg.tol_rel);
    report.residual_norms.push_back(check.residual_norm);
    report.iterations = k + 1;
    report.c_D = std::move(c_D_samples);
    report.c_N = std::move(c_N_samples);
    if (check.converged) {
      report.converged = true;
      break;
    }
    if (k + 1 == cfg.max_iterations) break;

    x = accel.next(x, x_tilde);
    c_D = boundary_waveform(cfg.scheme, cfg.p, detail::fixed_point_samples(cfg.scheme, x, window, c0));
    dirichlet.restore();
    neumann.restore();
  }
  dirichlet.accept();
  neumann.accept();
  return report;
}

struct SimulationResult {
  std::vector<WindowReport> reports;
  /// True when the run stopped early on a non-converged window.
  bool aborted = false;
};

using WindowObserver = std::function<void(const WindowReport&)>;

/// Runs every window of [0, t_end] in order.
inline SimulationResult run_simulation(Participant& dirichlet, Participant& neumann, const CouplingConfig& cfg,
                                       const WindowObserver& observer = {}) {
  cfg.validate();
  const std::size_t windows = cfg.window_count();
  Vector c_D_end = neumann.initial_interface();
  Accelerator accel = make_accelerator(cfg, c_D_end.size());

  SimulationResult result;
  for (std::size_t w = 0; w < windows; ++w) {
    const TimeWindow window = window_at(cfg, w);
    dirichlet.checkpoint();
    neumann.checkpoint();
    WindowReport report;
    try {
      report = run_window(dirichlet, neumann, cfg, w, constant_extrapolation(c_D_end, window), accel);
    } catch (const Error& e) {
      throw Error(e.code(), "window " + std::to_string(w) + ": " + e.detail());
    }
    c_D_end = report.c_D.values.back();
    const bool failed = !report.converged;
    if (observer) observer(report);
    result.reports.push_back(std::move(report));
    if (failed && cfg.abort_on_divergence) {
      result.aborted = true;
      break;
    }
  }
  return result;
}

inline double average_iterations(std::span<const WindowReport> reports) {
  if (reports.empty()) throw Error(ErrorCode::Empty, "no window reports");
  double sum = 0.0;
  for (const auto& r : reports) sum += static_cast<double>(r.iterations);
  return sum / static_cast<double>(reports.size());
}

}  // namespace wfcpl
