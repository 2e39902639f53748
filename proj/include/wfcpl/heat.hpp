#pragma once

// Partitioned 2D heat equation du/dt = Lap(u) + f with manufactured solution
//   u(x, y, t) = 1 + g(t) x^2 + 3 y^2 + 1.2 t
// on [0,1]x[0,1] (Dirichlet participant) and [1,2]x[0,1] (Neumann
// participant), discretized with the 5-point stencil on a uniform grid.
// The stencil is exact for the manufactured family, so all error is
// temporal or stems from the coupling.

#include <Eigen/SparseCore>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wfcpl/error.hpp"
#include "wfcpl/participant.hpp"
#include "wfcpl/waveform.hpp"

namespace wfcpl::heat {

struct ManufacturedSolution {
  enum class Kind { Pol, Tri };
  Kind kind = Kind::Tri;
  int alpha = 1;

  double g(double t) const { return kind == Kind::Tri ? std::sin(t) : std::pow(1.0 + t, alpha); }
  double dg(double t) const {
    return kind == Kind::Tri ? std::cos(t) : alpha * std::pow(1.0 + t, alpha - 1);
  }

  bool operator==(const ManufacturedSolution&) const = default;
};

inline double u_exact(double x, double y, double t, const ManufacturedSolution& ms) {
  return 1.0 + ms.g(t) * x * x + 3.0 * y * y + 1.2 * t;
}

inline double source_f(double x, double /*y*/, double t, const ManufacturedSolution& ms) {
  return ms.dg(t) * x * x + 1.2 - 2.0 * ms.g(t) - 6.0;
}

enum class Side { Dirichlet, Neumann, Monolithic };
enum class Integrator { IE, TR, SDC };

struct HeatSetup {
  Side side = Side::Dirichlet;
  Integrator integrator = Integrator::IE;
  ManufacturedSolution msol{};
  /// Cells per unit length in x and y (h = 1 / cells).
  std::size_t cells = 20;
  std::size_t sdc_sweeps = 16;
};

/// Nodal temperatures and time of one subdomain.
struct HeatState {
  Vector u;
  double t = 0.0;

  bool operator==(const HeatState&) const = default;
};

class HeatSolver {
 public:
  using SpMat = Eigen::SparseMatrix<double>;
  using Dense = Eigen::VectorXd;

  explicit HeatSolver(HeatSetup setup)
      : setup_(setup),
        nx_(setup.side == Side::Monolithic ? 2 * setup.cells : setup.cells),
        ny_(setup.cells),
        h_(1.0 / static_cast<double>(setup.cells)),
        x0_(setup.side == Side::Neumann ? 1.0 : 0.0),
        i_first_(setup.side == Side::Neumann ? 0 : 1) {
    if (setup.cells < 2) throw Error(ErrorCode::InvalidConfig, "grid needs at least 2 cells per direction");
    nxu_ = nx_ - i_first_;
    assemble();
    set_exact(0.0);
  }

  const HeatSetup& setup() const { return setup_; }
  Side side() const { return setup_.side; }
  double h() const { return h_; }
  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  double x(std::size_t i) const { return x0_ + static_cast<double>(i) * h_; }
  double y(std::size_t j) const { return static_cast<double>(j) * h_; }
  std::size_t node(std::size_t i, std::size_t j) const { return j * (nx_ + 1) + i; }
  std::size_t unknowns() const { return nxu_ * (ny_ - 1); }
  /// Interface DoFs: one per grid row on x = 1.
  std::size_t interface_size() const { return ny_ + 1; }

  const HeatState& state() const { return state_; }
  void set_state(HeatState s) { state_ = std::move(s); }
  double time() const { return state_.t; }
  void set_time(double t) { state_.t = t; }

  /// Discrete operator on the unknowns (boundary values excluded).
  const SpMat& laplacian() const { return lap_; }

  void set_exact(double t) {
    state_.t = t;
    state_.u.assign((nx_ + 1) * (ny_ + 1), 0.0);
    for (std::size_t j = 0; j <= ny_; ++j) {
      for (std::size_t i = 0; i <= nx_; ++i) state_.u[node(i, j)] = u_exact(x(i), y(j), t, setup_.msol);
    }
  }

  /// Advances by dt to t_next with the configured integrator. `boundary`
  /// supplies the interface data (temperature or flux); unused for the
  /// monolithic domain.
  void advance(double dt, double t_next, const Waveform* boundary) {
    switch (setup_.integrator) {
      case Integrator::IE: step_ie(dt, t_next, boundary); break;
      case Integrator::TR: step_tr(dt, t_next, boundary); break;
      case Integrator::SDC: step_sdc(dt, t_next, setup_.sdc_sweeps, boundary); break;
    }
  }

  /// (I - dt L) u+ = u + dt b(t+dt).
  void step_ie(double dt, double t_next, const Waveform* boundary) {
    Dense rhs = unknown_values() + dt * forcing(t_next, boundary);
    finish_step(solve(dt, rhs), t_next, boundary);
  }

  /// (I - dt/2 L) u+ = u + dt/2 (L u + b(t)) + dt/2 b(t+dt).
  void step_tr(double dt, double t_next, const Waveform* boundary) {
    const Dense u = unknown_values();
    Dense rhs = u + 0.5 * dt * (lap_ * u + forcing(state_.t, boundary) + forcing(t_next, boundary));
    finish_step(solve(0.5 * dt, rhs), t_next, boundary);
  }

  /// Spectral deferred correction on Gauss-Lobatto nodes {t, t+dt/2, t+dt}:
  /// two implicit Euler substeps as predictor, then `sweeps` IE-preconditioned
  /// correction sweeps against the quadratic collocation quadrature.
  void step_sdc(double dt, double t_next, std::size_t sweeps, const Waveform* boundary) {
    const double half = 0.5 * dt;
    const double t0 = state_.t;
    const Dense b0 = forcing(t0, boundary);
    const Dense b1 = forcing(t0 + half, boundary);
    const Dense b2 = forcing(t_next, boundary);

    const Dense u0 = unknown_values();
    Dense u1 = solve(half, u0 + half * b1);
    Dense u2 = solve(half, u1 + half * b2);

    const Dense f0 = lap_ * u0 + b0;
    const double q = dt / 24.0;
    for (std::size_t k = 0; k < sweeps; ++k) {
      const Dense lu1 = lap_ * u1;
      const Dense lu2 = lap_ * u2;
      const Dense f1 = lu1 + b1;
      const Dense f2 = lu2 + b2;
      const Dense s01 = q * (5.0 * f0 + 8.0 * f1 - f2);
      const Dense s12 = q * (-f0 + 8.0 * f1 + 5.0 * f2);
      Dense n1 = solve(half, u0 - half * lu1 + s01);
      Dense n2 = solve(half, n1 - half * lu2 + s12);
      u1 = std::move(n1);
      u2 = std::move(n2);
    }
    finish_step(u2, t_next, boundary);
  }

  /// Temperature on x = 1, ordered by increasing y.
  Vector interface_temperature() const {
    if (setup_.side != Side::Neumann) {
      throw Error(ErrorCode::WrongSide, "interface temperature is provided by the Neumann participant");
    }
    Vector out(ny_ + 1);
    for (std::size_t j = 0; j <= ny_; ++j) out[j] = state_.u[node(0, j)];
    return out;
  }

  /// du/dx on x = 1 by the one-sided second-order stencil.
  Vector interface_flux() const {
    if (setup_.side != Side::Dirichlet) {
      throw Error(ErrorCode::WrongSide, "interface flux is provided by the Dirichlet participant");
    }
    Vector out(ny_ + 1);
    for (std::size_t j = 0; j <= ny_; ++j) {
      out[j] = (3.0 * state_.u[node(nx_, j)] - 4.0 * state_.u[node(nx_ - 1, j)] + state_.u[node(nx_ - 2, j)]) /
               (2.0 * h_);
    }
    return out;
  }

  /// Sum of trapezoidal-weighted squared nodal errors times h^2.
  double l2_error_squared(double t) const {
    double s = 0.0;
    for (std::size_t j = 0; j <= ny_; ++j) {
      const double wy = (j == 0 || j == ny_) ? 0.5 : 1.0;
      for (std::size_t i = 0; i <= nx_; ++i) {
        const double wx = (i == 0 || i == nx_) ? 0.5 : 1.0;
        const double e = state_.u[node(i, j)] - u_exact(x(i), y(j), t, setup_.msol);
        s += wx * wy * e * e;
      }
    }
    return s * h_ * h_;
  }

  double l2_error(double t) const { return std::sqrt(l2_error_squared(t)); }

 private:
  // D (I - c L) is symmetric positive definite once the ghost-closure rows
  // on the Neumann edge are halved (D = row_scale_).
  using Solver = Eigen::SimplicialLLT<SpMat>;

  struct Coupling {
    std::size_t row;
    std::size_t node;
    double weight;
  };

  bool is_unknown(std::size_t i, std::size_t j) const {
    return j >= 1 && j + 1 <= ny_ && i >= i_first_ && i + 1 <= nx_;
  }
  std::size_t unknown(std::size_t i, std::size_t j) const { return (j - 1) * nxu_ + (i - i_first_); }
  bool neumann_edge(std::size_t i) const { return setup_.side == Side::Neumann && i == 0; }

  void assemble() {
    const double s = 1.0 / (h_ * h_);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(5 * unknowns());
    auto link = [&](std::size_t row, std::size_t i, std::size_t j, double w) {
      if (is_unknown(i, j)) {
        trip.emplace_back(static_cast<int>(row), static_cast<int>(unknown(i, j)), w);
      } else {
        dirichlet_links_.push_back({row, node(i, j), w});
      }
    };
    for (std::size_t j = 1; j < ny_; ++j) {
      for (std::size_t i = i_first_; i < nx_; ++i) {
        const std::size_t row = unknown(i, j);
        trip.emplace_back(static_cast<int>(row), static_cast<int>(row), -4.0 * s);
        if (neumann_edge(i)) {
          // Ghost node u_{-1} = u_1 - 2 h q eliminated.
          link(row, i + 1, j, 2.0 * s);
        } else {
          link(row, i - 1, j, s);
          link(row, i + 1, j, s);
        }
        link(row, i, j - 1, s);
        link(row, i, j + 1, s);
      }
    }
    lap_.resize(static_cast<int>(unknowns()), static_cast<int>(unknowns()));
    lap_.setFromTriplets(trip.begin(), trip.end());
    lap_.makeCompressed();
    row_scale_ = Dense::Ones(static_cast<Eigen::Index>(unknowns()));
    if (setup_.side == Side::Neumann) {
      for (std::size_t j = 1; j < ny_; ++j) row_scale_[static_cast<Eigen::Index>(unknown(0, j))] = 0.5;
    }
  }

  const Solver& factor(double c) {
    auto it = factors_.find(c);
    if (it != factors_.end()) return *it->second;
    SpMat id(lap_.rows(), lap_.cols());
    id.setIdentity();
    SpMat m = row_scale_.asDiagonal() * (id - c * lap_);
    m.makeCompressed();
    auto lu = std::make_unique<Solver>();
    lu->compute(m);
    if (lu->info() != Eigen::Success) throw Error(ErrorCode::LinearSolveFailure, "factorization of I - c L failed");
    return *factors_.emplace(c, std::move(lu)).first->second;
  }

  Dense solve(double c, const Dense& rhs) {
    const Solver& lu = factor(c);
    Dense out = lu.solve(row_scale_.cwiseProduct(rhs));
    if (lu.info() != Eigen::Success) throw Error(ErrorCode::LinearSolveFailure, "sparse solve failed");
    return out;
  }

  Dense unknown_values() const {
    Dense u(static_cast<Eigen::Index>(unknowns()));
    for (std::size_t j = 1; j < ny_; ++j) {
      for (std::size_t i = i_first_; i < nx_; ++i) u[static_cast<Eigen::Index>(unknown(i, j))] = state_.u[node(i, j)];
    }
    return u;
  }

  Vector interface_at(double t, const Waveform* boundary) const {
    if (setup_.side == Side::Monolithic) return {};
    if (boundary == nullptr) throw Error(ErrorCode::InvalidConfig, "partitioned step needs boundary data");
    Vector v = (*boundary)(t);
    if (v.size() != interface_size()) throw Error(ErrorCode::LayoutMismatch, "boundary data has the wrong size");
    return v;
  }

  // Writes Dirichlet values at time t into `u`: the interface temperature on
  // x = 1 for the Dirichlet participant, the exact solution elsewhere.
  void fill_boundary(double t, const Vector& iface, Vector& u) const {
    for (std::size_t j = 0; j <= ny_; ++j) {
      for (std::size_t i = 0; i <= nx_; ++i) {
        if (is_unknown(i, j)) continue;
        if (setup_.side == Side::Dirichlet && i == nx_ && j > 0 && j < ny_) {
          u[node(i, j)] = iface[j];
        } else {
          u[node(i, j)] = u_exact(x(i), y(j), t, setup_.msol);
        }
      }
    }
  }

  // b(t): source plus boundary contributions, so that du/dt = L u + b(t).
  Dense forcing(double t, const Waveform* boundary) {
    const Vector iface = interface_at(t, boundary);
    scratch_.resize(state_.u.size());
    fill_boundary(t, iface, scratch_);
    const double g = setup_.msol.g(t);
    const double dg = setup_.msol.dg(t);
    Dense b(static_cast<Eigen::Index>(unknowns()));
    for (std::size_t j = 1; j < ny_; ++j) {
      for (std::size_t i = i_first_; i < nx_; ++i) {
        const double xi = x(i);
        b[static_cast<Eigen::Index>(unknown(i, j))] = dg * xi * xi + 1.2 - 2.0 * g - 6.0;
      }
    }
    for (const Coupling& c : dirichlet_links_) b[static_cast<Eigen::Index>(c.row)] += c.weight * scratch_[c.node];
    if (setup_.side == Side::Neumann) {
      for (std::size_t j = 1; j < ny_; ++j) b[static_cast<Eigen::Index>(unknown(0, j))] -= 2.0 * iface[j] / h_;
    }
    return b;
  }

  void finish_step(const Dense& u, double t_next, const Waveform* boundary) {
    for (std::size_t j = 1; j < ny_; ++j) {
      for (std::size_t i = i_first_; i < nx_; ++i) state_.u[node(i, j)] = u[static_cast<Eigen::Index>(unknown(i, j))];
    }
    fill_boundary(t_next, interface_at(t_next, boundary), state_.u);
    state_.t = t_next;
  }

  HeatSetup setup_;
  std::size_t nx_;
  std::size_t ny_;
  double h_;
  double x0_;
  std::size_t i_first_;
  std::size_t nxu_ = 0;
  SpMat lap_;
  Dense row_scale_;
  std::vector<Coupling> dirichlet_links_;
  std::map<double, std::unique_ptr<Solver>> factors_;
  HeatState state_;
  Vector scratch_;
};

/// Built-in coupled participant driving one HeatSolver subdomain.
class HeatParticipant : public Participant {
 public:
  HeatParticipant(HeatSetup setup, std::size_t substeps) : solver_(setup), substeps_(substeps) {
    if (setup.side == Side::Monolithic) throw Error(ErrorCode::WrongSide, "monolithic domain cannot be coupled");
    if (substeps_ < 1) throw Error(ErrorCode::InvalidConfig, "participant needs at least one substep");
    saved_ = solver_.state();
  }

  std::size_t interface_size() const override { return solver_.interface_size(); }
  std::size_t substeps() const override { return substeps_; }
  Vector initial_interface() override { return output(); }
  void checkpoint() override { saved_ = solver_.state(); }
  void restore() override { solver_.set_state(saved_); }

  SampleSet solve_window(const TimeWindow& window, const Waveform& boundary) override {
    if (boundary.dofs() != interface_size()) throw Error(ErrorCode::LayoutMismatch, "boundary waveform size mismatch");
    solver_.set_time(window.t_ini());
    std::vector<Vector> values;
    values.reserve(substeps_ + 1);
    values.push_back(output());
    const double dt = window.length() / static_cast<double>(substeps_);
    for (std::size_t i = 1; i <= substeps_; ++i) {
      solver_.advance(dt, window.substep_time(i, substeps_), &boundary);
      values.push_back(output());
    }
    return make_samples(window, std::move(values));
  }

  const HeatSolver& solver() const { return solver_; }
  HeatSolver& solver() { return solver_; }

 private:
  Vector output() const {
    return solver_.side() == Side::Dirichlet ? solver_.interface_flux() : solver_.interface_temperature();
  }

  HeatSolver solver_;
  std::size_t substeps_;
  HeatState saved_;
};

/// Error over both subdomains: sqrt(e_D^2 + e_N^2).
inline double l2_error(const HeatSolver& dirichlet, const HeatSolver& neumann, double t) {
  return std::sqrt(dirichlet.l2_error_squared(t) + neumann.l2_error_squared(t));
}

}  // namespace wfcpl::heat
