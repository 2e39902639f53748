#pragma once

// Acceleration of the per-window interface fixed-point iteration x = H(x).
//
// Schemes: plain iteration, constant underrelaxation, and interface
// quasi-Newton (IQN-ILS / Anderson) with a choice of residual view:
//   AllSubsteps  - residual over every substep sample (QN-WI)
//   LastSubstep  - residual of the last substep only, update of all (rQN-WI)
//   EndValue     - single end-of-window state (QN-SC)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wfcpl/error.hpp"
#include "wfcpl/waveform.hpp"

namespace wfcpl {

enum class AccelScheme { FullFP, Relaxation, QN };
enum class Weighting { None, ResidualSum };
enum class ResidualView { AllSubsteps, LastSubstep, EndValue };

struct AccelConfig {
  AccelScheme scheme = AccelScheme::QN;
  double omega = 0.5;
  double qr2_epsilon = 1e-3;
  Weighting weighting = Weighting::ResidualSum;
  ResidualView residual_view = ResidualView::AllSubsteps;

  void validate() const {
    if (!(omega > 0.0 && omega <= 1.0)) throw Error(ErrorCode::InvalidConfig, "accel.omega must lie in (0, 1]");
    if (!(qr2_epsilon > 0.0)) throw Error(ErrorCode::InvalidConfig, "accel.qr2_epsilon must be positive");
  }

  bool operator==(const AccelConfig&) const = default;
};

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Residual full_new - full_old restricted to the requested view.
/// `block` is the interface size m; both vectors hold n blocks of m.
inline Vector view_residual(std::span<const double> full_new, std::span<const double> full_old, std::size_t block,
                            ResidualView view) {
  if (block == 0 || full_new.size() != full_old.size() || full_new.empty() || full_new.size() % block != 0) {
    throw Error(ErrorCode::LayoutMismatch, "residual vectors do not match the block layout");
  }
  std::size_t first = 0;
  if (view != ResidualView::AllSubsteps) first = full_new.size() - block;
  Vector out(full_new.size() - first);
  for (std::size_t i = first; i < full_new.size(); ++i) out[i - first] = full_new[i] - full_old[i];
  return out;
}

/// omega * h_x + (1 - omega) * x_old.
inline Vector relax(std::span<const double> x_old, std::span<const double> h_x, double omega) {
  if (x_old.size() != h_x.size()) throw Error(ErrorCode::LengthMismatch, "relax operands differ in length");
  if (!(omega > 0.0 && omega <= 1.0)) throw Error(ErrorCode::InvalidConfig, "omega must lie in (0, 1]");
  Vector out(x_old.size());
  if (omega == 1.0) {
    std::copy(h_x.begin(), h_x.end(), out.begin());
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = omega * h_x[i] + (1.0 - omega) * x_old[i];
  return out;
}

/// Difference columns V (residuals) and W (H outputs) of one window, oldest first.
struct SecantHistory {
  std::vector<Vector> V;
  std::vector<Vector> W;
  Vector prev_x_tilde;
  Vector prev_residual;
  /// Row counts of the residual sub-vectors that get individual weights.
  std::vector<std::size_t> block_layout;
  /// Per-block sums of residual norms over the iterations of this window.
  std::vector<double> residual_sums;

  std::size_t columns() const { return V.size(); }

  void clear() {
    V.clear();
    W.clear();
    prev_x_tilde.clear();
    prev_residual.clear();
    std::fill(residual_sums.begin(), residual_sums.end(), 0.0);
  }

  void remove_column(std::size_t idx) {
    V.erase(V.begin() + static_cast<std::ptrdiff_t>(idx));
    W.erase(W.begin() + static_cast<std::ptrdiff_t>(idx));
  }

  /// Adds ||R_b|| of every block of `residual` to the running sums.
  void accumulate_residual(std::span<const double> residual) {
    if (block_layout.empty()) block_layout = {residual.size()};
    if (residual_sums.size() != block_layout.size()) residual_sums.assign(block_layout.size(), 0.0);
    std::size_t offset = 0;
    for (std::size_t b = 0; b < block_layout.size(); ++b) {
      if (offset + block_layout[b] > residual.size()) {
        throw Error(ErrorCode::LayoutMismatch, "residual shorter than the weighting block layout");
      }
      residual_sums[b] += norm2(residual.subspan(offset, block_layout[b]));
      offset += block_layout[b];
    }
    if (offset != residual.size()) throw Error(ErrorCode::LayoutMismatch, "residual longer than the block layout");
  }
};

/// Stores (x_tilde, residual); from the second call on pushes difference columns.
inline void qn_append(SecantHistory& hist, std::span<const double> x_tilde, std::span<const double> residual) {
  if (!hist.prev_x_tilde.empty()) {
    if (hist.prev_x_tilde.size() != x_tilde.size() || hist.prev_residual.size() != residual.size()) {
      throw Error(ErrorCode::DimensionChange, "iterate dimensions changed within a window");
    }
    Vector dv(residual.size());
    Vector dw(x_tilde.size());
    for (std::size_t i = 0; i < dv.size(); ++i) dv[i] = residual[i] - hist.prev_residual[i];
    for (std::size_t i = 0; i < dw.size(); ++i) dw[i] = x_tilde[i] - hist.prev_x_tilde[i];
    hist.V.push_back(std::move(dv));
    hist.W.push_back(std::move(dw));
  }
  hist.prev_x_tilde.assign(x_tilde.begin(), x_tilde.end());
  hist.prev_residual.assign(residual.begin(), residual.end());
}

inline constexpr double kWeightFloor = 1e-14;

/// w_b = 1 / max(sum_b, floor).
inline Vector residual_sum_weights(std::span<const double> accumulated) {
  Vector w(accumulated.size());
  for (std::size_t b = 0; b < w.size(); ++b) w[b] = 1.0 / std::max(accumulated[b], kWeightFloor);
  return w;
}

/// Expands per-block weights to one scale factor per residual row.
inline Vector row_scaling(const SecantHistory& hist, std::span<const double> block_weights) {
  Vector rows;
  for (std::size_t b = 0; b < hist.block_layout.size(); ++b) {
    rows.insert(rows.end(), hist.block_layout[b], block_weights[b]);
  }
  return rows;
}

/// Economy QR of the surviving (scaled) V columns, newest column first.
struct QrFactors {
  /// History indices of the kept columns, in factorization order.
  std::vector<std::size_t> order;
  std::vector<Vector> q;
  /// r[j] holds column j of the upper-triangular factor (j+1 entries).
  std::vector<Vector> r;

  std::size_t rank() const { return q.size(); }
};

/// QR2 filter: modified Gram-Schmidt (with one reorthogonalization pass) over
/// the V columns from newest to oldest. A column whose orthogonal remainder is
/// below epsilon times its norm is deleted from both V and W.
/// `row_weights` scales V rows before factorization (empty = unscaled).
inline QrFactors qr2_filter(SecantHistory& hist, double epsilon, std::span<const double> row_weights = {}) {
  QrFactors f;
  std::vector<std::size_t> dropped;
  for (std::size_t c = hist.columns(); c-- > 0;) {
    Vector v = hist.V[c];
    if (!row_weights.empty()) {
      for (std::size_t i = 0; i < v.size(); ++i) v[i] *= row_weights[i];
    }
    const double norm0 = norm2(v);
    Vector rcol(f.q.size() + 1, 0.0);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < f.q.size(); ++j) {
        const double d = dot(f.q[j], v);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= d * f.q[j][i];
        rcol[j] += d;
      }
    }
    const double rem = norm2(v);
    if (!(norm0 > 0.0) || rem < epsilon * norm0) {
      dropped.push_back(c);
      continue;
    }
    for (double& x : v) x /= rem;
    rcol.back() = rem;
    f.q.push_back(std::move(v));
    f.r.push_back(std::move(rcol));
    f.order.push_back(c);
  }
  // `dropped` is descending, so erasing keeps the remaining indices valid.
  for (std::size_t c : dropped) hist.remove_column(c);
  for (std::size_t& idx : f.order) {
    idx -= static_cast<std::size_t>(std::count_if(dropped.begin(), dropped.end(), [&](std::size_t d) { return d < idx; }));
  }
  return f;
}

/// alpha = argmin ||V alpha + R||_2 (weighted, filtered); returns W alpha.
inline Vector qn_solve(SecantHistory& hist, std::span<const double> residual, const AccelConfig& cfg) {
  if (hist.columns() == 0) throw Error(ErrorCode::EmptyHistory, "no secant columns available");
  if (residual.size() != hist.V.front().size()) {
    throw Error(ErrorCode::DimensionChange, "residual length differs from the secant columns");
  }
  Vector rows;
  if (cfg.weighting == Weighting::ResidualSum && !hist.residual_sums.empty()) {
    rows = row_scaling(hist, residual_sum_weights(hist.residual_sums));
  }
  const QrFactors f = qr2_filter(hist, cfg.qr2_epsilon, rows);
  const std::size_t k = f.rank();
  if (k == 0) throw Error(ErrorCode::RankDeficient, "QR2 filter removed every secant column");

  Vector rhs(residual.begin(), residual.end());
  if (!rows.empty()) {
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] *= rows[i];
  }
  // Solve Rhat alpha = -Q^T rhs by back substitution.
  Vector alpha(k);
  for (std::size_t j = 0; j < k; ++j) alpha[j] = -dot(f.q[j], rhs);
  for (std::size_t j = k; j-- > 0;) {
    alpha[j] /= f.r[j][j];
    for (std::size_t i = 0; i < j; ++i) alpha[i] -= f.r[j][i] * alpha[j];
  }
  Vector dx(hist.W.front().size(), 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const Vector& w = hist.W[f.order[j]];
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += alpha[j] * w[i];
  }
  return dx;
}

/// Stateful acceleration operator for one coupled run; reset() at every window.
class Accelerator {
 public:
  /// `block` is the interface size m, `blocks` the number of samples n in x.
  Accelerator(AccelConfig cfg, std::size_t block, std::size_t blocks) : cfg_(cfg), block_(block), blocks_(blocks) {
    cfg_.validate();
    if (block_ == 0 || blocks_ == 0) throw Error(ErrorCode::LayoutMismatch, "empty acceleration layout");
    if (cfg_.residual_view == ResidualView::AllSubsteps) {
      hist_.block_layout.assign(blocks_, block_);
    } else {
      hist_.block_layout = {block_};
    }
    hist_.residual_sums.assign(hist_.block_layout.size(), 0.0);
  }

  void reset() { hist_.clear(); }

  const AccelConfig& config() const { return cfg_; }
  const SecantHistory& history() const { return hist_; }

  /// Next iterate from the current input x and its image x_tilde = H(x).
  Vector next(std::span<const double> x, std::span<const double> x_tilde) {
    if (x.size() != block_ * blocks_ || x_tilde.size() != x.size()) {
      throw Error(ErrorCode::LayoutMismatch, "iterate does not match the acceleration layout");
    }
    switch (cfg_.scheme) {
      case AccelScheme::FullFP:
        return Vector(x_tilde.begin(), x_tilde.end());
      case AccelScheme::Relaxation:
        return relax(x, x_tilde, cfg_.omega);
      case AccelScheme::QN:
        break;
    }
    const Vector residual = view_residual(x_tilde, x, block_, cfg_.residual_view);
    if (cfg_.weighting == Weighting::ResidualSum) hist_.accumulate_residual(residual);
    qn_append(hist_, x_tilde, residual);
    if (hist_.columns() == 0) return relax(x, x_tilde, cfg_.omega);
    Vector dx;
    try {
      dx = qn_solve(hist_, residual, cfg_);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::RankDeficient) throw;
      return relax(x, x_tilde, cfg_.omega);
    }
    Vector out(x_tilde.begin(), x_tilde.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += dx[i];
    return out;
  }

 private:
  AccelConfig cfg_;
  std::size_t block_;
  std::size_t blocks_;
  SecantHistory hist_;
};

}  // namespace wfcpl
