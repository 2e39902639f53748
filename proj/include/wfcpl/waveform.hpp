#pragma once

// Time-continuous interface data over one coupling window.
//
// A Waveform is a clamped B-spline of degree p fitted through the n+1
// samples c_0 .. c_n a participant produced at the window start and at the
// end of each of its n substeps. Each interface DoF gets its own scalar
// spline over a shared knot vector.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wfcpl/error.hpp"

namespace wfcpl {

using Vector = std::vector<double>;

class TimeWindow {
 public:
  TimeWindow(double t_ini, double dt_window) : t_ini_(t_ini), dt_(dt_window), end_(t_ini + dt_window) {
    if (!(dt_window > 0.0)) {
      throw Error(ErrorCode::InvalidConfig, "window length must be positive");
    }
  }

  double t_ini() const { return t_ini_; }
  double length() const { return dt_; }
  double end() const { return end_; }

  /// Time of substep boundary i out of n; i == n snaps to end().
  double substep_time(std::size_t i, std::size_t n) const {
    if (i == n) return end_;
    return t_ini_ + static_cast<double>(i) * (dt_ / static_cast<double>(n));
  }

  bool operator==(const TimeWindow&) const = default;

 private:
  double t_ini_;
  double dt_;
  double end_;
};

/// Samples c_0 .. c_n at times t_ini .. t_ini + dt.
struct SampleSet {
  TimeWindow window{0.0, 1.0};
  std::vector<double> times;
  std::vector<Vector> values;

  std::size_t substeps() const { return times.empty() ? 0 : times.size() - 1; }
  std::size_t dofs() const { return values.empty() ? 0 : values.front().size(); }

  bool operator==(const SampleSet&) const = default;
};

/// Builds a SampleSet on the equidistant substep grid of `window`.
inline SampleSet make_samples(const TimeWindow& window, std::vector<Vector> values) {
  if (values.size() < 2) {
    throw Error(ErrorCode::LayoutMismatch, "a sample set needs the window start and at least one substep");
  }
  const std::size_t n = values.size() - 1;
  const std::size_t m = values.front().size();
  if (m == 0) throw Error(ErrorCode::LayoutMismatch, "interface vectors must not be empty");
  SampleSet s{window, {}, std::move(values)};
  s.times.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    s.times[i] = window.substep_time(i, n);
    if (s.values[i].size() != m) throw Error(ErrorCode::LayoutMismatch, "sample vectors differ in length");
  }
  return s;
}

inline void validate(const SampleSet& s) {
  if (s.times.size() < 2 || s.times.size() != s.values.size()) {
    throw Error(ErrorCode::LayoutMismatch, "sample set needs n+1 >= 2 matching times and values");
  }
  for (std::size_t i = 1; i < s.times.size(); ++i) {
    if (!(s.times[i] > s.times[i - 1])) {
      throw Error(ErrorCode::NonMonotoneTimes, "sample times must be strictly increasing");
    }
  }
  if (s.times.front() != s.window.t_ini() || s.times.back() != s.window.end()) {
    throw Error(ErrorCode::LayoutMismatch, "sample times must start at t_ini and end at the window end");
  }
  const std::size_t m = s.values.front().size();
  if (m == 0) throw Error(ErrorCode::LayoutMismatch, "interface vectors must not be empty");
  for (const auto& v : s.values) {
    if (v.size() != m) throw Error(ErrorCode::LayoutMismatch, "sample vectors differ in length");
  }
}

namespace detail {

// Index of the knot span [knots[k], knots[k+1]) containing t, for a clamped
// knot vector with `count` basis functions.
inline std::size_t find_span(std::span<const double> knots, std::size_t degree, std::size_t count, double t) {
  if (t >= knots[count]) return count - 1;
  if (t <= knots[degree]) return degree;
  std::size_t lo = degree;
  std::size_t hi = count;
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    if (t < knots[mid]) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return lo;
}

// The degree+1 nonzero basis functions N_{span-degree} .. N_{span} at t.
inline void basis_functions(std::span<const double> knots, std::size_t degree, std::size_t span, double t,
                            std::span<double> out) {
  double left[4];
  double right[4];
  out[0] = 1.0;
  for (std::size_t j = 1; j <= degree; ++j) {
    left[j] = t - knots[span + 1 - j];
    right[j] = knots[span + j] - t;
    double saved = 0.0;
    for (std::size_t r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

// Dense LU with partial pivoting; overwrites `a` (row-major, size x size) and
// solves for `cols` right-hand sides stored row-major in `b`.
inline void lu_solve(std::vector<double>& a, std::size_t size, std::vector<double>& b, std::size_t cols) {
  for (std::size_t k = 0; k < size; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < size; ++i) {
      if (std::abs(a[i * size + k]) > std::abs(a[piv * size + k])) piv = i;
    }
    if (a[piv * size + k] == 0.0) {
      throw Error(ErrorCode::LinearSolveFailure, "singular spline collocation matrix");
    }
    if (piv != k) {
      for (std::size_t j = 0; j < size; ++j) std::swap(a[k * size + j], a[piv * size + j]);
      for (std::size_t j = 0; j < cols; ++j) std::swap(b[k * cols + j], b[piv * cols + j]);
    }
    for (std::size_t i = k + 1; i < size; ++i) {
      const double f = a[i * size + k] / a[k * size + k];
      if (f == 0.0) continue;
      for (std::size_t j = k; j < size; ++j) a[i * size + j] -= f * a[k * size + j];
      for (std::size_t j = 0; j < cols; ++j) b[i * cols + j] -= f * b[k * cols + j];
    }
  }
  for (std::size_t k = size; k-- > 0;) {
    for (std::size_t j = 0; j < cols; ++j) {
      double s = b[k * cols + j];
      for (std::size_t i = k + 1; i < size; ++i) s -= a[k * size + i] * b[i * cols + j];
      b[k * cols + j] = s / a[k * size + k];
    }
  }
}

}  // namespace detail

/// Clamped knot vector for interpolating n+1 samples at `times` with degree p.
///
/// Interior knots follow the FITPACK interpolation rule: sample times for odd
/// p (dropping (p-1)/2 at each end), midpoints of consecutive samples for
/// even p. Either choice satisfies the Schoenberg-Whitney condition.
inline std::vector<double> interpolation_knots(std::span<const double> times, std::size_t degree) {
  const std::size_t n = times.size() - 1;
  std::vector<double> knots;
  knots.reserve(n + degree + 2);
  knots.insert(knots.end(), degree + 1, times.front());
  const std::size_t interior = n - degree;
  const std::size_t first = degree / 2 + (degree % 2);
  for (std::size_t k = 0; k < interior; ++k) {
    const std::size_t j = first + k;
    if (degree % 2 == 1) {
      knots.push_back(times[j]);
    } else {
      knots.push_back(0.5 * (times[j] + times[j + 1]));
    }
  }
  knots.insert(knots.end(), degree + 1, times.back());
  return knots;
}

class Waveform {
 public:
  static constexpr double kWindowSlack = 1e-12;

  const TimeWindow& window() const { return window_; }
  std::size_t degree() const { return degree_; }
  std::size_t dofs() const { return coeffs_.empty() ? 0 : coeffs_.front().size(); }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<Vector>& coefficients() const { return coeffs_; }
  /// The samples the waveform was built from.
  const SampleSet& samples() const { return samples_; }

  Vector operator()(double t) const {
    Vector out(dofs(), 0.0);
    eval_into(t, out);
    return out;
  }

  /// Evaluates into a caller-provided buffer of length dofs().
  void eval_into(double t, std::span<double> out) const {
    const double slack = kWindowSlack * window_.length();
    if (!(t >= window_.t_ini() - slack && t <= window_.end() + slack)) {
      throw Error(ErrorCode::OutOfWindow, "t=" + std::to_string(t) + " outside [" +
                                              std::to_string(window_.t_ini()) + ", " +
                                              std::to_string(window_.end()) + "]");
    }
    t = std::clamp(t, window_.t_ini(), window_.end());
    if (degree_ == 0) {
      std::copy(coeffs_[0].begin(), coeffs_[0].end(), out.begin());
      return;
    }
    const std::size_t span = detail::find_span(knots_, degree_, coeffs_.size(), t);
    double basis[4];
    detail::basis_functions(knots_, degree_, span, t, std::span<double>(basis, degree_ + 1));
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t r = 0; r <= degree_; ++r) {
      const Vector& c = coeffs_[span - degree_ + r];
      for (std::size_t d = 0; d < out.size(); ++d) out[d] += basis[r] * c[d];
    }
  }

  friend Waveform build_waveform(const SampleSet& samples, std::size_t degree);
  friend Waveform constant_extrapolation(const Vector& c0, const TimeWindow& window);

 private:
  Waveform(SampleSet samples, std::size_t degree, std::vector<double> knots, std::vector<Vector> coeffs)
      : window_(samples.window),
        degree_(degree),
        knots_(std::move(knots)),
        coeffs_(std::move(coeffs)),
        samples_(std::move(samples)) {}

  TimeWindow window_;
  std::size_t degree_;
  std::vector<double> knots_;
  std::vector<Vector> coeffs_;
  SampleSet samples_;
};

/// Interpolating B-spline of degree p through every sample.
inline Waveform build_waveform(const SampleSet& samples, std::size_t degree) {
  validate(samples);
  const std::size_t n = samples.substeps();
  if (degree < 1 || degree > 3) {
    throw Error(ErrorCode::DegreeTooHigh, "interpolation degree must be 1, 2 or 3");
  }
  if (degree > n) {
    throw Error(ErrorCode::DegreeTooHigh,
                "degree " + std::to_string(degree) + " needs at least that many substeps, got " + std::to_string(n));
  }
  const std::size_t size = n + 1;
  const std::size_t m = samples.dofs();
  std::vector<double> knots = interpolation_knots(samples.times, degree);

  std::vector<double> colloc(size * size, 0.0);
  double basis[4];
  for (std::size_t k = 0; k < size; ++k) {
    const double t = samples.times[k];
    const std::size_t span = detail::find_span(knots, degree, size, t);
    detail::basis_functions(knots, degree, span, t, std::span<double>(basis, degree + 1));
    for (std::size_t r = 0; r <= degree; ++r) colloc[k * size + span - degree + r] = basis[r];
  }
  std::vector<double> rhs(size * m);
  for (std::size_t k = 0; k < size; ++k) {
    std::copy(samples.values[k].begin(), samples.values[k].end(), rhs.begin() + static_cast<std::ptrdiff_t>(k * m));
  }
  detail::lu_solve(colloc, size, rhs, m);

  std::vector<Vector> coeffs(size, Vector(m));
  for (std::size_t k = 0; k < size; ++k) {
    std::copy_n(rhs.begin() + static_cast<std::ptrdiff_t>(k * m), m, coeffs[k].begin());
  }
  return Waveform(samples, degree, std::move(knots), std::move(coeffs));
}

/// Degree-0 waveform equal to c0 over the whole window.
inline Waveform constant_extrapolation(const Vector& c0, const TimeWindow& window) {
  return Waveform(make_samples(window, {c0, c0}), 0, {window.t_ini(), window.end()}, {c0});
}

/// Concatenates c_1 .. c_n (c_0 is fixed data and excluded).
inline Vector flatten_samples(const SampleSet& samples) {
  Vector flat;
  flat.reserve(samples.substeps() * samples.dofs());
  for (std::size_t i = 1; i < samples.values.size(); ++i) {
    flat.insert(flat.end(), samples.values[i].begin(), samples.values[i].end());
  }
  return flat;
}

/// Inverse of flatten_samples given the fixed start value c0.
inline SampleSet unflatten_samples(std::span<const double> flat, const TimeWindow& window, const Vector& c0) {
  const std::size_t m = c0.size();
  if (m == 0 || flat.empty() || flat.size() % m != 0) {
    throw Error(ErrorCode::LayoutMismatch, "flat vector length is not a multiple of the interface size");
  }
  const std::size_t n = flat.size() / m;
  std::vector<Vector> values;
  values.reserve(n + 1);
  values.push_back(c0);
  for (std::size_t i = 0; i < n; ++i) {
    values.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(i * m),
                        flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * m));
  }
  return make_samples(window, std::move(values));
}

}  // namespace wfcpl
