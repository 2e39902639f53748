#pragma once

#include <cstddef>

#include "wfcpl/waveform.hpp"

namespace wfcpl {

/// SC exchanges end-of-window values only; WI exchanges interpolated waveforms.
enum class CouplingScheme { SC, WI };

/// Waveform a participant consumes, rebuilt identically on either side of a
/// transport: SC holds the last sample constant over the window; WI
/// interpolates with degree p, except that constant data (the first
/// iteration's extrapolation) stays a degree-0 waveform.
inline Waveform boundary_waveform(CouplingScheme scheme, std::size_t degree, const SampleSet& samples) {
  validate(samples);
  if (scheme == CouplingScheme::SC) return constant_extrapolation(samples.values.back(), samples.window);
  bool constant = true;
  for (const auto& v : samples.values) constant = constant && v == samples.values.front();
  if (constant) return constant_extrapolation(samples.values.front(), samples.window);
  return build_waveform(samples, degree);
}

/// A coupled black-box time stepper.
///
/// solve_window advances from the window start through the participant's n
/// substeps and returns its output interface data at t_ini and after every
/// substep (n+1 samples). restore() resets to the last checkpoint().
class Participant {
 public:
  virtual ~Participant() = default;

  virtual std::size_t interface_size() const = 0;
  virtual std::size_t substeps() const = 0;
  /// Output interface data of the initial state.
  virtual Vector initial_interface() = 0;
  virtual void checkpoint() = 0;
  virtual void restore() = 0;
  /// The current window converged; the state after the last solve is kept.
  virtual void accept() {}
  virtual SampleSet solve_window(const TimeWindow& window, const Waveform& boundary) = 0;
};

}  // namespace wfcpl
