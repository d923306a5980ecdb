#pragma once

// Classical estimators: naive double integration and step-counting PDR.

#include <cstddef>
#include <span>
#include <vector>

#include "ronin/metrics.hpp"
#include "ronin/seqdata.hpp"

namespace ronin::baselines {

inline constexpr double kGravity = 9.80665;

// Rotates accel to the world frame, removes gravity and integrates twice
// with the trapezoid rule from rest at the origin.
metrics::Trajectory2D ndi(const seqdata::SensorSequence& seq, double gravity = kGravity);

struct PdrConfig {
  double step_length_m = 0.67;
  double band_low_hz = 0.8;
  double band_high_hz = 3.0;
  double peak_threshold_mps2 = 0.5;
  double min_step_interval_s = 0.3;
};

// Second-order Butterworth high-pass then low-pass, run forward and backward
// over an odd-reflection padded signal.
std::vector<double> bandpass_zero_phase(std::span<const double> signal, double rate_hz,
                                        double low_hz, double high_hz);

// Frame indices of detected steps on the band-passed |accel| - g.
std::vector<std::size_t> detect_steps(const seqdata::SensorSequence& seq,
                                      const PdrConfig& config = {}, double gravity = kGravity);

// One trajectory point per frame; each step advances a fixed stride along the
// device yaw at that frame.
metrics::Trajectory2D pdr(const seqdata::SensorSequence& seq, const PdrConfig& config = {},
                          double gravity = kGravity);

}  // namespace ronin::baselines
