#include "ronin/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ronin/error.hpp"

namespace ronin::baselines {

using geom::Vec2;
using geom::Vec3;

namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;  // normalized by a0

  std::vector<double> run(std::span<const double> x) const {
    std::vector<double> y(x.size());
    double x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = b0 * x[i] + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = x[i];
      y2 = y1;
      y1 = v;
      y[i] = v;
    }
    return y;
  }
};

Biquad butterworth(double cutoff_hz, double rate_hz, bool highpass) {
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / rate_hz;
  const double c = std::cos(w0);
  const double alpha = std::sin(w0) / std::numbers::sqrt2;  // Q = 1/sqrt(2)
  const double a0 = 1.0 + alpha;
  Biquad f{};
  if (highpass) {
    f.b0 = (1.0 + c) / 2.0 / a0;
    f.b1 = -(1.0 + c) / a0;
  } else {
    f.b0 = (1.0 - c) / 2.0 / a0;
    f.b1 = (1.0 - c) / a0;
  }
  f.b2 = f.b0;
  f.a1 = -2.0 * c / a0;
  f.a2 = (1.0 - alpha) / a0;
  return f;
}

}  // namespace

metrics::Trajectory2D ndi(const seqdata::SensorSequence& seq, double gravity) {
  seqdata::validate(seq);
  const std::size_t n = seq.size();
  std::vector<Vec3> acc(n);
  for (std::size_t i = 0; i < n; ++i) {
    acc[i] = geom::quat_rotate(seq.q_device[i], seq.accel[i]) - Vec3{0.0, 0.0, gravity};
  }
  metrics::Trajectory2D out;
  out.t = seq.t;
  out.p.resize(n);
  Vec3 v;
  Vec3 p;
  out.p[0] = p.xy();
  for (std::size_t i = 1; i < n; ++i) {
    const double dt = seq.t[i] - seq.t[i - 1];
    const Vec3 v_next = v + (acc[i - 1] + acc[i]) * (0.5 * dt);
    p += (v + v_next) * (0.5 * dt);
    v = v_next;
    out.p[i] = p.xy();
  }
  return out;
}

std::vector<double> bandpass_zero_phase(std::span<const double> signal, double rate_hz,
                                        double low_hz, double high_hz) {
  if (!(low_hz > 0.0 && high_hz > low_hz && high_hz < rate_hz / 2.0)) {
    throw Error(ErrorKind::InvalidArgument, "band edges must satisfy 0 < low < high < rate/2");
  }
  const std::size_t n = signal.size();
  if (n < 2) return std::vector<double>(signal.begin(), signal.end());

  const auto pad = std::min<std::size_t>(n - 1, static_cast<std::size_t>(3.0 * rate_hz / low_hz));
  std::vector<double> x;
  x.reserve(n + 2 * pad);
  for (std::size_t k = pad; k >= 1; --k) x.push_back(2.0 * signal[0] - signal[k]);
  x.insert(x.end(), signal.begin(), signal.end());
  for (std::size_t k = 1; k <= pad; ++k) x.push_back(2.0 * signal[n - 1] - signal[n - 1 - k]);

  const Biquad hp = butterworth(low_hz, rate_hz, true);
  const Biquad lp = butterworth(high_hz, rate_hz, false);
  auto pass = [&](std::vector<double> v) { return lp.run(hp.run(v)); };

  std::vector<double> y = pass(std::move(x));
  std::reverse(y.begin(), y.end());
  y = pass(std::move(y));
  std::reverse(y.begin(), y.end());
  return {y.begin() + static_cast<std::ptrdiff_t>(pad),
          y.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<std::size_t> detect_steps(const seqdata::SensorSequence& seq, const PdrConfig& config,
                                      double gravity) {
  seqdata::validate(seq);
  const std::size_t n = seq.size();
  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = seq.accel[i].norm() - gravity;
  const double rate = static_cast<double>(n - 1) / seq.duration();
  const auto f = bandpass_zero_phase(mag, rate, config.band_low_hz, config.band_high_hz);

  std::vector<std::size_t> steps;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(f[i] > config.peak_threshold_mps2 && f[i] > f[i - 1] && f[i] >= f[i + 1])) continue;
    if (!steps.empty() && seq.t[i] - seq.t[steps.back()] < config.min_step_interval_s) {
      if (f[i] > f[steps.back()]) steps.back() = i;
      continue;
    }
    steps.push_back(i);
  }
  return steps;
}

metrics::Trajectory2D pdr(const seqdata::SensorSequence& seq, const PdrConfig& config,
                          double gravity) {
  const auto steps = detect_steps(seq, config, gravity);
  metrics::Trajectory2D out;
  out.t = seq.t;
  out.p.resize(seq.size());
  Vec2 pos;
  double yaw = 0.0;
  std::size_t next = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (next < steps.size() && steps[next] == i) {
      try {
        yaw = geom::yaw_of(seq.q_device[i]).radians();
      } catch (const Error&) {
        // Keep the last valid yaw through degenerate poses.
      }
      pos += Vec2{std::cos(yaw), std::sin(yaw)} * config.step_length_m;
      ++next;
    }
    out.p[i] = pos;
  }
  return out;
}

}  // namespace ronin::baselines
