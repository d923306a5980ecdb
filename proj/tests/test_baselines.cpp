#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "printers.hpp"
#include "ronin/error.hpp"
#include "ronin/baselines.hpp"
#include "ronin/synth.hpp"

using namespace ronin;
using namespace ronin::baselines;

namespace {

constexpr double kPi = std::numbers::pi;

seqdata::SensorSequence stationary(double duration, geom::Vec3 accel_bias = {}) {
  synth::TrajectorySpec s;
  s.duration_s = duration;
  s.speed_mps = 0.0;
  synth::ImuNoiseModel noise;
  noise.accel_bias = accel_bias;
  return synth::imu_from_trajectory(synth::gen_trajectory(s, 0), noise, 0);
}

seqdata::SensorSequence straight_walk(double bounce = 2.0, double device_yaw = 0.0) {
  synth::TrajectorySpec s;
  s.kind = synth::TrajectoryKind::Straight;
  s.duration_s = 60.0;
  s.speed_mps = 1.2;
  s.ramp_s = 2.0;
  s.step_freq_hz = 1.8;
  s.bounce_mps2 = bounce;
  s.surge_gain = 2.0;
  s.mounting = geom::UnitQuaternion::from_yaw(device_yaw);
  return synth::imu_from_trajectory(synth::gen_trajectory(s, 0), {}, 0);
}

}  // namespace

TEST(Ndi, ZeroNoiseWalkReconstructsGroundTruth) {
  for (std::size_t k = 0; k < 3; ++k) {
    synth::TrajectorySpec spec = synth::default_walking_specs()[k];
    spec.mounting = geom::UnitQuaternion(0.4, 0.3, -0.7, 0.2);
    const auto seq = synth::imu_from_trajectory(synth::gen_trajectory(spec, 10 + k), {}, 0);
    const auto est = ndi(seq);
    ASSERT_EQ(est.size(), seq.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      worst = std::max(worst, (est.p[i] - (seq.gt_pos[i].xy() - seq.gt_pos[0].xy())).norm());
    }
    EXPECT_LT(worst, 1e-3) << to_string(spec.kind);
  }
}

TEST(Ndi, StationaryStaysPut) {
  const auto est = ndi(stationary(10.0));
  for (const auto& p : est.p) EXPECT_LT(p.norm(), 1e-6);
}

TEST(Ndi, BiasGrowsQuadratically) {
  const auto seq = stationary(20.0, {0.1, 0, 0});
  const auto est = ndi(seq);
  const double at10 = est.p[2000].norm();
  EXPECT_NEAR(at10, 5.0, 0.25);
  const double ratio = est.p[4000 - 1].norm() / est.p[2000 - 1].norm();
  EXPECT_GE(ratio, 3.8);
  EXPECT_LE(ratio, 4.2);
}

TEST(Ndi, NeedsTwoFrames) {
  seqdata::SensorSequence s;
  s.t = {0.0};
  s.gyro = {{}};
  s.accel = {{0, 0, kGravity}};
  s.q_device = {{}};
  s.gt_pos = {{}};
  EXPECT_THROW(ndi(s), Error);
}

TEST(Bandpass, PassesGaitBlocksDcAndKeepsPhase) {
  const double rate = 200.0;
  std::vector<double> x(4000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 3.0 + std::sin(2 * kPi * 1.8 * i / rate);
  const auto y = bandpass_zero_phase(x, rate, 0.8, 3.0);
  ASSERT_EQ(y.size(), x.size());
  double peak = 0.0, mean = 0.0;
  for (std::size_t i = 1000; i < 3000; ++i) {
    peak = std::max(peak, y[i]);
    mean += y[i];
  }
  mean /= 2000.0;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_GT(peak, 0.85);
  EXPECT_LT(peak, 1.05);
  // Zero phase: filtered and clean sinusoid peak at the same frames.
  for (std::size_t i = 1000; i < 3000; ++i) {
    if (y[i] > y[i - 1] && y[i] >= y[i + 1]) {
      EXPECT_NEAR(std::sin(2 * kPi * 1.8 * i / rate), 1.0, 1e-3);
    }
  }
}

TEST(Steps, StraightWalkCount) {
  const auto steps = detect_steps(straight_walk());
  EXPECT_GE(steps.size(), 107u);
  EXPECT_LE(steps.size(), 109u);
  for (std::size_t k = 1; k < steps.size(); ++k) EXPECT_GE(steps[k] - steps[k - 1], 60u);
}

TEST(Steps, StationaryHasNone) { EXPECT_TRUE(detect_steps(stationary(30.0)).empty()); }

TEST(Steps, DoubledBounceKeepsCount) {
  EXPECT_EQ(detect_steps(straight_walk(2.0)).size(), detect_steps(straight_walk(4.0)).size());
}

TEST(Pdr, EndpointAndPathLength) {
  const auto seq = straight_walk();
  const auto steps = detect_steps(seq);
  const auto traj = pdr(seq);
  ASSERT_EQ(traj.size(), seq.size());
  const double expect = 0.67 * static_cast<double>(steps.size());
  EXPECT_NEAR(traj.p.back().x, 72.36, 0.67);
  EXPECT_NEAR(traj.p.back().y, 0.0, 1e-9);
  double length = 0.0;
  for (std::size_t i = 1; i < traj.size(); ++i) length += (traj.p[i] - traj.p[i - 1]).norm();
  EXPECT_NEAR(length, expect, 1e-9);
}

TEST(Pdr, YawedPhoneRotatesEndpoint) {
  const auto traj = pdr(straight_walk(2.0, kPi / 2));
  const auto& end = traj.p.back();
  EXPECT_NEAR(std::atan2(end.y, end.x), kPi / 2, 1e-6);
}

TEST(Pdr, NoStepsStaysAtOrigin) {
  for (const auto& p : pdr(stationary(10.0)).p) EXPECT_EQ(p, (geom::Vec2{0, 0}));
}
