#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "printers.hpp"
#include "ronin/error.hpp"
#include "ronin/seqdata.hpp"
#include "ronin/synth.hpp"

using namespace ronin;
using namespace ronin::seqdata;
namespace fs = std::filesystem;

namespace {

constexpr double kG = 9.80665;

SensorSequence line_sequence(std::size_t n, Vec2 velocity) {
  SensorSequence s;
  s.name = "line";
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / 200.0;
    s.t.push_back(t);
    s.gyro.push_back({});
    s.accel.push_back({0, 0, kG});
    s.q_device.push_back(UnitQuaternion::identity());
    s.gt_pos.push_back({velocity.x * t, velocity.y * t, 0});
  }
  return s;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ronin_seq_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kHeader = "t,gx,gy,gz,ax,ay,az,qw,qx,qy,qz,px,py,pz,heading\n";

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(SequenceCsv, HandwrittenThreeRows) {
  const fs::path dir = temp_dir("hand");
  const fs::path p = dir / "walk.csv";
  std::ofstream(p) << kHeader << "0,0,0,0,0,0,9.8,1,0,0,0,0,0,0,0.5\n"
                   << "0.005,0,0,0.1,0,0,9.8,1,0,0,0,0.01,0,0,0.5\n"
                   << "0.01,0,0,0.1,0,0,9.8,1,0,0,0,0.02,0,0,0.5\n";
  const SensorSequence s = load_sequence(p);
  EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(s.name, "walk");
  EXPECT_TRUE(s.has_heading());
  EXPECT_DOUBLE_EQ(s.gt_pos[2].x, 0.02);
  EXPECT_DOUBLE_EQ(s.gyro[1].z, 0.1);
}

TEST(SequenceCsv, EmptyHeadingColumnMeansNoHeading) {
  const fs::path dir = temp_dir("nohead");
  const fs::path p = dir / "a.csv";
  std::ofstream(p) << kHeader << "0,0,0,0,0,0,9.8,1,0,0,0,0,0,0,\n"
                   << "0.005,0,0,0,0,0,9.8,1,0,0,0,0,0,0,\n";
  EXPECT_FALSE(load_sequence(p).has_heading());
}

TEST(SequenceCsv, DecreasingTimestampReportsRow) {
  const fs::path dir = temp_dir("mono");
  const fs::path p = dir / "bad.csv";
  std::ofstream(p) << kHeader << "0,0,0,0,0,0,9.8,1,0,0,0,0,0,0,\n"
                   << "0.005,0,0,0,0,0,9.8,1,0,0,0,0,0,0,\n"
                   << "0.004,0,0,0,0,0,9.8,1,0,0,0,0,0,0,\n";
  try {
    load_sequence(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonMonotonicTime);
    ASSERT_TRUE(e.has_index());
    EXPECT_EQ(e.index(), 2u);
  }
}

TEST(SequenceCsv, RejectsBadHeaderAndQuaternion) {
  const fs::path dir = temp_dir("bad");
  std::ofstream(dir / "h.csv") << "t,gx,gy\n0,0,0\n";
  try {
    load_sequence(dir / "h.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedHeader);
  }
  std::ofstream(dir / "q.csv") << kHeader << "0,0,0,0,0,0,9.8,1,0,0,0,0,0,0,\n"
                               << "0.005,0,0,0,0,0,9.8,0.5,0,0,0,0,0,0,\n";
  try {
    load_sequence(dir / "q.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonUnitQuaternion);
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(SequenceCsv, SyntheticRoundTripIsBitExact) {
  synth::TrajectorySpec spec = synth::default_walking_specs()[0];
  spec.duration_s = 5.0;
  spec.mounting = UnitQuaternion(0.3, -0.4, 0.5, 0.2);
  const auto traj = synth::gen_trajectory(spec, 11);
  SensorSequence s = synth::imu_from_trajectory(traj, {}, 0);
  s.name = "rt";
  s.meta = {"subj_003", "synthetic", "val", 200.0};
  const fs::path dir = temp_dir("rt");
  save_sequence(s, dir / "rt.csv");
  EXPECT_TRUE(fs::exists(meta_path_for(dir / "rt.csv")));
  const SensorSequence r = load_sequence(dir / "rt.csv");
  ASSERT_EQ(r.size(), s.size());
  EXPECT_EQ(r.meta, s.meta);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_TRUE(bit_equal(r.t[i], s.t[i]));
    EXPECT_EQ(r.gyro[i], s.gyro[i]);
    EXPECT_EQ(r.accel[i], s.accel[i]);
    EXPECT_EQ(r.gt_pos[i], s.gt_pos[i]);
    EXPECT_EQ(r.q_device[i], s.q_device[i]) << "frame " << i;
    EXPECT_TRUE(bit_equal(r.gt_heading[i], s.gt_heading[i]));
  }
}

TEST(Validate, ChecksRateAndLengths) {
  SensorSequence s = line_sequence(10, {1, 0});
  EXPECT_NO_THROW(validate(s));
  s.t[5] = s.t[4];
  EXPECT_THROW(validate(s), Error);
  SensorSequence slow = line_sequence(10, {1, 0});
  for (std::size_t i = 0; i < slow.size(); ++i) slow.t[i] *= 2.0;
  EXPECT_THROW(validate(slow), Error);
  SensorSequence one = line_sequence(1, {1, 0});
  EXPECT_THROW(validate(one), Error);
}

TEST(DenseVelocity, ConstantAndStationary) {
  const auto v = dense_velocity_target(line_sequence(600, {1, 0}));
  ASSERT_EQ(v.size(), 600u);
  for (const auto& r : v) {
    EXPECT_NEAR(r.x, 1.0, 1e-9);
    EXPECT_NEAR(r.y, 0.0, 1e-9);
  }
  for (const auto& r : dense_velocity_target(line_sequence(300, {0, 0}))) EXPECT_EQ(r, (Vec2{0, 0}));
  EXPECT_THROW(dense_velocity_target(line_sequence(2, {1, 0})), Error);
}

TEST(DenseVelocity, SinusoidMatchesConvolvedAnalyticDerivative) {
  // x(t) = sin(w t), y(t) = 0.5 cos(w t)
  const double w = 0.5;
  SensorSequence s = line_sequence(2000, {0, 0});
  for (std::size_t i = 0; i < s.size(); ++i) {
    s.gt_pos[i] = {std::sin(w * s.t[i]), 0.5 * std::cos(w * s.t[i]), 0};
  }
  const double sigma = 30.0;
  const auto v = dense_velocity_target(s, sigma);
  const int radius = 120;
  for (std::size_t i = radius; i + radius < s.size(); i += 37) {
    double sx = 0, sy = 0, ws = 0;
    for (int k = -radius; k <= radius; ++k) {
      const double g = std::exp(-0.5 * (k / sigma) * (k / sigma));
      const double t = s.t[i + k];
      sx += g * w * std::cos(w * t);
      sy += g * -0.5 * w * std::sin(w * t);
      ws += g;
    }
    EXPECT_NEAR(v[i].x, sx / ws, 1e-6);
    EXPECT_NEAR(v[i].y, sy / ws, 1e-6);
  }
}

TEST(DenseVelocity, IntegratesBackToPositions) {
  synth::TrajectorySpec spec = synth::default_walking_specs()[0];
  spec.duration_s = 40.0;
  const auto seq = synth::imu_from_trajectory(synth::gen_trajectory(spec, 3), {}, 0);
  const auto v = dense_velocity_target(seq);
  const double bound = 2.0 * (30.0 / 200.0) * 1.4 * 2.0;  // 2 sigma * v_max, generous on v_max
  const std::size_t span = 2000;
  for (std::size_t a = 0; a + span < seq.size(); a += 500) {
    Vec2 p = seq.gt_pos[a].xy();
    for (std::size_t i = a + 1; i <= a + span; ++i) {
      p += (v[i] + v[i - 1]) * (0.5 * (seq.t[i] - seq.t[i - 1]));
    }
    EXPECT_LT((p - seq.gt_pos[a + span].xy()).norm(), bound);
  }
}

TEST(StridedTarget, Examples) {
  const auto s = line_sequence(500, {1, 0});
  const Vec2 d = strided_target(s, 200);
  EXPECT_NEAR(d.x, 1.0, 1e-12);
  EXPECT_NEAR(d.y, 0.0, 1e-12);
  EXPECT_EQ(strided_target(line_sequence(500, {0, 0}), 300), (Vec2{0, 0}));
  EXPECT_THROW(strided_target(s, 199), Error);
  EXPECT_THROW(strided_target(s, 500), Error);
}

TEST(StridedTarget, CircleChord) {
  synth::TrajectorySpec spec;
  spec.kind = synth::TrajectoryKind::Circle;
  spec.duration_s = 5.0;
  spec.radius_m = 2.0;
  spec.speed_mps = 1.0;
  const auto traj = synth::gen_trajectory(spec, 0);
  const auto seq = synth::imu_from_trajectory(traj, {}, 0);
  // 1 m/s on r = 2 sweeps 0.5 rad per second; the chord is parallel to the
  // tangent at the midpoint.
  const double len = 2.0 * 2.0 * std::sin(0.25);
  const double dir = seq.gt_heading[300];
  const Vec2 got = strided_target(seq, 400);
  EXPECT_NEAR(got.x, len * std::cos(dir), 1e-9);
  EXPECT_NEAR(got.y, len * std::sin(dir), 1e-9);
}

TEST(WindowFeatures, StationaryIdentity) {
  const auto rows = window_features(line_sequence(50, {0, 0}), 10, 20, YawAngle(0.0));
  ASSERT_EQ(rows.size(), 20u);
  for (const auto& r : rows) {
    EXPECT_EQ(r[0], 0.0);
    EXPECT_EQ(r[1], 0.0);
    EXPECT_EQ(r[2], 0.0);
    EXPECT_DOUBLE_EQ(r[5], kG);
  }
  EXPECT_THROW(window_features(line_sequence(50, {0, 0}), 40, 20, YawAngle(0.0)), Error);
}

TEST(WindowFeatures, MatchesPerFrameOracleAndIsEquivariant) {
  synth::TrajectorySpec spec;
  spec.kind = synth::TrajectoryKind::Circle;
  spec.duration_s = 3.0;
  spec.mounting = UnitQuaternion(0.9, 0.2, -0.3, 0.1);
  const auto seq = synth::imu_from_trajectory(synth::gen_trajectory(spec, 0), {}, 0);
  const auto base = window_features(seq, 100, 200, YawAngle(0.0));
  const auto flipped = window_features(seq, 100, 200, YawAngle(std::numbers::pi));
  const YawAngle yaw(1.234);
  const auto turned = window_features(seq, 100, 200, yaw);
  for (std::size_t k = 0; k < 200; ++k) {
    const std::size_t i = 100 + k;
    const auto g = geom::to_hacf(seq.q_device[i], YawAngle(0.0), seq.gyro[i]);
    const auto a = geom::to_hacf(seq.q_device[i], YawAngle(0.0), seq.accel[i]);
    EXPECT_NEAR(base[k][0], g.x, 1e-12);
    EXPECT_NEAR(base[k][2], g.z, 1e-12);
    EXPECT_NEAR(base[k][4], a.y, 1e-12);
    EXPECT_NEAR(base[k][5], a.z, 1e-12);
    for (int c : {0, 1, 3, 4}) EXPECT_NEAR(flipped[k][c], -base[k][c], 1e-12);
    for (int c : {0, 3}) {
      const Vec2 r = geom::rotate2d(Vec2{base[k][c], base[k][c + 1]}, yaw);
      EXPECT_NEAR(turned[k][c], r.x, 1e-12);
      EXPECT_NEAR(turned[k][c + 1], r.y, 1e-12);
    }
  }
}

TEST(Samplers, ResnetArithmetic) {
  Rng rng(5);
  const auto w = sample_resnet(3, 1000, rng);
  ASSERT_EQ(w.size(), 81u);
  for (std::size_t k = 0; k < w.size(); ++k) {
    EXPECT_EQ(w[k].start, 10 * k);
    EXPECT_EQ(w[k].length, 200u);
    EXPECT_EQ(w[k].sequence, 3u);
  }
  std::set<double> yaws;
  for (const auto& x : w) yaws.insert(x.yaw.radians());
  EXPECT_EQ(yaws.size(), w.size());
}

TEST(Samplers, RnnGapsAndShortSequences) {
  Rng rng(6);
  EXPECT_TRUE(sample_rnn(0, 300, rng).empty());
  const auto w = sample_rnn(0, 20000, rng);
  ASSERT_GT(w.size(), 100u);
  EXPECT_EQ(w.front().start, 0u);
  for (std::size_t k = 1; k < w.size(); ++k) {
    const std::size_t gap = w[k].start - w[k - 1].start;
    EXPECT_GE(gap, 50u);
    EXPECT_LE(gap, 150u);
  }
  EXPECT_LE(w.back().start + 400, 20000u);
}

TEST(Samplers, DeterministicPerSeed) {
  Rng a(42), b(42);
  EXPECT_EQ(sample_rnn(1, 5000, a), sample_rnn(1, 5000, b));
  EXPECT_EQ(sample_resnet(1, 5000, a), sample_resnet(1, 5000, b));
}
