#pragma once

// Synthetic pedestrian trajectories and the IMU streams they induce.
//
// A trajectory is driven by a C^2 speed profile s(t) and turn rate r(t); the
// horizontal path integrates p' = s * (cos psi, sin psi), psi' = r. Walking
// specs add a gait overlay at the step frequency: a vertical bounce and a
// forward surge whose acceleration amplitude scales with speed. The device
// orientation is R_z(psi(t)) * mounting.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "ronin/geom.hpp"
#include "ronin/seqdata.hpp"

namespace ronin::synth {

using geom::UnitQuaternion;
using geom::Vec3;

inline constexpr double kGravity = 9.80665;

enum class TrajectoryKind { Straight, Circle, Sinusoid, RandomWalk, StopAndGo };

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::Straight;
  double duration_s = 60.0;
  double rate_hz = 200.0;
  double speed_mps = 1.0;
  double heading_rad = 0.0;

  double radius_m = 2.0;             // circle
  double weave_amplitude_rad = 0.5;  // sinusoid: heading swing
  double weave_period_s = 10.0;

  double speed_min_mps = 0.6;  // random walk / stop-and-go speed knots
  double speed_max_mps = 1.4;
  double turn_rate_max_rps = 0.15;
  double segment_s = 5.0;

  double walk_s = 10.0;  // stop-and-go cycle
  double stop_s = 6.0;
  double transition_s = 1.0;

  double ramp_s = 0.0;  // smooth start from rest; 0 starts at full speed

  double step_freq_hz = 0.0;  // 0 disables the gait overlay
  double bounce_mps2 = 0.0;
  double surge_gain = 0.0;  // forward accel amplitude per m/s of speed

  UnitQuaternion mounting;
};

// Throws Error(InvalidSpec).
void validate(const TrajectorySpec& spec);

nlohmann::json to_json(const TrajectorySpec& spec);
TrajectorySpec spec_from_json(const nlohmann::json& j);
std::string to_string(TrajectoryKind kind);
TrajectoryKind kind_from_string(const std::string& name);

struct ImuNoiseModel {
  Vec3 gyro_bias;
  Vec3 accel_bias;
  double gyro_sigma = 0.0;
  double accel_sigma = 0.0;
  double yaw_drift_deg_per_min = 0.0;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<Vec3> pos;
  std::vector<Vec3> vel;
  std::vector<double> heading;  // wrapped body heading
  std::vector<UnitQuaternion> q_device;
  double rate_hz = 200.0;

  std::size_t size() const { return t.size(); }
};

Trajectory gen_trajectory(const TrajectorySpec& spec, std::uint64_t seed);

// Central second differences of position give the world acceleration; the
// accelerometer reads R^T (a_w + g z) and the gyro the body rate from the
// quaternion log. Noise terms are added afterwards.
seqdata::SensorSequence imu_from_trajectory(const Trajectory& traj, const ImuNoiseModel& noise,
                                            std::uint64_t noise_seed = 0,
                                            double gravity = kGravity);

struct SubjectProfile {
  std::string id;
  double step_freq_hz = 1.8;
  double bounce_mps2 = 2.0;
  UnitQuaternion mounting;
};

SubjectProfile make_subject(const std::string& id, std::uint64_t seed, bool random_mounting);

struct DatasetOptions {
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_test_seen = 0;
  std::size_t n_test_unseen = 0;
  std::size_t n_seen_subjects = 8;
  std::size_t n_unseen_subjects = 2;
  std::vector<TrajectorySpec> specs;  // templates, cycled over sequences
  ImuNoiseModel noise;
  bool random_mounting = true;
  bool random_heading = true;
  std::uint64_t seed = 0;

  std::size_t total() const { return n_train + n_val + n_test_seen + n_test_unseen; }
};

// Splits are "train", "val", "test_seen" and "test_unseen"; unseen-test
// sequences come from subjects that never appear in the other splits.
std::vector<seqdata::SensorSequence> gen_dataset(const DatasetOptions& options);

// Default 70/10/10/10 split of `n_sequences`.
std::vector<seqdata::SensorSequence> gen_dataset(std::size_t n_sequences,
                                                 const std::vector<TrajectorySpec>& specs,
                                                 std::uint64_t seed);

// Walking templates used by the CLI when no spec file is given.
std::vector<TrajectorySpec> default_walking_specs();

}  // namespace ronin::synth
