#pragma once

// Sequence data model, on-disk format, supervision targets and the training
// window samplers.
//
// Sequence CSV: header `t,gx,gy,gz,ax,ay,az,qw,qx,qy,qz,px,py,pz,heading`,
// one row per frame. Gyro in rad/s and accel in m/s^2 (gravity included) in the
// device frame; q is device->world (w,x,y,z, Hamilton); p is the ground-truth
// position in meters; heading is the body heading in radians and may be empty.
// Sidecar `<name>.meta.json`: {"subject", "device", "split", "rate_hz"}.
//
// Feature rows are (gx, gy, gz, ax, ay, az) expressed in a HACF.

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ronin/geom.hpp"
#include "ronin/rng.hpp"

namespace ronin::seqdata {

using geom::UnitQuaternion;
using geom::Vec2;
using geom::Vec3;
using geom::YawAngle;

inline constexpr double kNominalRateHz = 200.0;

struct SequenceMeta {
  std::string subject;
  std::string device;
  std::string split;
  double rate_hz = kNominalRateHz;

  bool operator==(const SequenceMeta&) const = default;
};

struct SensorSequence {
  std::string name;
  std::vector<double> t;
  std::vector<Vec3> gyro;
  std::vector<Vec3> accel;
  std::vector<UnitQuaternion> q_device;
  std::vector<Vec3> gt_pos;
  std::vector<double> gt_heading;  // empty when the sequence has no heading
  SequenceMeta meta;

  std::size_t size() const { return t.size(); }
  bool has_heading() const { return !gt_heading.empty(); }
  double duration() const { return t.empty() ? 0.0 : t.back() - t.front(); }
};

// Checks the structural invariants; throws Error on violation.
void validate(const SensorSequence& seq);

SensorSequence load_sequence(const std::filesystem::path& csv_path);
void save_sequence(const SensorSequence& seq, const std::filesystem::path& csv_path);
std::filesystem::path meta_path_for(const std::filesystem::path& csv_path);

// Finite-difference ground-truth XY velocity smoothed by a Gaussian of
// `sigma_frames`, truncated at 4 sigma and renormalized near the ends.
std::vector<Vec2> dense_velocity_target(const SensorSequence& seq, double sigma_frames = 30.0);

// gt_pos[i].xy - gt_pos[i - stride].xy in the world frame.
Vec2 strided_target(const SensorSequence& seq, std::size_t i, std::size_t stride = 200);

using FeatureRow = std::array<double, 6>;

std::vector<FeatureRow> window_features(const SensorSequence& seq, std::size_t start,
                                        std::size_t len, YawAngle yaw);

// Raw device-frame channels, for the local-frame ablation.
std::vector<FeatureRow> local_features(const SensorSequence& seq, std::size_t start,
                                       std::size_t len);

struct SampleWindow {
  std::size_t sequence = 0;
  std::size_t start = 0;
  std::size_t length = 0;
  YawAngle yaw;

  bool operator==(const SampleWindow&) const = default;
};

// Fixed-stride windows (200 frames every 10 by default), each with its own
// uniformly random yaw.
std::vector<SampleWindow> sample_resnet(std::size_t sequence, std::size_t n_frames, Rng& rng,
                                        std::size_t length = 200, std::size_t step = 10);

// Windows whose consecutive starts are separated by a random gap drawn
// uniformly from [gap_min, gap_max].
std::vector<SampleWindow> sample_rnn(std::size_t sequence, std::size_t n_frames, Rng& rng,
                                     std::size_t length = 400, std::size_t gap_min = 50,
                                     std::size_t gap_max = 150);

}  // namespace ronin::seqdata
