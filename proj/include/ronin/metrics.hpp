#pragma once

// Trajectory integration of network outputs, alignment, and the position and
// heading error metrics.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ronin/geom.hpp"
#include "ronin/seqdata.hpp"

namespace ronin::metrics {

using geom::Vec2;

struct Trajectory2D {
  std::vector<double> t;
  std::vector<Vec2> p;

  std::size_t size() const { return t.size(); }
  bool empty() const { return t.empty(); }
};

// Equal lengths, strictly increasing stamps. Throws Error.
void validate(const Trajectory2D& traj);

Trajectory2D ground_truth_xy(const seqdata::SensorSequence& seq);

// `preds[k]` is the displacement over the `window` frames ending at a
// prediction frame, i.e. a mean velocity; predictions are `step` frames apart.
// Returns preds.size() + 1 points, the first at `t_start` on the origin.
Trajectory2D integrate_resnet(std::span<const Vec2> preds, double t_start = 0.0,
                              double rate_hz = 200.0, std::size_t step = 5,
                              std::size_t window = 200);

// Cumulative sum of per-frame displacements; rows.size() + 1 points starting
// at the origin at `t_start`.
Trajectory2D integrate_latent(std::span<const Vec2> rows, double t_start = 0.0,
                              double rate_hz = 200.0);

struct AlignmentSE2 {
  double rotation = 0.0;
  Vec2 translation;
  bool degenerate = false;  // rotation could not be determined; translation only

  Vec2 apply(const Vec2& p) const { return geom::rotate2d(p, rotation) + translation; }
  Trajectory2D apply(const Trajectory2D& traj) const;
};

// Linear interpolation of `est` at `stamps`; stamps outside est's range are
// dropped. Returns matched (time, est position) pairs.
Trajectory2D resample(const Trajectory2D& est, std::span<const double> stamps);

// Rigid (rotation + translation) least-squares fit of est onto gt over the
// first `window_s` seconds of their overlap.
AlignmentSE2 align_first_5s(const Trajectory2D& est, const Trajectory2D& gt, double window_s = 5.0);

// Translation making est coincide with gt at the first overlapping stamp.
Trajectory2D anchor_start(const Trajectory2D& est, const Trajectory2D& gt);

double ate(const Trajectory2D& est, const Trajectory2D& gt);
double rte(const Trajectory2D& est, const Trajectory2D& gt, double interval_s = 60.0);

struct HeadingMetrics {
  double mse = 0.0;
  double mae_deg = 0.0;
  std::size_t flagged = 0;  // frames whose (x, y) had no usable direction
};

// `pred` rows are (x, y) = (sin, cos) of the heading.
HeadingMetrics heading_metrics(std::span<const Vec2> pred, std::span<const double> gt_heading);

// Device yaw per frame, offset by the constant minimizing the mean absolute
// error to the ground-truth heading over the first `window_s` seconds.
std::vector<double> device_heading_baseline(const seqdata::SensorSequence& seq,
                                            double window_s = 5.0);

std::vector<Vec2> heading_to_sincos(std::span<const double> headings);

void save_trajectory(const Trajectory2D& traj, const std::filesystem::path& path);
Trajectory2D load_trajectory(const std::filesystem::path& path);

struct MetricsReport {
  std::string sequence;
  std::string estimator;
  std::optional<double> ate_m;
  std::optional<double> rte_m;
  std::optional<double> heading_mse;
  std::optional<double> heading_mae_deg;
};

std::string report_to_json(const MetricsReport& report);

}  // namespace ronin::metrics
