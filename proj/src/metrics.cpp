#include "ronin/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "ronin/error.hpp"

namespace ronin::metrics {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

struct Matched {
  std::vector<double> t;
  std::vector<Vec2> est;
  std::vector<Vec2> gt;
};

Matched match(const Trajectory2D& est, const Trajectory2D& gt) {
  validate(est);
  validate(gt);
  Matched m;
  const auto r = resample(est, gt.t);
  std::size_t j = 0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    while (gt.t[j] != r.t[k]) ++j;
    m.t.push_back(r.t[k]);
    m.est.push_back(r.p[k]);
    m.gt.push_back(gt.p[j]);
  }
  if (m.t.empty()) throw Error(ErrorKind::TooShort, "estimate and ground truth do not overlap");
  return m;
}

}  // namespace

void validate(const Trajectory2D& traj) {
  if (traj.t.size() != traj.p.size()) {
    throw Error(ErrorKind::InvalidArgument, "trajectory stamps and positions differ in length");
  }
  for (std::size_t i = 1; i < traj.t.size(); ++i) {
    if (!(traj.t[i] > traj.t[i - 1])) {
      throw Error(ErrorKind::NonMonotonicTime, i, "trajectory stamps must increase");
    }
  }
}

Trajectory2D ground_truth_xy(const seqdata::SensorSequence& seq) {
  Trajectory2D g;
  g.t = seq.t;
  g.p.reserve(seq.size());
  for (const auto& p : seq.gt_pos) g.p.push_back(p.xy());
  return g;
}

Trajectory2D integrate_resnet(std::span<const Vec2> preds, double t_start, double rate_hz,
                              std::size_t step, std::size_t window) {
  Trajectory2D out;
  const double dt = static_cast<double>(step) / rate_hz;
  const double scale = static_cast<double>(step) / static_cast<double>(window);
  Vec2 pos;
  out.t.push_back(t_start);
  out.p.push_back(pos);
  for (std::size_t k = 0; k < preds.size(); ++k) {
    pos += preds[k] * scale;
    out.t.push_back(t_start + static_cast<double>(k + 1) * dt);
    out.p.push_back(pos);
  }
  return out;
}

Trajectory2D integrate_latent(std::span<const Vec2> rows, double t_start, double rate_hz) {
  Trajectory2D out;
  Vec2 pos;
  out.t.push_back(t_start);
  out.p.push_back(pos);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    pos += rows[k];
    out.t.push_back(t_start + static_cast<double>(k + 1) / rate_hz);
    out.p.push_back(pos);
  }
  return out;
}

Trajectory2D AlignmentSE2::apply(const Trajectory2D& traj) const {
  Trajectory2D out = traj;
  for (auto& p : out.p) p = apply(p);
  return out;
}

Trajectory2D resample(const Trajectory2D& est, std::span<const double> stamps) {
  Trajectory2D out;
  if (est.empty()) return out;
  const double lo = est.t.front();
  const double hi = est.t.back();
  std::size_t j = 0;
  for (double s : stamps) {
    if (s < lo || s > hi) continue;
    while (j + 1 < est.size() && est.t[j + 1] < s) ++j;
    Vec2 p;
    if (est.t[j] == s || j + 1 >= est.size()) {
      p = est.p[j];
    } else {
      const double w = (s - est.t[j]) / (est.t[j + 1] - est.t[j]);
      p = est.p[j] * (1.0 - w) + est.p[j + 1] * w;
    }
    out.t.push_back(s);
    out.p.push_back(p);
  }
  return out;
}

AlignmentSE2 align_first_5s(const Trajectory2D& est, const Trajectory2D& gt, double window_s) {
  const Matched m = match(est, gt);
  if (m.t.back() - m.t.front() < window_s) {
    throw Error(ErrorKind::TooShort, "alignment needs the full window of overlap");
  }
  std::size_t n = 0;
  Vec2 ce;
  Vec2 cg;
  while (n < m.t.size() && m.t[n] - m.t.front() <= window_s) {
    ce += m.est[n];
    cg += m.gt[n];
    ++n;
  }
  ce = ce * (1.0 / static_cast<double>(n));
  cg = cg * (1.0 / static_cast<double>(n));

  double sdot = 0.0;
  double scross = 0.0;
  double spread_e = 0.0;
  double spread_g = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 a = m.est[k] - ce;
    const Vec2 b = m.gt[k] - cg;
    sdot += a.dot(b);
    scross += a.cross(b);
    spread_e += a.dot(a);
    spread_g += b.dot(b);
  }

  AlignmentSE2 out;
  if (spread_e < 1e-12 || spread_g < 1e-12 || std::hypot(sdot, scross) < 1e-12) {
    out.degenerate = true;
    out.rotation = 0.0;
  } else {
    out.rotation = std::atan2(scross, sdot);
  }
  out.translation = cg - geom::rotate2d(ce, out.rotation);
  return out;
}

Trajectory2D anchor_start(const Trajectory2D& est, const Trajectory2D& gt) {
  const Matched m = match(est, gt);
  const Vec2 offset = m.gt.front() - m.est.front();
  Trajectory2D out = est;
  for (auto& p : out.p) p += offset;
  return out;
}

double ate(const Trajectory2D& est, const Trajectory2D& gt) {
  const Matched m = match(est, gt);
  double sum = 0.0;
  for (std::size_t k = 0; k < m.t.size(); ++k) {
    const Vec2 d = m.est[k] - m.gt[k];
    sum += d.dot(d);
  }
  return std::sqrt(sum / static_cast<double>(m.t.size()));
}

double rte(const Trajectory2D& est, const Trajectory2D& gt, double interval_s) {
  const Matched m = match(est, gt);
  const std::size_t n = m.t.size();
  if (n < 2) throw Error(ErrorKind::TooShort, "relative error needs two matched frames");
  const double duration = m.t.back() - m.t.front();

  if (duration < interval_s) {
    const Vec2 err = (m.est.back() - m.est.front()) - (m.gt.back() - m.gt.front());
    return err.norm() * interval_s / duration;
  }

  const double dt_nominal = duration / static_cast<double>(n - 1);
  double total = 0.0;
  std::size_t windows = 0;
  std::size_t begin = 0;
  while (begin < n) {
    const double t_begin = m.t.front() + interval_s * static_cast<double>(windows);
    std::size_t end = begin;
    while (end < n && m.t[end] < t_begin + interval_s) ++end;
    if (end - begin >= 2) {
      const Vec2 offset = m.gt[begin] - m.est[begin];
      double sum = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const Vec2 d = m.est[k] + offset - m.gt[k];
        sum += d.dot(d);
      }
      const double rmse = std::sqrt(sum / static_cast<double>(end - begin));
      const double span = m.t[end - 1] - m.t[begin];
      if (span >= interval_s - 1.5 * dt_nominal) {
        total += rmse;
      } else if (span >= 0.5 * interval_s) {
        total += rmse * interval_s / span;
      } else {
        break;
      }
      ++windows;
    } else {
      break;
    }
    begin = end;
  }
  return total / static_cast<double>(windows);
}

HeadingMetrics heading_metrics(std::span<const Vec2> pred, std::span<const double> gt_heading) {
  if (pred.size() != gt_heading.size() || pred.empty()) {
    throw Error(ErrorKind::InvalidArgument, "heading prediction and ground truth differ in length");
  }
  HeadingMetrics out;
  double sq = 0.0;
  double abs_sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double th = gt_heading[k];
    const double ex = pred[k].x - std::sin(th);
    const double ey = pred[k].y - std::cos(th);
    sq += ex * ex + ey * ey;
    if (pred[k].norm() <= 1e-6) {
      ++out.flagged;
      continue;
    }
    const double est = std::atan2(pred[k].x, pred[k].y);
    double diff = geom::wrap_angle(est - th);
    if (diff == -std::numbers::pi) diff = std::numbers::pi;
    abs_sum += std::abs(diff);
    ++used;
  }
  out.mse = sq / (2.0 * static_cast<double>(pred.size()));
  out.mae_deg = used > 0 ? abs_sum / static_cast<double>(used) * kRadToDeg : 0.0;
  return out;
}

std::vector<double> device_heading_baseline(const seqdata::SensorSequence& seq, double window_s) {
  if (!seq.has_heading()) throw Error(ErrorKind::InvalidArgument, "sequence has no ground-truth heading");
  const std::size_t n = seq.size();
  std::vector<double> yaw(n);
  double last = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    try {
      last = geom::yaw_of(seq.q_device[i]).radians();
    } catch (const Error&) {
      // Degenerate frames keep the previous heading.
    }
    yaw[i] = last;
  }

  std::vector<double> diffs;
  for (std::size_t i = 0; i < n && seq.t[i] - seq.t.front() <= window_s; ++i) {
    diffs.push_back(geom::wrap_angle(seq.gt_heading[i] - yaw[i]));
  }
  // The circular L1 cost is piecewise linear in the offset, so a minimizer is
  // one of the samples.
  double best = 0.0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (double c : diffs) {
    double cost = 0.0;
    for (double d : diffs) cost += std::abs(geom::wrap_angle(d - c));
    if (cost < best_cost) {
      best_cost = cost;
      best = c;
    }
  }
  for (auto& y : yaw) y = geom::wrap_angle(y + best);
  return yaw;
}

std::vector<Vec2> heading_to_sincos(std::span<const double> headings) {
  std::vector<Vec2> out;
  out.reserve(headings.size());
  for (double h : headings) out.push_back({std::sin(h), std::cos(h)});
  return out;
}

void save_trajectory(const Trajectory2D& traj, const std::filesystem::path& path) {
  validate(traj);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot write " + path.string());
  std::string out = "t,x,y\n";
  char buf[32];
  for (std::size_t k = 0; k < traj.size(); ++k) {
    for (double v : {traj.t[k], traj.p[k].x, traj.p[k].y}) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      out.append(buf, end);
      out.push_back(',');
    }
    out.back() = '\n';
  }
  f << out;
}

Trajectory2D load_trajectory(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || (line != "t,x,y" && line != "t,x,y\r")) {
    throw Error(ErrorKind::MalformedHeader, "expected header 't,x,y'");
  }
  Trajectory2D traj;
  std::size_t row = 0;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    double v[3];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int c = 0; c < 3; ++c) {
      auto [ptr, ec] = std::from_chars(p, end, v[c]);
      if (ec != std::errc() || (c < 2 && (ptr == end || *ptr != ',')) || (c == 2 && ptr != end)) {
        throw Error(ErrorKind::MalformedRow, row, "expected three numbers");
      }
      p = ptr + 1;
    }
    traj.t.push_back(v[0]);
    traj.p.push_back({v[1], v[2]});
    ++row;
  }
  validate(traj);
  return traj;
}

std::string report_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["sequence"] = r.sequence;
  j["estimator"] = r.estimator;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) {
      j[key] = *v;
    } else {
      j[key] = nullptr;
    }
  };
  put("ate_m", r.ate_m);
  put("rte_m", r.rte_m);
  put("heading_mse", r.heading_mse);
  put("heading_mae_deg", r.heading_mae_deg);
  return j.dump(2) + "\n";
}

}  // namespace ronin::metrics
