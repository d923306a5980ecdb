#include "ronin/synth.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "ronin/error.hpp"
#include "ronin/rng.hpp"

namespace ronin::synth {

namespace {

constexpr double kPi = std::numbers::pi;
// Speed at which the gait overlay reaches full amplitude.
constexpr double kGaitFullSpeed = 0.3;

// Quintic smoothstep: C^2 blend from 0 to 1 on [0, 1].
double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * x * (x * (6.0 * x - 15.0) + 10.0);
}

double smoothstep_deriv(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return 30.0 * x * x * (1.0 - x) * (1.0 - x);
}

// Knot values every `spacing` seconds, blended with smoothstep.
struct KnotProfile {
  std::vector<double> values;
  double spacing = 1.0;

  double operator()(double t) const {
    if (values.empty()) return 0.0;
    if (t <= 0.0) return values.front();
    const double pos = t / spacing;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= values.size()) return values.back();
    const double w = smoothstep(pos - static_cast<double>(i));
    return values[i] * (1.0 - w) + values[i + 1] * w;
  }
};

KnotProfile random_knots(Rng& rng, double duration, double spacing, double lo, double hi) {
  KnotProfile k;
  k.spacing = spacing;
  const auto n = static_cast<std::size_t>(std::ceil(duration / spacing)) + 2;
  k.values.resize(n);
  for (auto& v : k.values) v = rng.uniform(lo, hi);
  return k;
}

// 1 while walking, 0 while stopped; starts from rest with an up-ramp.
double stop_and_go_gate(const TrajectorySpec& spec, double t) {
  const double period = spec.walk_s + spec.stop_s;
  const double tau = std::fmod(std::max(t, 0.0), period);
  const double tr = spec.transition_s;
  if (tau < tr) return smoothstep(tau / tr);
  if (tau < spec.walk_s - tr) return 1.0;
  if (tau < spec.walk_s) return 1.0 - smoothstep((tau - spec.walk_s + tr) / tr);
  return 0.0;
}

struct Profiles {
  std::function<double(double)> speed;
  std::function<double(double)> turn_rate;
};

Profiles make_profiles(const TrajectorySpec& spec, Rng& rng) {
  auto ramp = [spec](double t) { return spec.ramp_s > 0.0 ? smoothstep(t / spec.ramp_s) : 1.0; };
  Profiles p;
  switch (spec.kind) {
    case TrajectoryKind::Straight:
      p.speed = [spec, ramp](double t) { return spec.speed_mps * ramp(t); };
      p.turn_rate = [](double) { return 0.0; };
      break;
    case TrajectoryKind::Circle:
      p.speed = [spec, ramp](double t) { return spec.speed_mps * ramp(t); };
      p.turn_rate = [spec, ramp](double t) { return spec.speed_mps * ramp(t) / spec.radius_m; };
      break;
    case TrajectoryKind::Sinusoid: {
      const double w = 2.0 * kPi / spec.weave_period_s;
      p.speed = [spec, ramp](double t) { return spec.speed_mps * ramp(t); };
      p.turn_rate = [spec, w](double t) { return spec.weave_amplitude_rad * w * std::cos(w * t); };
      break;
    }
    case TrajectoryKind::RandomWalk: {
      const auto speed = random_knots(rng, spec.duration_s, spec.segment_s, spec.speed_min_mps,
                                      spec.speed_max_mps);
      const auto turn = random_knots(rng, spec.duration_s, spec.segment_s,
                                     -spec.turn_rate_max_rps, spec.turn_rate_max_rps);
      p.speed = [speed, ramp](double t) { return speed(t) * ramp(t); };
      p.turn_rate = turn;
      break;
    }
    case TrajectoryKind::StopAndGo: {
      const auto speed = random_knots(rng, spec.duration_s, spec.segment_s, spec.speed_min_mps,
                                      spec.speed_max_mps);
      const auto turn = random_knots(rng, spec.duration_s, spec.segment_s,
                                     -spec.turn_rate_max_rps, spec.turn_rate_max_rps);
      p.speed = [speed, spec, ramp](double t) {
        return speed(t) * stop_and_go_gate(spec, t) * ramp(t);
      };
      // Heading only changes while walking.
      p.turn_rate = [turn, spec](double t) { return turn(t) * stop_and_go_gate(spec, t); };
      break;
    }
  }
  return p;
}

double derivative(const std::function<double(double)>& f, double t) {
  constexpr double h = 1e-4;
  return (-f(t + 2 * h) + 8.0 * f(t + h) - 8.0 * f(t - h) + f(t - 2 * h)) / (12.0 * h);
}

UnitQuaternion random_rotation(Rng& rng) {
  return {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
}

}  // namespace

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::Straight: return "straight";
    case TrajectoryKind::Circle: return "circle";
    case TrajectoryKind::Sinusoid: return "sinusoid";
    case TrajectoryKind::RandomWalk: return "smooth-random-walk";
    case TrajectoryKind::StopAndGo: return "stop-and-go";
  }
  return "straight";
}

TrajectoryKind kind_from_string(const std::string& name) {
  for (auto k : {TrajectoryKind::Straight, TrajectoryKind::Circle, TrajectoryKind::Sinusoid,
                 TrajectoryKind::RandomWalk, TrajectoryKind::StopAndGo}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorKind::InvalidSpec, "unknown trajectory kind '" + name + "'");
}

void validate(const TrajectorySpec& spec) {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidSpec, what); };
  if (!(spec.duration_s > 0.0)) fail("duration must be positive");
  if (!(spec.rate_hz > 0.0)) fail("rate must be positive");
  if (spec.speed_mps < 0.0 || spec.speed_min_mps < 0.0 || spec.speed_max_mps < spec.speed_min_mps) {
    fail("speeds must be non-negative with min <= max");
  }
  if (spec.kind == TrajectoryKind::Circle && !(spec.radius_m > 0.0)) fail("radius must be positive");
  if (spec.kind == TrajectoryKind::Sinusoid && !(spec.weave_period_s > 0.0)) {
    fail("weave period must be positive");
  }
  if ((spec.kind == TrajectoryKind::RandomWalk || spec.kind == TrajectoryKind::StopAndGo) &&
      !(spec.segment_s > 0.0)) {
    fail("segment length must be positive");
  }
  if (spec.kind == TrajectoryKind::StopAndGo &&
      (!(spec.transition_s > 0.0) || spec.walk_s < 2.0 * spec.transition_s ||
       !(spec.stop_s > 0.0))) {
    fail("stop-and-go needs walk >= 2*transition and a positive stop");
  }
  if (spec.ramp_s < 0.0 || spec.step_freq_hz < 0.0 || spec.bounce_mps2 < 0.0 || spec.surge_gain < 0.0) {
    fail("ramp, step frequency, bounce and surge must be non-negative");
  }
  if (spec.duration_s * spec.rate_hz < 4.0) fail("trajectory needs at least 4 frames");
}

nlohmann::json to_json(const TrajectorySpec& s) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(s.kind);
  j["duration_s"] = s.duration_s;
  j["rate_hz"] = s.rate_hz;
  j["speed_mps"] = s.speed_mps;
  j["heading_rad"] = s.heading_rad;
  j["radius_m"] = s.radius_m;
  j["weave_amplitude_rad"] = s.weave_amplitude_rad;
  j["weave_period_s"] = s.weave_period_s;
  j["speed_min_mps"] = s.speed_min_mps;
  j["speed_max_mps"] = s.speed_max_mps;
  j["turn_rate_max_rps"] = s.turn_rate_max_rps;
  j["segment_s"] = s.segment_s;
  j["walk_s"] = s.walk_s;
  j["stop_s"] = s.stop_s;
  j["transition_s"] = s.transition_s;
  j["ramp_s"] = s.ramp_s;
  j["step_freq_hz"] = s.step_freq_hz;
  j["bounce_mps2"] = s.bounce_mps2;
  j["surge_gain"] = s.surge_gain;
  j["mounting"] = {s.mounting.w(), s.mounting.x(), s.mounting.y(), s.mounting.z()};
  return j;
}

TrajectorySpec spec_from_json(const nlohmann::json& j) {
  TrajectorySpec s;
  try {
    if (j.contains("kind")) s.kind = kind_from_string(j.at("kind").get<std::string>());
    s.duration_s = j.value("duration_s", s.duration_s);
    s.rate_hz = j.value("rate_hz", s.rate_hz);
    s.speed_mps = j.value("speed_mps", s.speed_mps);
    s.heading_rad = j.value("heading_rad", s.heading_rad);
    s.radius_m = j.value("radius_m", s.radius_m);
    s.weave_amplitude_rad = j.value("weave_amplitude_rad", s.weave_amplitude_rad);
    s.weave_period_s = j.value("weave_period_s", s.weave_period_s);
    s.speed_min_mps = j.value("speed_min_mps", s.speed_min_mps);
    s.speed_max_mps = j.value("speed_max_mps", s.speed_max_mps);
    s.turn_rate_max_rps = j.value("turn_rate_max_rps", s.turn_rate_max_rps);
    s.segment_s = j.value("segment_s", s.segment_s);
    s.walk_s = j.value("walk_s", s.walk_s);
    s.stop_s = j.value("stop_s", s.stop_s);
    s.transition_s = j.value("transition_s", s.transition_s);
    s.ramp_s = j.value("ramp_s", s.ramp_s);
    s.step_freq_hz = j.value("step_freq_hz", s.step_freq_hz);
    s.bounce_mps2 = j.value("bounce_mps2", s.bounce_mps2);
    s.surge_gain = j.value("surge_gain", s.surge_gain);
    if (j.contains("mounting")) {
      const auto& m = j.at("mounting");
      if (!m.is_array() || m.size() != 4) throw Error(ErrorKind::InvalidSpec, "mounting must be [w,x,y,z]");
      s.mounting = UnitQuaternion(m[0].get<double>(), m[1].get<double>(), m[2].get<double>(),
                                  m[3].get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidSpec, e.what());
  }
  validate(s);
  return s;
}

Trajectory gen_trajectory(const TrajectorySpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(seed);
  const Profiles prof = make_profiles(spec, rng);

  const double dt = 1.0 / spec.rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.rate_hz));

  Trajectory out;
  out.rate_hz = spec.rate_hz;
  out.t.resize(n);
  out.pos.resize(n);
  out.vel.resize(n);
  out.heading.resize(n);
  out.q_device.resize(n);

  // State (psi, x, y) integrated with RK4 substeps.
  struct State {
    double psi, x, y;
  };
  auto deriv = [&](double t, const State& s) {
    const double v = prof.speed(t);
    return State{prof.turn_rate(t), v * std::cos(s.psi), v * std::sin(s.psi)};
  };
  State st{spec.heading_rad, 0.0, 0.0};
  if (spec.kind == TrajectoryKind::Circle) {
    // Center the circle on the origin.
    st.x = spec.radius_m * std::cos(spec.heading_rad - 0.5 * kPi);
    st.y = spec.radius_m * std::sin(spec.heading_rad - 0.5 * kPi);
  }
  constexpr int kSub = 4;
  const double h = dt / kSub;

  const bool gait = spec.step_freq_hz > 0.0;
  const double omega = 2.0 * kPi * spec.step_freq_hz;

  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    if (i > 0) {
      double tt = static_cast<double>(i - 1) * dt;
      for (int k = 0; k < kSub; ++k, tt += h) {
        const State k1 = deriv(tt, st);
        const State s2{st.psi + 0.5 * h * k1.psi, st.x + 0.5 * h * k1.x, st.y + 0.5 * h * k1.y};
        const State k2 = deriv(tt + 0.5 * h, s2);
        const State s3{st.psi + 0.5 * h * k2.psi, st.x + 0.5 * h * k2.x, st.y + 0.5 * h * k2.y};
        const State k3 = deriv(tt + 0.5 * h, s3);
        const State s4{st.psi + h * k3.psi, st.x + h * k3.x, st.y + h * k3.y};
        const State k4 = deriv(tt + h, s4);
        st.psi += h / 6.0 * (k1.psi + 2 * k2.psi + 2 * k3.psi + k4.psi);
        st.x += h / 6.0 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x);
        st.y += h / 6.0 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y);
      }
    }
    const double s = prof.speed(t);
    const double c = std::cos(st.psi);
    const double sn = std::sin(st.psi);
    Vec3 p{st.x, st.y, 0.0};
    Vec3 v{s * c, s * sn, 0.0};

    if (gait) {
      const double ds = derivative(prof.speed, t);
      const double r = prof.turn_rate(t);
      // Forward surge: displacement D cos(wt) along heading, D = gain * s / w^2.
      const double d = spec.surge_gain * s / (omega * omega);
      const double dd = spec.surge_gain * ds / (omega * omega);
      const double cw = std::cos(omega * t);
      const double sw = std::sin(omega * t);
      p.x += d * cw * c;
      p.y += d * cw * sn;
      const double along = dd * cw - d * omega * sw;
      const double across = d * cw * r;
      v.x += along * c - across * sn;
      v.y += along * sn + across * c;
      // Vertical bounce with acceleration amplitude `bounce` at full gait.
      const double gate = smoothstep(s / kGaitFullSpeed);
      const double dgate = smoothstep_deriv(s / kGaitFullSpeed) / kGaitFullSpeed * ds;
      const double amp = spec.bounce_mps2 / (omega * omega);
      p.z = -amp * gate * cw;
      v.z = -amp * (dgate * cw - gate * omega * sw);
    }

    out.t[i] = t;
    out.pos[i] = p;
    out.vel[i] = v;
    out.heading[i] = geom::wrap_angle(st.psi);
    out.q_device[i] = UnitQuaternion::from_yaw(st.psi) * spec.mounting;
  }
  return out;
}

seqdata::SensorSequence imu_from_trajectory(const Trajectory& traj, const ImuNoiseModel& noise,
                                            std::uint64_t noise_seed, double gravity) {
  const std::size_t n = traj.size();
  if (n < 4) throw Error(ErrorKind::TooShort, "IMU synthesis needs at least 4 frames");
  const double dt = 1.0 / traj.rate_hz;
  const double inv_dt2 = 1.0 / (dt * dt);

  std::vector<Vec3> acc_world(n);
  const auto& p = traj.pos;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    acc_world[i] = (p[i + 1] - p[i] * 2.0 + p[i - 1]) * inv_dt2;
  }
  acc_world[0] = (p[0] * 2.0 - p[1] * 5.0 + p[2] * 4.0 - p[3]) * inv_dt2;
  acc_world[n - 1] = (p[n - 1] * 2.0 - p[n - 2] * 5.0 + p[n - 3] * 4.0 - p[n - 4]) * inv_dt2;

  Rng rng(noise_seed);
  const double drift_rate = noise.yaw_drift_deg_per_min * std::numbers::pi / 180.0 / 60.0;

  seqdata::SensorSequence seq;
  seq.t = traj.t;
  seq.gt_pos = traj.pos;
  seq.gt_heading = traj.heading;
  seq.meta.rate_hz = traj.rate_hz;
  seq.gyro.resize(n);
  seq.accel.resize(n);
  seq.q_device.resize(n);

  const auto& q = traj.q_device;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 specific = acc_world[i] + Vec3{0.0, 0.0, gravity};
    Vec3 a = geom::quat_rotate(q[i].conjugate(), specific);

    Vec3 w;
    if (i == 0) {
      w = (q[0].conjugate() * q[1]).log() / dt;
    } else if (i + 1 == n) {
      w = (q[n - 2].conjugate() * q[n - 1]).log() / dt;
    } else {
      w = (q[i - 1].conjugate() * q[i + 1]).log() / (2.0 * dt);
    }

    a += noise.accel_bias;
    w += noise.gyro_bias;
    if (noise.accel_sigma > 0.0) {
      a += Vec3{rng.normal(), rng.normal(), rng.normal()} * noise.accel_sigma;
    }
    if (noise.gyro_sigma > 0.0) {
      w += Vec3{rng.normal(), rng.normal(), rng.normal()} * noise.gyro_sigma;
    }
    seq.accel[i] = a;
    seq.gyro[i] = w;
    seq.q_device[i] =
        drift_rate != 0.0 ? UnitQuaternion::from_yaw(drift_rate * traj.t[i]) * q[i] : q[i];
  }
  return seq;
}

SubjectProfile make_subject(const std::string& id, std::uint64_t seed, bool random_mounting) {
  Rng rng(seed);
  SubjectProfile s;
  s.id = id;
  s.step_freq_hz = rng.uniform(1.4, 2.2);
  s.bounce_mps2 = rng.uniform(1.0, 3.0);
  if (random_mounting) s.mounting = random_rotation(rng);
  return s;
}

std::vector<seqdata::SensorSequence> gen_dataset(const DatasetOptions& options) {
  std::vector<seqdata::SensorSequence> out;
  const std::size_t total = options.total();
  if (total == 0) return out;
  if (options.specs.empty()) throw Error(ErrorKind::InvalidSpec, "dataset needs at least one spec");
  if (options.n_seen_subjects == 0 ||
      (options.n_test_unseen > 0 && options.n_unseen_subjects == 0)) {
    throw Error(ErrorKind::InvalidSpec, "dataset needs subjects for every split");
  }

  auto subject_name = [](std::size_t k) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "subj_%03zu", k);
    return std::string(buf);
  };
  std::vector<SubjectProfile> seen;
  std::vector<SubjectProfile> unseen;
  for (std::size_t k = 0; k < options.n_seen_subjects; ++k) {
    seen.push_back(make_subject(subject_name(k), Rng::derive(options.seed ^ 0x5EED5EEDULL, k),
                                options.random_mounting));
  }
  for (std::size_t k = 0; k < options.n_unseen_subjects; ++k) {
    const std::size_t id = options.n_seen_subjects + k;
    unseen.push_back(make_subject(subject_name(id), Rng::derive(options.seed ^ 0x5EED5EEDULL, id),
                                  options.random_mounting));
  }

  out.reserve(total);
  std::size_t index = 0;
  auto emit = [&](const std::string& split, std::size_t count, const std::vector<SubjectProfile>& pool) {
    for (std::size_t j = 0; j < count; ++j, ++index) {
      const auto& subject = pool[j % pool.size()];
      Rng rng(Rng::derive(options.seed, index));
      TrajectorySpec spec = options.specs[index % options.specs.size()];
      if (options.random_heading) spec.heading_rad = rng.uniform(-kPi, kPi);
      spec.mounting = subject.mounting;
      if (spec.step_freq_hz > 0.0) {
        spec.step_freq_hz = subject.step_freq_hz;
        spec.bounce_mps2 = subject.bounce_mps2;
      }
      const auto traj = gen_trajectory(spec, rng.next());
      auto seq = imu_from_trajectory(traj, options.noise, rng.next());
      char name[32];
      std::snprintf(name, sizeof(name), "seq_%04zu", index);
      seq.name = name;
      seq.meta.subject = subject.id;
      seq.meta.device = "synthetic";
      seq.meta.split = split;
      out.push_back(std::move(seq));
    }
  };
  emit("train", options.n_train, seen);
  emit("val", options.n_val, seen);
  emit("test_seen", options.n_test_seen, seen);
  emit("test_unseen", options.n_test_unseen, unseen);
  return out;
}

std::vector<seqdata::SensorSequence> gen_dataset(std::size_t n_sequences,
                                                 const std::vector<TrajectorySpec>& specs,
                                                 std::uint64_t seed) {
  DatasetOptions o;
  o.specs = specs;
  o.seed = seed;
  o.n_val = n_sequences / 10;
  o.n_test_seen = n_sequences / 10;
  o.n_test_unseen = n_sequences / 10;
  o.n_train = n_sequences - o.n_val - o.n_test_seen - o.n_test_unseen;
  return gen_dataset(o);
}

std::vector<TrajectorySpec> default_walking_specs() {
  TrajectorySpec walk;
  walk.kind = TrajectoryKind::RandomWalk;
  walk.duration_s = 60.0;
  walk.ramp_s = 2.0;
  walk.step_freq_hz = 1.8;
  walk.bounce_mps2 = 2.0;
  walk.surge_gain = 2.0;

  TrajectorySpec weave = walk;
  weave.kind = TrajectoryKind::Sinusoid;
  weave.speed_mps = 1.1;
  weave.weave_amplitude_rad = 0.4;
  weave.weave_period_s = 20.0;

  TrajectorySpec stop = walk;
  stop.kind = TrajectoryKind::StopAndGo;

  return {walk, weave, stop};
}

}  // namespace ronin::synth
