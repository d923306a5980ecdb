#include "ronin/seqdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string_view>

#include "json.hpp"
#include "ronin/error.hpp"

namespace ronin::seqdata {

namespace {

constexpr std::string_view kHeader = "t,gx,gy,gz,ax,ay,az,qw,qx,qy,qz,px,py,pz,heading";
constexpr std::size_t kColumns = 15;

void append_double(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

double parse_double(std::string_view field, std::size_t row) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw Error(ErrorKind::MalformedRow, row, "cannot parse number '" + std::string(field) + "'");
  }
  return v;
}

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace

void validate(const SensorSequence& seq) {
  const std::size_t n = seq.t.size();
  if (n < 2) throw Error(ErrorKind::TooShort, "sequence needs at least 2 frames");
  if (seq.gyro.size() != n || seq.accel.size() != n || seq.q_device.size() != n ||
      seq.gt_pos.size() != n || (seq.has_heading() && seq.gt_heading.size() != n)) {
    throw Error(ErrorKind::InvalidArgument, "sequence channels have unequal lengths");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (!(seq.t[i] > seq.t[i - 1])) {
      throw Error(ErrorKind::NonMonotonicTime, i, "timestamps must strictly increase");
    }
  }
  std::vector<double> dts(n - 1);
  for (std::size_t i = 1; i < n; ++i) dts[i - 1] = seq.t[i] - seq.t[i - 1];
  std::nth_element(dts.begin(), dts.begin() + dts.size() / 2, dts.end());
  const double median = dts[dts.size() / 2];
  const double nominal = 1.0 / seq.meta.rate_hz;
  if (std::abs(median - nominal) > 0.1 * nominal) {
    throw Error(ErrorKind::InvalidArgument, "median frame interval deviates more than 10% from 1/rate");
  }
}

std::filesystem::path meta_path_for(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".meta.json");
  return p;
}

SensorSequence load_sequence(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + csv_path.string());

  SensorSequence seq;
  seq.name = csv_path.stem().string();

  std::string line;
  if (!std::getline(in, line) || trim_cr(line) != kHeader) {
    throw Error(ErrorKind::MalformedHeader, "expected header '" + std::string(kHeader) + "'");
  }

  std::size_t row = 0;
  std::size_t with_heading = 0;
  std::vector<std::string_view> fields;
  fields.reserve(kColumns);
  while (std::getline(in, line)) {
    const std::string_view view = trim_cr(line);
    if (view.empty()) continue;
    fields.clear();
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = view.find(',', pos);
      fields.push_back(view.substr(pos, comma == std::string_view::npos ? view.npos : comma - pos));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (fields.size() != kColumns) {
      throw Error(ErrorKind::MalformedRow, row, "expected 15 fields");
    }
    std::array<double, 14> v{};
    for (std::size_t c = 0; c < 14; ++c) v[c] = parse_double(fields[c], row);

    const double qn = std::sqrt(v[7] * v[7] + v[8] * v[8] + v[9] * v[9] + v[10] * v[10]);
    if (std::abs(qn - 1.0) > 1e-6) {
      throw Error(ErrorKind::NonUnitQuaternion, row, "|q| = " + std::to_string(qn));
    }
    if (row > 0 && !(v[0] > seq.t.back())) {
      throw Error(ErrorKind::NonMonotonicTime, row, "timestamps must strictly increase");
    }

    seq.t.push_back(v[0]);
    seq.gyro.push_back({v[1], v[2], v[3]});
    seq.accel.push_back({v[4], v[5], v[6]});
    seq.q_device.emplace_back(v[7], v[8], v[9], v[10]);
    seq.gt_pos.push_back({v[11], v[12], v[13]});
    if (fields[14].empty()) {
      seq.gt_heading.push_back(std::nan(""));
    } else {
      seq.gt_heading.push_back(parse_double(fields[14], row));
      ++with_heading;
    }
    ++row;
  }
  if (with_heading == 0) {
    seq.gt_heading.clear();
  } else if (with_heading != row) {
    throw Error(ErrorKind::MalformedRow, "heading column must be filled on every row or none");
  }

  const auto meta_path = meta_path_for(csv_path);
  if (std::filesystem::exists(meta_path)) {
    std::ifstream meta_in(meta_path);
    try {
      const auto j = nlohmann::json::parse(meta_in);
      seq.meta.subject = j.value("subject", "");
      seq.meta.device = j.value("device", "");
      seq.meta.split = j.value("split", "");
      seq.meta.rate_hz = j.value("rate_hz", kNominalRateHz);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedHeader, "bad meta sidecar: " + std::string(e.what()));
    }
  }
  validate(seq);
  return seq;
}

void save_sequence(const SensorSequence& seq, const std::filesystem::path& csv_path) {
  validate(seq);
  std::string out;
  out.reserve(seq.size() * 256);
  out.append(kHeader);
  out.push_back('\n');
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto& g = seq.gyro[i];
    const auto& a = seq.accel[i];
    const auto& q = seq.q_device[i];
    const auto& p = seq.gt_pos[i];
    for (double v : {seq.t[i], g.x, g.y, g.z, a.x, a.y, a.z, q.w(), q.x(), q.y(), q.z(), p.x, p.y,
                     p.z}) {
      append_double(out, v);
      out.push_back(',');
    }
    if (seq.has_heading()) append_double(out, seq.gt_heading[i]);
    out.push_back('\n');
  }
  {
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw Error(ErrorKind::Io, "cannot write " + csv_path.string());
    f << out;
  }
  nlohmann::ordered_json meta;
  meta["subject"] = seq.meta.subject;
  meta["device"] = seq.meta.device;
  meta["split"] = seq.meta.split;
  meta["rate_hz"] = seq.meta.rate_hz;
  std::ofstream m(meta_path_for(csv_path));
  if (!m) throw Error(ErrorKind::Io, "cannot write meta sidecar for " + csv_path.string());
  m << meta.dump(2) << '\n';
}

std::vector<Vec2> dense_velocity_target(const SensorSequence& seq, double sigma_frames) {
  const std::size_t n = seq.size();
  if (n < 3) throw Error(ErrorKind::TooShort, "dense velocity needs at least 3 frames");
  if (!(sigma_frames > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma must be positive");

  // Second-order differences on (possibly non-uniform) timestamps.
  std::vector<Vec2> raw(n);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    raw[i] = (seq.gt_pos[i + 1].xy() - seq.gt_pos[i - 1].xy()) * (1.0 / (seq.t[i + 1] - seq.t[i - 1]));
  }
  {
    const double h = 0.5 * (seq.t[2] - seq.t[0]);
    raw[0] = (seq.gt_pos[0].xy() * -3.0 + seq.gt_pos[1].xy() * 4.0 - seq.gt_pos[2].xy()) *
             (1.0 / (2.0 * h));
    const double k = 0.5 * (seq.t[n - 1] - seq.t[n - 3]);
    raw[n - 1] = (seq.gt_pos[n - 1].xy() * 3.0 - seq.gt_pos[n - 2].xy() * 4.0 + seq.gt_pos[n - 3].xy()) *
                 (1.0 / (2.0 * k));
  }

  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma_frames));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
    const double x = static_cast<double>(k) / sigma_frames;
    kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * x * x);
  }

  std::vector<Vec2> out(n);
  const auto sn = static_cast<std::ptrdiff_t>(n);
  for (std::ptrdiff_t i = 0; i < sn; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - radius);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(sn - 1, i + radius);
    Vec2 acc;
    double wsum = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      const double w = kernel[static_cast<std::size_t>(j - i + radius)];
      acc += raw[static_cast<std::size_t>(j)] * w;
      wsum += w;
    }
    out[static_cast<std::size_t>(i)] = acc * (1.0 / wsum);
  }
  return out;
}

Vec2 strided_target(const SensorSequence& seq, std::size_t i, std::size_t stride) {
  if (i < stride || i >= seq.size()) {
    throw Error(ErrorKind::OutOfRange, "strided target needs stride <= i < n");
  }
  return seq.gt_pos[i].xy() - seq.gt_pos[i - stride].xy();
}

namespace {
void check_window(const SensorSequence& seq, std::size_t start, std::size_t len) {
  if (len == 0 || start + len > seq.size()) {
    throw Error(ErrorKind::OutOfRange, "window [" + std::to_string(start) + ", " +
                                           std::to_string(start + len) + ") outside sequence of " +
                                           std::to_string(seq.size()) + " frames");
  }
}
}  // namespace

std::vector<FeatureRow> window_features(const SensorSequence& seq, std::size_t start,
                                        std::size_t len, YawAngle yaw) {
  check_window(seq, start, len);
  std::vector<FeatureRow> rows(len);
  for (std::size_t k = 0; k < len; ++k) {
    const std::size_t i = start + k;
    const Vec3 g = geom::to_hacf(seq.q_device[i], yaw, seq.gyro[i]);
    const Vec3 a = geom::to_hacf(seq.q_device[i], yaw, seq.accel[i]);
    rows[k] = {g.x, g.y, g.z, a.x, a.y, a.z};
  }
  return rows;
}

std::vector<FeatureRow> local_features(const SensorSequence& seq, std::size_t start,
                                       std::size_t len) {
  check_window(seq, start, len);
  std::vector<FeatureRow> rows(len);
  for (std::size_t k = 0; k < len; ++k) {
    const auto& g = seq.gyro[start + k];
    const auto& a = seq.accel[start + k];
    rows[k] = {g.x, g.y, g.z, a.x, a.y, a.z};
  }
  return rows;
}

namespace {
YawAngle random_yaw(Rng& rng) { return YawAngle(rng.uniform(0.0, 2.0 * std::numbers::pi)); }
}  // namespace

std::vector<SampleWindow> sample_resnet(std::size_t sequence, std::size_t n_frames, Rng& rng,
                                        std::size_t length, std::size_t step) {
  std::vector<SampleWindow> out;
  if (step == 0) throw Error(ErrorKind::InvalidArgument, "sampling step must be positive");
  for (std::size_t s = 0; s + length <= n_frames; s += step) {
    out.push_back({sequence, s, length, random_yaw(rng)});
  }
  return out;
}

std::vector<SampleWindow> sample_rnn(std::size_t sequence, std::size_t n_frames, Rng& rng,
                                     std::size_t length, std::size_t gap_min, std::size_t gap_max) {
  if (gap_min == 0 || gap_max < gap_min) {
    throw Error(ErrorKind::InvalidArgument, "need 0 < gap_min <= gap_max");
  }
  std::vector<SampleWindow> out;
  std::size_t s = 0;
  while (s + length <= n_frames) {
    out.push_back({sequence, s, length, random_yaw(rng)});
    s += static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(gap_min),
                                                  static_cast<std::int64_t>(gap_max)));
  }
  return out;
}

}  // namespace ronin::seqdata
