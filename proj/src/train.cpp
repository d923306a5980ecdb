#include "ronin/train.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ronin/error.hpp"

namespace ronin::train {

using ad::Tensor;
using ad::Var;
using models::Arch;
using nlohmann::json;

namespace {

bool is_finite(double v) { return std::isfinite(v); }

void append_number(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

template <typename T>
void read_key(const json& j, const char* key, T& field) {
  auto it = j.find(key);
  if (it != j.end()) field = it->get<T>();
}

double rate_of(const SensorSequence& seq) {
  return seq.meta.rate_hz > 0.0 ? seq.meta.rate_hz : seqdata::kNominalRateHz;
}

}  // namespace

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::Standard: return "standard";
    case Mode::LocalFrame: return "local-frame";
    case Mode::DenseVelocity: return "dense-velocity";
    case Mode::Direct: return "direct";
  }
  return "unknown";
}

Mode mode_from_string(const std::string& name) {
  if (name == "standard") return Mode::Standard;
  if (name == "local-frame") return Mode::LocalFrame;
  if (name == "dense-velocity") return Mode::DenseVelocity;
  if (name == "direct") return Mode::Direct;
  throw Error(ErrorKind::InvalidSpec, "unknown training mode '" + name + "'");
}

TrainConfig default_config(Arch arch) {
  TrainConfig c;
  c.arch = arch;
  switch (arch) {
    case Arch::ResNet:
      c.batch_size = 128;
      c.lr = 1e-4;
      c.plateau_factor = 0.1;
      c.keep_prob = 0.5;
      c.max_epochs = 100;
      c.window = 200;
      break;
    case Arch::Lstm:
      c.max_epochs = 300;
      c.latent_window = 400;
      c.grad_clip = 10.0;
      break;
    case Arch::Tcn:
      c.max_epochs = 200;
      c.latent_window = 253;
      break;
    case Arch::Heading:
      c.max_epochs = 300;
      c.window = 1000;
      c.grad_clip = 10.0;
      break;
  }
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"arch", models::to_string(c.arch)},
          {"mode", to_string(c.mode)},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"plateau_factor", c.plateau_factor},
          {"patience", c.patience},
          {"keep_prob", c.keep_prob},
          {"max_epochs", c.max_epochs},
          {"seed", c.seed},
          {"window", c.window},
          {"latent_window", c.latent_window},
          {"gap_min", c.gap_min},
          {"gap_max", c.gap_max},
          {"resnet_step", c.resnet_step},
          {"stride", c.stride},
          {"sigma_frames", c.sigma_frames},
          {"lambda_norm", c.lambda_norm},
          {"heading_min_speed", c.heading_min_speed},
          {"grad_clip", c.grad_clip},
          {"augment_yaw", c.augment_yaw},
          {"step_epochs", c.step_epochs},
          {"step_factor", c.step_factor},
          {"max_samples_per_epoch", c.max_samples_per_epoch},
          {"val_max_samples", c.val_max_samples}};
}

TrainConfig config_from_json(const json& j, std::optional<Arch> arch) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidSpec, "training config must be a JSON object");
  Arch a = arch.value_or(Arch::Tcn);
  if (!arch && j.contains("arch")) a = models::arch_from_string(j.at("arch").get<std::string>());
  TrainConfig c = default_config(a);
  try {
    if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
    read_key(j, "batch_size", c.batch_size);
    read_key(j, "lr", c.lr);
    read_key(j, "plateau_factor", c.plateau_factor);
    read_key(j, "patience", c.patience);
    read_key(j, "keep_prob", c.keep_prob);
    read_key(j, "max_epochs", c.max_epochs);
    read_key(j, "seed", c.seed);
    read_key(j, "window", c.window);
    read_key(j, "latent_window", c.latent_window);
    read_key(j, "gap_min", c.gap_min);
    read_key(j, "gap_max", c.gap_max);
    read_key(j, "resnet_step", c.resnet_step);
    read_key(j, "stride", c.stride);
    read_key(j, "sigma_frames", c.sigma_frames);
    read_key(j, "lambda_norm", c.lambda_norm);
    read_key(j, "heading_min_speed", c.heading_min_speed);
    read_key(j, "grad_clip", c.grad_clip);
    read_key(j, "augment_yaw", c.augment_yaw);
    read_key(j, "step_epochs", c.step_epochs);
    read_key(j, "step_factor", c.step_factor);
    read_key(j, "max_samples_per_epoch", c.max_samples_per_epoch);
    read_key(j, "val_max_samples", c.val_max_samples);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidSpec, std::string("training config: ") + e.what());
  }
  if (!(c.lr > 0.0) || c.batch_size == 0 || c.window == 0) {
    throw Error(ErrorKind::InvalidSpec, "training config needs lr > 0, batch >= 1 and a window");
  }
  if (c.latent_window == 0 || c.latent_window > c.window) c.latent_window = c.window;
  return c;
}

LossKind loss_kind(const TrainConfig& c) {
  if (c.arch == Arch::Heading) return LossKind::Heading;
  if (c.arch == Arch::ResNet) return c.mode == Mode::DenseVelocity ? LossKind::Dense : LossKind::Strided;
  switch (c.mode) {
    case Mode::LocalFrame: return LossKind::LatentLocal;
    case Mode::Direct: return LossKind::Direct;
    default: return LossKind::Latent;
  }
}

bool local_frame(const TrainConfig& c) { return loss_kind(c) == LossKind::LatentLocal; }

// ---- losses -----------------------------------------------------------------

Var strided_velocity_loss(const Var& pred, const Var& target) { return ad::mse(pred, target); }

Vec2 strided_target_hacf(const SensorSequence& seq, std::size_t i, double yaw, std::size_t stride) {
  return geom::rotate2d(seqdata::strided_target(seq, i, stride), yaw);
}

Var strided_velocity_loss(const Var& pred, const SensorSequence& seq, std::size_t i, double yaw,
                          std::size_t stride) {
  const Vec2 t = strided_target_hacf(seq, i, yaw, stride);
  return ad::mse(pred, pred.tape()->constant(Tensor({1, 2}, {t.x, t.y})));
}

Var latent_velocity_loss(const Var& latent, const Var& delta) {
  if (latent.shape().size() != 3 || delta.shape().size() != 2 || latent.dim(0) != delta.dim(0) ||
      latent.dim(2) != delta.dim(1)) {
    throw Error(ErrorKind::ShapeMismatch, "latent loss: latent " + ad::shape_string(latent.shape()) +
                                              " vs delta " + ad::shape_string(delta.shape()));
  }
  return ad::mean(ad::l2norm(ad::sub(ad::sum_time(latent), delta)));
}

Var heading_loss(const Var& pred, const Var& gt_heading, double lambda_norm) {
  const auto& sp = pred.shape();
  const auto& sg = gt_heading.shape();
  if (sp.size() != 3 || sp[2] != 2 || sg.size() != 2 || sg[0] != sp[0] || sg[1] != sp[1]) {
    throw Error(ErrorKind::ShapeMismatch, "heading loss: pred " + ad::shape_string(sp) + " vs heading " +
                                              ad::shape_string(sg));
  }
  Tensor sc = Tensor::zeros(sp);
  const auto& th = gt_heading.value().data;
  for (std::size_t i = 0; i < th.size(); ++i) {
    sc.data[2 * i] = std::sin(th[i]);
    sc.data[2 * i + 1] = std::cos(th[i]);
  }
  Var fit_term = ad::mse(pred, pred.tape()->constant(std::move(sc)));
  if (lambda_norm == 0.0) return fit_term;
  Var sq = ad::sum_axis(ad::mul(pred, pred), 2);
  Var residual = ad::abs(ad::add_scalar(ad::neg(sq), 1.0));
  return ad::add(fit_term, ad::scale(ad::mean(residual), lambda_norm));
}

bool heading_update_mask(std::span<const Vec2> dense_velocity, std::size_t start, double min_speed) {
  if (start >= dense_velocity.size()) throw Error(ErrorKind::OutOfRange, start, "window start beyond sequence");
  return dense_velocity[start].norm() > min_speed;
}

bool heading_update_mask(const SensorSequence& seq, const SampleWindow& window, double min_speed,
                         double sigma_frames) {
  const auto v = seqdata::dense_velocity_target(seq, sigma_frames);
  return heading_update_mask(v, window.start, min_speed);
}

// ---- batches ----------------------------------------------------------------

SequenceCache build_cache(const SensorSequence& seq, const TrainConfig& config) {
  SequenceCache c;
  c.seq = &seq;
  const std::size_t n = seq.size();
  const LossKind kind = loss_kind(config);
  if (kind == LossKind::LatentLocal) {
    c.local.resize(n * 6);
    c.rot.resize(n * 6);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& g = seq.gyro[i];
      const auto& a = seq.accel[i];
      const double row[6] = {g.x, g.y, g.z, a.x, a.y, a.z};
      std::copy(row, row + 6, c.local.begin() + static_cast<std::ptrdiff_t>(i * 6));
      for (int j = 0; j < 3; ++j) {
        geom::Vec3 e;
        (j == 0 ? e.x : (j == 1 ? e.y : e.z)) = 1.0;
        const geom::Vec3 col = geom::quat_rotate(seq.q_device[i], e);
        c.rot[i * 6 + static_cast<std::size_t>(j)] = col.x;
        c.rot[i * 6 + 3 + static_cast<std::size_t>(j)] = col.y;
      }
    }
  } else {
    const auto rows = seqdata::window_features(seq, 0, n, geom::YawAngle(0.0));
    c.hacf.resize(n * 6);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(rows[i].begin(), rows[i].end(), c.hacf.begin() + static_cast<std::ptrdiff_t>(i * 6));
    }
  }
  if (kind == LossKind::Heading || kind == LossKind::Dense || kind == LossKind::Direct) {
    c.dense_velocity = seqdata::dense_velocity_target(seq, config.sigma_frames);
  }
  return c;
}

BatchBuilder::BatchBuilder(std::span<const SensorSequence> seqs, const TrainConfig& config)
    : seqs_(seqs), config_(config), kind_(loss_kind(config)) {
  if (kind_ == LossKind::Heading) {
    for (const auto& s : seqs) {
      if (!s.has_heading()) throw Error(ErrorKind::InvalidArgument, "sequence " + s.name + " has no heading");
    }
  }
  caches_.reserve(seqs.size());
  for (const auto& s : seqs) caches_.push_back(build_cache(s, config_));
}

std::vector<SampleWindow> BatchBuilder::sample(Rng& rng, bool augment) const {
  std::vector<SampleWindow> out;
  for (std::size_t k = 0; k < seqs_.size(); ++k) {
    const std::size_t n = seqs_[k].size();
    std::vector<SampleWindow> w;
    if (kind_ == LossKind::Strided || kind_ == LossKind::Dense) {
      w = seqdata::sample_resnet(k, n, rng, config_.window, config_.resnet_step);
      std::erase_if(w, [&](const SampleWindow& s) { return s.start + s.length - 1 < config_.stride; });
    } else {
      w = seqdata::sample_rnn(k, n, rng, config_.window, config_.gap_min, config_.gap_max);
    }
    for (auto& s : w) {
      if (!augment) s.yaw = geom::YawAngle(0.0);
      out.push_back(s);
    }
  }
  return out;
}

bool BatchBuilder::update_allowed(const SampleWindow& w) const {
  if (kind_ != LossKind::Heading) return true;
  return heading_update_mask(caches_.at(w.sequence).dense_velocity, w.start, config_.heading_min_speed);
}

Batch BatchBuilder::build(std::span<const SampleWindow> windows) const {
  Batch b;
  b.size = windows.size();
  if (windows.empty()) throw Error(ErrorKind::EmptyDataset, "empty batch");
  const std::size_t B = windows.size();
  const std::size_t T = windows[0].length;
  const std::size_t W = std::min(config_.latent_window, T);
  const std::size_t r0 = T - W;
  const bool local = kind_ == LossKind::LatentLocal;

  b.features = Tensor::zeros({B, T, 6});
  switch (kind_) {
    case LossKind::Strided:
    case LossKind::Dense:
    case LossKind::Latent:
    case LossKind::LatentLocal: b.target = Tensor::zeros({B, 2}); break;
    case LossKind::Direct: b.target = Tensor::zeros({B, W, 2}); break;
    case LossKind::Heading: b.target = Tensor::zeros({B, T}); break;
  }
  if (local) {
    b.rot_x = Tensor::zeros({B, W, 3});
    b.rot_y = Tensor::zeros({B, W, 3});
  }
  bool need_mask = false;

  for (std::size_t s = 0; s < B; ++s) {
    const SampleWindow& w = windows[s];
    if (w.length != T) throw Error(ErrorKind::ShapeMismatch, "batch windows differ in length");
    const SequenceCache& c = caches_.at(w.sequence);
    const SensorSequence& seq = *c.seq;
    if (w.start + T > seq.size()) throw Error(ErrorKind::OutOfRange, w.start, "window beyond sequence end");
    const double yaw = w.yaw.radians();
    const double cy = std::cos(yaw);
    const double sy = std::sin(yaw);

    double* f = b.features.data.data() + s * T * 6;
    if (local) {
      std::copy(c.local.begin() + static_cast<std::ptrdiff_t>(w.start * 6),
                c.local.begin() + static_cast<std::ptrdiff_t>((w.start + T) * 6), f);
    } else {
      for (std::size_t t = 0; t < T; ++t) {
        const double* src = c.hacf.data() + (w.start + t) * 6;
        const Vec2 g = geom::rotate2d(Vec2{src[0], src[1]}, w.yaw);
        const Vec2 a = geom::rotate2d(Vec2{src[3], src[4]}, w.yaw);
        double* dst = f + t * 6;
        dst[0] = g.x;
        dst[1] = g.y;
        dst[2] = src[2];
        dst[3] = a.x;
        dst[4] = a.y;
        dst[5] = src[5];
      }
    }

    const std::size_t last = w.start + T - 1;
    switch (kind_) {
      case LossKind::Strided: {
        const Vec2 v = strided_target_hacf(seq, last, yaw, config_.stride);
        b.target.data[2 * s] = v.x;
        b.target.data[2 * s + 1] = v.y;
        break;
      }
      case LossKind::Dense: {
        const Vec2 v = geom::rotate2d(c.dense_velocity[last], w.yaw);
        b.target.data[2 * s] = v.x;
        b.target.data[2 * s + 1] = v.y;
        break;
      }
      case LossKind::Latent:
      case LossKind::LatentLocal: {
        const std::size_t a = w.start + r0;
        if (a == 0) need_mask = true;
        const std::size_t from = a == 0 ? 0 : a - 1;
        const Vec2 d = geom::rotate2d(seq.gt_pos[last].xy() - seq.gt_pos[from].xy(), w.yaw);
        b.target.data[2 * s] = d.x;
        b.target.data[2 * s + 1] = d.y;
        if (local) {
          for (std::size_t t = 0; t < W; ++t) {
            const double* r = c.rot.data() + (a + t) * 6;
            double* rx = b.rot_x.data.data() + (s * W + t) * 3;
            double* ry = b.rot_y.data.data() + (s * W + t) * 3;
            for (int j = 0; j < 3; ++j) {
              rx[j] = cy * r[j] - sy * r[3 + j];
              ry[j] = sy * r[j] + cy * r[3 + j];
            }
          }
        }
        break;
      }
      case LossKind::Direct: {
        for (std::size_t t = 0; t < W; ++t) {
          const Vec2 v = geom::rotate2d(c.dense_velocity[w.start + r0 + t], w.yaw);
          b.target.data[(s * W + t) * 2] = v.x;
          b.target.data[(s * W + t) * 2 + 1] = v.y;
        }
        break;
      }
      case LossKind::Heading: {
        for (std::size_t t = 0; t < T; ++t) {
          b.target.data[s * T + t] = geom::wrap_angle(seq.gt_heading[w.start + t] + yaw);
        }
        break;
      }
    }
  }

  if (need_mask) {
    b.row_mask = Tensor::filled({B, W, 2}, 1.0);
    for (std::size_t s = 0; s < B; ++s) {
      if (windows[s].start + r0 == 0) {
        b.row_mask.data[s * W * 2] = 0.0;
        b.row_mask.data[s * W * 2 + 1] = 0.0;
      }
    }
  }
  return b;
}

Var batch_loss(ad::Tape& tape, models::Model& model, const Batch& batch, LossKind kind,
               const TrainConfig& config, const models::ForwardMode& mode) {
  Var x = tape.constant(batch.features);
  Var out = model.forward(tape, x, mode);
  Var target = tape.constant(batch.target);
  const std::size_t B = batch.size;
  switch (kind) {
    case LossKind::Strided:
    case LossKind::Dense: return strided_velocity_loss(out, target);
    case LossKind::Heading: return heading_loss(out, target, config.lambda_norm);
    default: break;
  }
  const std::size_t T = out.dim(1);
  const std::size_t W = std::min(config.latent_window, T);
  Var lat = ad::slice(out, 1, T - W, T);
  if (kind == LossKind::LatentLocal) {
    if (lat.dim(2) != 3) {
      throw Error(ErrorKind::ShapeMismatch, "local-frame training needs a 3D model output");
    }
    Var px = ad::reshape(ad::sum_axis(ad::mul(lat, tape.constant(batch.rot_x)), 2), {B, W, 1});
    Var py = ad::reshape(ad::sum_axis(ad::mul(lat, tape.constant(batch.rot_y)), 2), {B, W, 1});
    lat = ad::concat({px, py}, 2);
  }
  if (kind == LossKind::Direct) {
    return ad::mse(ad::scale(lat, seqdata::kNominalRateHz), target);
  }
  if (!batch.row_mask.data.empty()) lat = ad::mul(lat, tape.constant(batch.row_mask));
  return latent_velocity_loss(lat, target);
}

std::optional<double> train_step(models::Model& model, const BatchBuilder& builder,
                                 std::span<const SampleWindow> windows, double lr, Rng& rng) {
  const TrainConfig& config = builder.config();
  std::vector<SampleWindow> kept;
  for (const auto& w : windows) {
    if (builder.update_allowed(w)) kept.push_back(w);
  }
  if (kept.empty()) return std::nullopt;

  const Batch batch = builder.build(kept);
  auto params = model.params().trainable();
  ad::zero_grad(params);
  ad::Tape tape;
  Var loss = batch_loss(tape, model, batch, loss_kind(config), config, {true, &rng});
  const double value = loss.item();
  if (!is_finite(value)) throw Error(ErrorKind::DivergedLoss, "training loss is not finite");
  tape.backward(loss);
  if (config.grad_clip > 0.0) ad::clip_grad_norm(params, config.grad_clip);
  ad::adam_step(params, lr);
  return value;
}

// ---- training loop ----------------------------------------------------------

namespace {

double evaluate(models::Model& model, const BatchBuilder& builder, std::span<const SampleWindow> windows) {
  const TrainConfig& config = builder.config();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < windows.size(); i += config.batch_size) {
    const auto chunk = windows.subspan(i, std::min(config.batch_size, windows.size() - i));
    const Batch batch = builder.build(chunk);
    ad::Tape tape;
    Var loss = batch_loss(tape, model, batch, loss_kind(config), config, {false, nullptr});
    total += loss.item() * static_cast<double>(chunk.size());
    count += chunk.size();
  }
  return total / static_cast<double>(count);
}

std::vector<SampleWindow> thin(std::vector<SampleWindow> w, std::size_t cap) {
  if (cap == 0 || w.size() <= cap) return w;
  std::vector<SampleWindow> out;
  out.reserve(cap);
  for (std::size_t k = 0; k < cap; ++k) out.push_back(w[k * w.size() / cap]);
  return out;
}

}  // namespace

FitResult fit(models::Model& model, std::span<const SensorSequence> train_set,
              std::span<const SensorSequence> val_set, const TrainConfig& config) {
  if (train_set.empty()) throw Error(ErrorKind::EmptyDataset, "no training sequences");
  if (val_set.empty()) throw Error(ErrorKind::EmptyDataset, "no validation sequences");
  if (config.max_epochs == 0) throw Error(ErrorKind::InvalidSpec, "max_epochs must be positive");

  const BatchBuilder train_b(train_set, config);
  const BatchBuilder val_b(val_set, config);

  Rng val_rng(Rng::derive(config.seed, 0x76616c));
  std::vector<SampleWindow> val_windows = val_b.sample(val_rng, false);
  if (loss_kind(config) == LossKind::Heading) {
    std::vector<SampleWindow> moving;
    for (const auto& w : val_windows) {
      if (val_b.update_allowed(w)) moving.push_back(w);
    }
    if (!moving.empty()) val_windows = std::move(moving);
  }
  val_windows = thin(std::move(val_windows), config.val_max_samples);
  if (val_windows.empty()) throw Error(ErrorKind::EmptyDataset, "validation sequences are shorter than one window");

  Rng rng(config.seed);
  double lr = config.lr;
  ad::PlateauScheduler scheduler(config.plateau_factor, config.patience);
  FitResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best = model.params().snapshot();

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::vector<SampleWindow> windows = train_b.sample(rng, config.augment_yaw);
    if (windows.empty()) throw Error(ErrorKind::EmptyDataset, "training sequences are shorter than one window");
    rng.shuffle(windows.begin(), windows.end());
    if (config.max_samples_per_epoch > 0 && windows.size() > config.max_samples_per_epoch) {
      windows.resize(config.max_samples_per_epoch);
    }

    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t i = 0; i < windows.size(); i += config.batch_size) {
      const auto chunk = std::span<const SampleWindow>(windows).subspan(
          i, std::min(config.batch_size, windows.size() - i));
      if (auto l = train_step(model, train_b, chunk, lr, rng)) {
        total += *l;
        ++steps;
      }
    }
    const double train_loss = steps > 0 ? total / static_cast<double>(steps) : 0.0;
    const double val_loss = evaluate(model, val_b, val_windows);
    if (!is_finite(train_loss) || !is_finite(val_loss)) {
      throw Error(ErrorKind::DivergedLoss, "loss diverged at epoch " + std::to_string(epoch));
    }
    result.log.push_back({epoch, train_loss, val_loss, lr});
    if (config.verbose) {
      std::fprintf(stderr, "epoch %zu train %.6f val %.6f lr %.3g\n", epoch, train_loss, val_loss, lr);
    }
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      best = model.params().snapshot();
    }
    lr = scheduler.step(lr, val_loss);
    if (config.step_epochs > 0 && epoch % config.step_epochs == 0) lr *= config.step_factor;
  }
  model.params().restore(best);
  return result;
}

std::string epoch_log_csv(std::span<const EpochLog> log) {
  std::string out = "epoch,train_loss,val_loss,lr\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch);
    out.push_back(',');
    append_number(out, e.train_loss);
    out.push_back(',');
    append_number(out, e.val_loss);
    out.push_back(',');
    append_number(out, e.lr);
    out.push_back('\n');
  }
  return out;
}

void write_epoch_log(std::span<const EpochLog> log, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot write " + path.string());
  f << epoch_log_csv(log);
}

// ---- inference --------------------------------------------------------------

std::vector<Vec2> predict_latent(models::Model& model, const SensorSequence& seq, const PredictOptions& o) {
  if (!model.per_frame()) throw Error(ErrorKind::InvalidArgument, "predict_latent needs a per-frame model");
  TrainConfig c;
  c.mode = o.local_frame ? Mode::LocalFrame : Mode::Standard;
  const SequenceCache cache = build_cache(seq, c);
  const std::size_t n = seq.size();
  ad::Tape tape;
  Var x = tape.constant(Tensor({1, n, 6}, o.local_frame ? cache.local : cache.hacf));
  Var out = model.forward(tape, x, {false, nullptr});
  const auto& d = out.value().data;
  const std::size_t D = out.dim(2);
  std::vector<Vec2> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (o.local_frame) {
      if (D != 3) throw Error(ErrorKind::ShapeMismatch, "local-frame prediction needs a 3D model output");
      const double* r = cache.rot.data() + i * 6;
      const double* v = d.data() + i * 3;
      rows[i] = {r[0] * v[0] + r[1] * v[1] + r[2] * v[2], r[3] * v[0] + r[4] * v[1] + r[5] * v[2]};
    } else {
      rows[i] = {d[i * D], d[i * D + 1]};
    }
  }
  return rows;
}

std::vector<Vec2> predict_resnet(models::Model& model, const SensorSequence& seq, const PredictOptions& o) {
  auto* resnet = dynamic_cast<models::ResNet1D*>(&model);
  const std::size_t window = resnet ? resnet->config().window : 200;
  const std::size_t n = seq.size();
  if (n < window) throw Error(ErrorKind::TooShort, "sequence shorter than the ResNet window");
  TrainConfig c;
  const SequenceCache cache = build_cache(seq, c);
  std::vector<std::size_t> ends;
  for (std::size_t i = window - 1; i < n; i += o.resnet_step) ends.push_back(i);
  std::vector<Vec2> preds;
  preds.reserve(ends.size());
  for (std::size_t k = 0; k < ends.size(); k += o.batch_size) {
    const std::size_t B = std::min(o.batch_size, ends.size() - k);
    Tensor x = Tensor::zeros({B, window, 6});
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t start = ends[k + b] + 1 - window;
      std::copy(cache.hacf.begin() + static_cast<std::ptrdiff_t>(start * 6),
                cache.hacf.begin() + static_cast<std::ptrdiff_t>((start + window) * 6),
                x.data.begin() + static_cast<std::ptrdiff_t>(b * window * 6));
    }
    ad::Tape tape;
    Var out = model.forward(tape, tape.constant(std::move(x)), {false, nullptr});
    for (std::size_t b = 0; b < B; ++b) preds.push_back({out.value().data[2 * b], out.value().data[2 * b + 1]});
  }
  return preds;
}

metrics::Trajectory2D predict_trajectory(models::Model& model, const SensorSequence& seq,
                                         const PredictOptions& o) {
  const double rate = rate_of(seq);
  if (model.per_frame()) {
    const auto rows = predict_latent(model, seq, o);
    return metrics::integrate_latent(std::span<const Vec2>(rows).subspan(1), seq.t.front(), rate);
  }
  auto* resnet = dynamic_cast<models::ResNet1D*>(&model);
  const std::size_t window = resnet ? resnet->config().window : 200;
  const auto preds = predict_resnet(model, seq, o);
  const double t_start = seq.t.front() + (static_cast<double>(window - 1) - static_cast<double>(o.resnet_step)) / rate;
  return metrics::integrate_resnet(preds, t_start, rate, o.resnet_step, window);
}

std::vector<Vec2> predict_heading(models::Model& model, const SensorSequence& seq) {
  if (!model.per_frame() || model.output_dim() != 2) {
    throw Error(ErrorKind::InvalidArgument, "heading prediction needs a per-frame 2D model");
  }
  const SequenceCache cache = build_cache(seq, TrainConfig{});
  const std::size_t n = seq.size();
  ad::Tape tape;
  Var out = model.forward(tape, tape.constant(Tensor({1, n, 6}, cache.hacf)), {false, nullptr});
  std::vector<Vec2> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = {out.value().data[2 * i], out.value().data[2 * i + 1]};
  return rows;
}

}  // namespace ronin::train
