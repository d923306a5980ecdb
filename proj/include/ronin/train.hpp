#pragma once

// Losses, batch assembly, the training loop, and sequence-level inference.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ronin/autodiff.hpp"
#include "ronin/metrics.hpp"
#include "ronin/models.hpp"
#include "ronin/seqdata.hpp"

namespace ronin::train {

using geom::Vec2;
using seqdata::SampleWindow;
using seqdata::SensorSequence;

// Supervision variants. Standard picks the usual loss for the architecture:
// strided MSE for ResNet, latent L2 for LSTM/TCN, sin/cos MSE for heading.
enum class Mode {
  Standard,
  LocalFrame,     // device-frame inputs, 3D device-frame latents rotated to HACF
  DenseVelocity,  // ResNet supervised by smoothed instantaneous velocity
  Direct,         // LSTM/TCN latents supervised per frame by smoothed velocity
};

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& name);

enum class LossKind { Strided, Dense, Latent, LatentLocal, Direct, Heading };

struct TrainConfig {
  models::Arch arch = models::Arch::Tcn;
  Mode mode = Mode::Standard;
  std::size_t batch_size = 72;
  double lr = 3e-4;
  double plateau_factor = 0.75;
  int patience = 10;
  double keep_prob = 0.8;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 0;

  std::size_t window = 400;         // frames per training sample
  std::size_t latent_window = 253;  // trailing frames summed by the latent loss
  std::size_t gap_min = 50;         // sequence samplers: start spacing
  std::size_t gap_max = 150;
  std::size_t resnet_step = 10;
  std::size_t stride = 200;  // strided target span
  double sigma_frames = 30.0;
  double lambda_norm = 1.0;
  double heading_min_speed = 0.1;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  bool augment_yaw = true;

  // Optional fixed decay on top of the plateau rule: lr *= step_factor every
  // step_epochs epochs. step_epochs = 0 disables it.
  std::size_t step_epochs = 0;
  double step_factor = 1.0;

  std::size_t max_samples_per_epoch = 0;  // 0 uses every sampled window
  std::size_t val_max_samples = 0;        // 0 uses every validation window
  bool verbose = false;
};

// Reference hyperparameters for each architecture.
TrainConfig default_config(models::Arch arch);
nlohmann::json to_json(const TrainConfig& c);
// Missing keys fall back to default_config of the given (or stored) arch.
TrainConfig config_from_json(const nlohmann::json& j, std::optional<models::Arch> arch = std::nullopt);

LossKind loss_kind(const TrainConfig& c);
bool local_frame(const TrainConfig& c);

// ---- losses -----------------------------------------------------------------

// Mean squared error between (B, 2) predictions and targets.
ad::Var strided_velocity_loss(const ad::Var& pred, const ad::Var& target);
// Target P_i - P_{i - stride} rotated by `yaw` into the sample's frame.
Vec2 strided_target_hacf(const SensorSequence& seq, std::size_t i, double yaw, std::size_t stride = 200);
// Single-sample convenience: loss of a (1, 2) prediction at frame i.
ad::Var strided_velocity_loss(const ad::Var& pred, const SensorSequence& seq, std::size_t i,
                              double yaw = 0.0, std::size_t stride = 200);

// Mean over the batch of || sum_t latent[b, t] - delta[b] ||; latent (B, W, 2),
// delta (B, 2).
ad::Var latent_velocity_loss(const ad::Var& latent, const ad::Var& delta);

// pred (B, T, 2) as (x, y) = (sin, cos); gt (B, T) radians.
ad::Var heading_loss(const ad::Var& pred, const ad::Var& gt_heading, double lambda_norm = 1.0);

// True iff the smoothed ground-truth speed at the window's first frame
// exceeds `min_speed`.
bool heading_update_mask(std::span<const Vec2> dense_velocity, std::size_t start,
                         double min_speed = 0.1);
bool heading_update_mask(const SensorSequence& seq, const SampleWindow& window,
                         double min_speed = 0.1, double sigma_frames = 30.0);

// ---- batches ----------------------------------------------------------------

// Per-sequence quantities reused across epochs.
struct SequenceCache {
  const SensorSequence* seq = nullptr;
  std::vector<double> hacf;      // n x 6 features at yaw 0
  std::vector<double> local;     // n x 6 device-frame features
  std::vector<double> rot;       // n x 6: first two rows of R(q)
  std::vector<Vec2> dense_velocity;
};

SequenceCache build_cache(const SensorSequence& seq, const TrainConfig& config);

struct Batch {
  std::size_t size = 0;
  ad::Tensor features;  // (B, T, 6)
  ad::Tensor target;    // per loss kind
  ad::Tensor rot_x;     // LatentLocal: (B, W, 3) rows mapping device -> frame x
  ad::Tensor rot_y;
  ad::Tensor row_mask;  // Latent*: (B, W, 2) zero where a row precedes frame 1
};

class BatchBuilder {
 public:
  BatchBuilder(std::span<const SensorSequence> seqs, const TrainConfig& config);

  Batch build(std::span<const SampleWindow> windows) const;
  // Windows from every sequence, with yaw drawn per window when augmenting.
  std::vector<SampleWindow> sample(Rng& rng, bool augment) const;
  bool update_allowed(const SampleWindow& w) const;
  const TrainConfig& config() const { return config_; }

 private:
  std::span<const SensorSequence> seqs_;
  TrainConfig config_;
  LossKind kind_;
  std::vector<SequenceCache> caches_;
};

// Forward pass and loss for a prepared batch.
ad::Var batch_loss(ad::Tape& tape, models::Model& model, const Batch& batch, LossKind kind,
                   const TrainConfig& config, const models::ForwardMode& mode);

// One optimizer step. Heading batches drop masked windows first; when none
// remain nothing is touched and nullopt is returned.
std::optional<double> train_step(models::Model& model, const BatchBuilder& builder,
                                 std::span<const SampleWindow> windows, double lr, Rng& rng);

// ---- training loop ----------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct FitResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

// Trains in place and leaves the best-validation parameters in the model.
// Throws EmptyDataset or DivergedLoss.
FitResult fit(models::Model& model, std::span<const SensorSequence> train_set,
              std::span<const SensorSequence> val_set, const TrainConfig& config);

std::string epoch_log_csv(std::span<const EpochLog> log);
void write_epoch_log(std::span<const EpochLog> log, const std::filesystem::path& path);

// ---- inference --------------------------------------------------------------

struct PredictOptions {
  bool local_frame = false;
  std::size_t resnet_step = 5;
  std::size_t batch_size = 64;
};

// Per-frame latent rows (n x 2) for sequence models, in the sequence's frame.
std::vector<Vec2> predict_latent(models::Model& model, const SensorSequence& seq,
                                 const PredictOptions& options = {});
// ResNet strided predictions every `resnet_step` frames, first at frame
// window - 1.
std::vector<Vec2> predict_resnet(models::Model& model, const SensorSequence& seq,
                                 const PredictOptions& options = {});
// Integrated trajectory using the model's matching rule.
metrics::Trajectory2D predict_trajectory(models::Model& model, const SensorSequence& seq,
                                         const PredictOptions& options = {});
std::vector<Vec2> predict_heading(models::Model& model, const SensorSequence& seq);

}  // namespace ronin::train
