#pragma once

// The velocity backbones (ResNet, LSTM, TCN), the heading network, and the
// checkpoint format.
//
// All models take HACF features shaped (B, T, 6) with columns gyro xyz then
// accel xyz. A fixed per-channel offset (gravity on accel z by default) is
// subtracted on entry. Per-frame heads multiply their output by a fixed
// `output_scale`; for velocity networks this is one frame period, so each
// latent row reads as a per-frame displacement in meters.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "ronin/autodiff.hpp"
#include "ronin/rng.hpp"

namespace ronin::models {

inline constexpr double kGravity = 9.80665;
inline constexpr int kCheckpointVersion = 1;

enum class Arch { ResNet, Lstm, Tcn, Heading };

std::string to_string(Arch arch);
Arch arch_from_string(const std::string& name);

using InputOffset = std::array<double, 6>;
inline constexpr InputOffset kGravityOffset{0.0, 0.0, 0.0, 0.0, 0.0, kGravity};

struct ResNetConfig {
  std::size_t input_channels = 6;
  std::size_t window = 200;
  std::size_t base_channels = 64;
  std::vector<std::size_t> blocks{2, 2, 2, 2};
  std::size_t fc_units = 512;
  std::size_t output_dim = 2;
  double keep_prob = 0.5;
  InputOffset input_offset = kGravityOffset;
};

struct LstmConfig {
  std::size_t input_channels = 6;
  std::size_t bilinear_features = 32;
  std::size_t hidden = 100;
  std::size_t layers = 3;
  std::size_t output_dim = 2;
  double keep_prob = 0.8;
  double output_scale = 1.0 / 200.0;
  InputOffset input_offset = kGravityOffset;
};

struct TcnConfig {
  std::size_t input_channels = 6;
  std::vector<std::size_t> channels{16, 32, 64, 128, 72, 36};
  std::size_t kernel = 3;
  std::vector<std::size_t> dilations{1, 2, 4, 8, 16, 32};
  std::size_t output_dim = 2;
  double keep_prob = 0.8;
  double output_scale = 1.0 / 200.0;
  InputOffset input_offset = kGravityOffset;
};

// Same body as the LSTM; the head emits (sin, cos) of the body heading.
LstmConfig heading_config();

std::size_t receptive_field(const TcnConfig& config);

nlohmann::json to_json(const ResNetConfig& c);
nlohmann::json to_json(const LstmConfig& c);
nlohmann::json to_json(const TcnConfig& c);
ResNetConfig resnet_config_from_json(const nlohmann::json& j);
LstmConfig lstm_config_from_json(const nlohmann::json& j);
TcnConfig tcn_config_from_json(const nlohmann::json& j);

struct ForwardMode {
  bool train = false;
  Rng* rng = nullptr;  // required for dropout in train mode
};

// Recurrent state carried across calls, one (h, c) pair per layer, each (B, H).
struct RecurrentState {
  std::vector<ad::Tensor> h;
  std::vector<ad::Tensor> c;
  bool empty() const { return h.empty(); }
};

class Model {
 public:
  virtual ~Model() = default;
  Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  virtual Arch arch() const = 0;
  // {"arch": ..., "config": {...}}
  virtual nlohmann::json config_json() const = 0;
  // ResNet: (B, T, C) -> (B, out). Others: (B, T, C) -> (B, T, out).
  virtual ad::Var forward(ad::Tape& tape, const ad::Var& x, const ForwardMode& mode) = 0;
  virtual bool per_frame() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual std::size_t input_channels() const = 0;

  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }

 protected:
  ad::ParameterStore params_;
};

class ResNet1D final : public Model {
 public:
  ResNet1D(const ResNetConfig& config, std::uint64_t seed);

  Arch arch() const override { return Arch::ResNet; }
  nlohmann::json config_json() const override;
  ad::Var forward(ad::Tape& tape, const ad::Var& x, const ForwardMode& mode) override;
  bool per_frame() const override { return false; }
  std::size_t output_dim() const override { return config_.output_dim; }
  std::size_t input_channels() const override { return config_.input_channels; }
  const ResNetConfig& config() const { return config_; }

 private:
  struct Block {
    std::string prefix;
    std::size_t stride;
    bool downsample;
  };
  ad::Var conv_bn(ad::Tape& tape, const ad::Var& x, const std::string& name, std::size_t stride,
                  std::size_t pad, bool train);

  ResNetConfig config_;
  std::vector<Block> blocks_;
};

class LstmNet final : public Model {
 public:
  LstmNet(const LstmConfig& config, std::uint64_t seed, Arch tag = Arch::Lstm);

  Arch arch() const override { return tag_; }
  nlohmann::json config_json() const override;
  ad::Var forward(ad::Tape& tape, const ad::Var& x, const ForwardMode& mode) override;
  // As forward, starting from `state` when non-empty and writing the final
  // state back when `state` is non-null.
  ad::Var forward(ad::Tape& tape, const ad::Var& x, const ForwardMode& mode, RecurrentState* state);
  bool per_frame() const override { return true; }
  std::size_t output_dim() const override { return config_.output_dim; }
  std::size_t input_channels() const override { return config_.input_channels; }
  const LstmConfig& config() const { return config_; }

 private:
  LstmConfig config_;
  Arch tag_;
};

class TcnNet final : public Model {
 public:
  TcnNet(const TcnConfig& config, std::uint64_t seed);

  Arch arch() const override { return Arch::Tcn; }
  nlohmann::json config_json() const override;
  ad::Var forward(ad::Tape& tape, const ad::Var& x, const ForwardMode& mode) override;
  bool per_frame() const override { return true; }
  std::size_t output_dim() const override { return config_.output_dim; }
  std::size_t input_channels() const override { return config_.input_channels; }
  const TcnConfig& config() const { return config_; }

 private:
  TcnConfig config_;
};

// Builds a freshly initialized model from {"arch", "config"}.
std::unique_ptr<Model> make_model(const nlohmann::json& spec, std::uint64_t seed);

// Sets every parameter whose name starts with "head." to zero.
void zero_head(Model& model);

struct Checkpoint {
  std::unique_ptr<Model> model;
  nlohmann::json meta;
};

// Binary layout: magic "RNIN1", u64 little-endian header length, JSON header
// {format_version, config, tensors: [{name, shape, offset}], meta}, then the
// raw little-endian f64 values; offsets count bytes from the end of the header.
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Loads parameter values into an existing model of matching layout.
nlohmann::json load_into(Model& model, const std::filesystem::path& path);

}  // namespace ronin::models
