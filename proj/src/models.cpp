#include "ronin/models.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "ronin/error.hpp"

namespace ronin::models {

using ad::Parameter;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using nlohmann::json;

namespace {

Var apply_offset(Tape& tape, const Var& x, const InputOffset& offset, std::size_t channels) {
  if (x.shape().size() != 3 || x.dim(2) != channels) {
    throw Error(ErrorKind::ShapeMismatch, "model input: shape " + ad::shape_string(x.shape()) +
                                              ", expected (B, T, " + std::to_string(channels) + ")");
  }
  bool any = false;
  for (double v : offset) any = any || v != 0.0;
  if (!any || channels != offset.size()) return x;
  Tensor c = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] = offset[i % channels];
  return ad::sub(x, tape.constant(std::move(c)));
}

void bn_params(ad::ParameterStore& ps, const std::string& name, std::size_t channels) {
  auto& g = ps.add(name + ".gamma", {channels});
  std::fill(g.value.data.begin(), g.value.data.end(), 1.0);
  ps.add(name + ".beta", {channels});
  ps.add(name + ".running_mean", {channels}, false);
  auto& rv = ps.add(name + ".running_var", {channels}, false);
  std::fill(rv.value.data.begin(), rv.value.data.end(), 1.0);
}

Rng& require_rng(const ForwardMode& mode) {
  if (!mode.rng) throw Error(ErrorKind::InvalidArgument, "train-mode forward needs an rng for dropout");
  return *mode.rng;
}

json offset_json(const InputOffset& o) { return json(std::vector<double>(o.begin(), o.end())); }

InputOffset offset_from(const json& j, const InputOffset& fallback) {
  if (!j.is_array()) return fallback;
  if (j.size() != 6) throw Error(ErrorKind::InvalidSpec, "input_offset must have six entries");
  InputOffset o{};
  for (std::size_t i = 0; i < 6; ++i) o[i] = j[i].get<double>();
  return o;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

}  // namespace

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::ResNet: return "resnet";
    case Arch::Lstm: return "lstm";
    case Arch::Tcn: return "tcn";
    case Arch::Heading: return "heading";
  }
  return "unknown";
}

Arch arch_from_string(const std::string& name) {
  if (name == "resnet") return Arch::ResNet;
  if (name == "lstm") return Arch::Lstm;
  if (name == "tcn") return Arch::Tcn;
  if (name == "heading") return Arch::Heading;
  throw Error(ErrorKind::InvalidSpec, "unknown architecture '" + name + "'");
}

LstmConfig heading_config() {
  LstmConfig c;
  c.output_scale = 1.0;
  return c;
}

std::size_t receptive_field(const TcnConfig& c) {
  std::size_t rf = 1;
  for (std::size_t d : c.dilations) rf += 2 * (c.kernel - 1) * d;
  return rf;
}

// ---- config JSON ------------------------------------------------------------

json to_json(const ResNetConfig& c) {
  return {{"input_channels", c.input_channels}, {"window", c.window},
          {"base_channels", c.base_channels},   {"blocks", c.blocks},
          {"fc_units", c.fc_units},             {"output_dim", c.output_dim},
          {"keep_prob", c.keep_prob},           {"input_offset", offset_json(c.input_offset)}};
}

json to_json(const LstmConfig& c) {
  return {{"input_channels", c.input_channels}, {"bilinear_features", c.bilinear_features},
          {"hidden", c.hidden},                 {"layers", c.layers},
          {"output_dim", c.output_dim},         {"keep_prob", c.keep_prob},
          {"output_scale", c.output_scale},     {"input_offset", offset_json(c.input_offset)}};
}

json to_json(const TcnConfig& c) {
  return {{"input_channels", c.input_channels}, {"channels", c.channels},
          {"kernel", c.kernel},                 {"dilations", c.dilations},
          {"output_dim", c.output_dim},         {"keep_prob", c.keep_prob},
          {"output_scale", c.output_scale},     {"input_offset", offset_json(c.input_offset)}};
}

ResNetConfig resnet_config_from_json(const json& j) {
  ResNetConfig c;
  c.input_channels = get_or(j, "input_channels", c.input_channels);
  c.window = get_or(j, "window", c.window);
  c.base_channels = get_or(j, "base_channels", c.base_channels);
  c.blocks = get_or(j, "blocks", c.blocks);
  c.fc_units = get_or(j, "fc_units", c.fc_units);
  c.output_dim = get_or(j, "output_dim", c.output_dim);
  c.keep_prob = get_or(j, "keep_prob", c.keep_prob);
  c.input_offset = offset_from(j.value("input_offset", json()), c.input_offset);
  if (c.blocks.empty() || c.base_channels == 0 || c.output_dim == 0) {
    throw Error(ErrorKind::InvalidSpec, "resnet config needs blocks, channels and outputs");
  }
  return c;
}

LstmConfig lstm_config_from_json(const json& j) {
  LstmConfig c;
  c.input_channels = get_or(j, "input_channels", c.input_channels);
  c.bilinear_features = get_or(j, "bilinear_features", c.bilinear_features);
  c.hidden = get_or(j, "hidden", c.hidden);
  c.layers = get_or(j, "layers", c.layers);
  c.output_dim = get_or(j, "output_dim", c.output_dim);
  c.keep_prob = get_or(j, "keep_prob", c.keep_prob);
  c.output_scale = get_or(j, "output_scale", c.output_scale);
  c.input_offset = offset_from(j.value("input_offset", json()), c.input_offset);
  if (c.hidden == 0 || c.layers == 0 || c.output_dim == 0) {
    throw Error(ErrorKind::InvalidSpec, "lstm config needs hidden units, layers and outputs");
  }
  return c;
}

TcnConfig tcn_config_from_json(const json& j) {
  TcnConfig c;
  c.input_channels = get_or(j, "input_channels", c.input_channels);
  c.channels = get_or(j, "channels", c.channels);
  c.kernel = get_or(j, "kernel", c.kernel);
  c.dilations = get_or(j, "dilations", c.dilations);
  c.output_dim = get_or(j, "output_dim", c.output_dim);
  c.keep_prob = get_or(j, "keep_prob", c.keep_prob);
  c.output_scale = get_or(j, "output_scale", c.output_scale);
  c.input_offset = offset_from(j.value("input_offset", json()), c.input_offset);
  if (c.channels.empty() || c.channels.size() != c.dilations.size() || c.kernel == 0) {
    throw Error(ErrorKind::InvalidSpec, "tcn config needs one dilation per block");
  }
  return c;
}

// ---- ResNet -----------------------------------------------------------------

ResNet1D::ResNet1D(const ResNetConfig& config, std::uint64_t seed) : config_(config) {
  Rng rng(seed);
  auto conv = [&](const std::string& name, std::size_t cout, std::size_t k, std::size_t cin) {
    auto& w = params_.add(name + ".conv.weight", {cout, k, cin});
    ad::kaiming_uniform(w, k * cin, rng);
    bn_params(params_, name + ".bn", cout);
  };

  const std::size_t base = config_.base_channels;
  conv("stem", base, 7, config_.input_channels);
  std::size_t cin = base;
  for (std::size_t s = 0; s < config_.blocks.size(); ++s) {
    const std::size_t cout = base << s;
    for (std::size_t b = 0; b < config_.blocks[s]; ++b) {
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      const std::string prefix = "layer" + std::to_string(s + 1) + "." + std::to_string(b);
      conv(prefix + ".c1", cout, 3, cin);
      conv(prefix + ".c2", cout, 3, cout);
      const bool down = stride != 1 || cin != cout;
      if (down) conv(prefix + ".down", cout, 1, cin);
      blocks_.push_back({prefix, stride, down});
      cin = cout;
    }
  }
  auto& fw = params_.add("fc.weight", {config_.fc_units, cin});
  ad::kaiming_uniform(fw, cin, rng);
  params_.add("fc.bias", {config_.fc_units});
  auto& hw = params_.add("head.weight", {config_.output_dim, config_.fc_units});
  ad::kaiming_uniform(hw, config_.fc_units, rng);
  params_.add("head.bias", {config_.output_dim});
}

json ResNet1D::config_json() const { return {{"arch", "resnet"}, {"config", to_json(config_)}}; }

Var ResNet1D::conv_bn(Tape& tape, const Var& x, const std::string& name, std::size_t stride,
                      std::size_t pad, bool train) {
  ad::Conv1dOptions o;
  o.stride = stride;
  o.pad_left = pad;
  o.pad_right = pad;
  Var y = ad::conv1d(x, tape.param(params_.at(name + ".conv.weight")), {}, o);
  ad::BatchNormOptions bo;
  bo.train = train;
  return ad::batchnorm1d(y, tape.param(params_.at(name + ".bn.gamma")),
                         tape.param(params_.at(name + ".bn.beta")),
                         params_.at(name + ".bn.running_mean"), params_.at(name + ".bn.running_var"), bo);
}

Var ResNet1D::forward(Tape& tape, const Var& x, const ForwardMode& mode) {
  Var h = apply_offset(tape, x, config_.input_offset, config_.input_channels);
  h = ad::relu(conv_bn(tape, h, "stem", 2, 3, mode.train));
  h = ad::maxpool1d(h, 3, 2, 1);
  for (const auto& b : blocks_) {
    Var y = ad::relu(conv_bn(tape, h, b.prefix + ".c1", b.stride, 1, mode.train));
    y = conv_bn(tape, y, b.prefix + ".c2", 1, 1, mode.train);
    Var shortcut = b.downsample ? conv_bn(tape, h, b.prefix + ".down", b.stride, 0, mode.train) : h;
    h = ad::relu(ad::add(y, shortcut));
  }
  h = ad::mean_axis(h, 1);
  h = ad::relu(ad::linear(h, tape.param(params_.at("fc.weight")), tape.param(params_.at("fc.bias"))));
  if (mode.train) h = ad::dropout(h, config_.keep_prob, true, require_rng(mode));
  return ad::linear(h, tape.param(params_.at("head.weight")), tape.param(params_.at("head.bias")));
}

// ---- LSTM -------------------------------------------------------------------

LstmNet::LstmNet(const LstmConfig& config, std::uint64_t seed, Arch tag) : config_(config), tag_(tag) {
  Rng rng(seed);
  const std::size_t I = config_.input_channels;
  const std::size_t H = config_.hidden;
  std::size_t in = I;
  if (config_.bilinear_features > 0) {
    auto& w = params_.add("bilinear.weight", {config_.bilinear_features, I, I});
    ad::kaiming_uniform(w, I * I, rng);
    params_.add("bilinear.bias", {config_.bilinear_features});
    in += config_.bilinear_features;
  }
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "lstm" + std::to_string(l);
    auto& wih = params_.add(p + ".w_ih", {4 * H, in});
    ad::kaiming_uniform(wih, in, rng);
    auto& whh = params_.add(p + ".w_hh", {4 * H, H});
    ad::orthogonal_blocks(whh, H, rng);
    auto& b = params_.add(p + ".bias", {4 * H});
    for (std::size_t j = H; j < 2 * H; ++j) b.value.data[j] = 1.0;
    in = H;
  }
  auto& hw = params_.add("head.weight", {config_.output_dim, H});
  ad::kaiming_uniform(hw, H, rng);
  params_.add("head.bias", {config_.output_dim});
}

json LstmNet::config_json() const { return {{"arch", to_string(tag_)}, {"config", to_json(config_)}}; }

Var LstmNet::forward(Tape& tape, const Var& x, const ForwardMode& mode) {
  return forward(tape, x, mode, nullptr);
}

Var LstmNet::forward(Tape& tape, const Var& x, const ForwardMode& mode, RecurrentState* state) {
  Var seq = apply_offset(tape, x, config_.input_offset, config_.input_channels);
  const std::size_t B = x.dim(0);
  const std::size_t T = x.dim(1);
  const std::size_t H = config_.hidden;
  if (T == 0) throw Error(ErrorKind::ShapeMismatch, "lstm input has no frames");
  if (config_.bilinear_features > 0) {
    Var bil = ad::bilinear(seq, seq, tape.param(params_.at("bilinear.weight")),
                           tape.param(params_.at("bilinear.bias")));
    seq = ad::concat({bil, seq}, 2);
  }
  const bool carry = state != nullptr && !state->empty();
  if (carry && (state->h.size() != config_.layers || state->h[0].shape != Shape{B, H})) {
    throw Error(ErrorKind::ShapeMismatch, "recurrent state does not match the batch or layout");
  }
  RecurrentState final_state;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "lstm" + std::to_string(l);
    Var wih = tape.param(params_.at(p + ".w_ih"));
    Var whh = tape.param(params_.at(p + ".w_hh"));
    Var bias = tape.param(params_.at(p + ".bias"));
    ad::LstmState st{tape.constant(carry ? state->h[l] : Tensor::zeros({B, H})),
                     tape.constant(carry ? state->c[l] : Tensor::zeros({B, H}))};
    const std::size_t in = seq.dim(2);
    std::vector<Var> outs;
    outs.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      Var xt = ad::reshape(ad::slice(seq, 1, t, t + 1), {B, in});
      st = ad::lstm_cell(xt, st, wih, whh, bias);
      outs.push_back(ad::reshape(st.h, {B, 1, H}));
    }
    final_state.h.push_back(st.h.value());
    final_state.c.push_back(st.c.value());
    seq = ad::concat(outs, 1);
  }
  if (state) *state = std::move(final_state);
  if (mode.train) seq = ad::dropout(seq, config_.keep_prob, true, require_rng(mode));
  Var out = ad::linear(seq, tape.param(params_.at("head.weight")), tape.param(params_.at("head.bias")));
  return config_.output_scale == 1.0 ? out : ad::scale(out, config_.output_scale);
}

// ---- TCN --------------------------------------------------------------------

TcnNet::TcnNet(const TcnConfig& config, std::uint64_t seed) : config_(config) {
  if (config_.channels.size() != config_.dilations.size()) {
    throw Error(ErrorKind::InvalidSpec, "tcn config needs one dilation per block");
  }
  Rng rng(seed);
  const std::size_t k = config_.kernel;
  std::size_t cin = config_.input_channels;
  for (std::size_t i = 0; i < config_.channels.size(); ++i) {
    const std::size_t c = config_.channels[i];
    const std::string p = "block" + std::to_string(i);
    ad::kaiming_uniform(params_.add(p + ".conv1.weight", {c, k, cin}), k * cin, rng);
    params_.add(p + ".conv1.bias", {c});
    ad::kaiming_uniform(params_.add(p + ".conv2.weight", {c, k, c}), k * c, rng);
    params_.add(p + ".conv2.bias", {c});
    if (cin != c) {
      ad::kaiming_uniform(params_.add(p + ".down.weight", {c, 1, cin}), cin, rng);
      params_.add(p + ".down.bias", {c});
    }
    cin = c;
  }
  ad::kaiming_uniform(params_.add("head.weight", {config_.output_dim, cin}), cin, rng);
  params_.add("head.bias", {config_.output_dim});
}

json TcnNet::config_json() const { return {{"arch", "tcn"}, {"config", to_json(config_)}}; }

Var TcnNet::forward(Tape& tape, const Var& x, const ForwardMode& mode) {
  Var h = apply_offset(tape, x, config_.input_offset, config_.input_channels);
  for (std::size_t i = 0; i < config_.channels.size(); ++i) {
    const std::string p = "block" + std::to_string(i);
    const std::size_t d = config_.dilations[i];
    Var y = ad::relu(ad::causal_conv1d(h, tape.param(params_.at(p + ".conv1.weight")),
                                       tape.param(params_.at(p + ".conv1.bias")), d));
    y = ad::relu(ad::causal_conv1d(y, tape.param(params_.at(p + ".conv2.weight")),
                                   tape.param(params_.at(p + ".conv2.bias")), d));
    Var r = h;
    if (params_.find(p + ".down.weight")) {
      r = ad::conv1d(h, tape.param(params_.at(p + ".down.weight")),
                     tape.param(params_.at(p + ".down.bias")), {});
    }
    h = ad::relu(ad::add(y, r));
  }
  if (mode.train) h = ad::dropout(h, config_.keep_prob, true, require_rng(mode));
  Var out = ad::linear(h, tape.param(params_.at("head.weight")), tape.param(params_.at("head.bias")));
  return config_.output_scale == 1.0 ? out : ad::scale(out, config_.output_scale);
}

// ---- factory ----------------------------------------------------------------

std::unique_ptr<Model> make_model(const json& spec, std::uint64_t seed) {
  if (!spec.is_object() || !spec.contains("arch")) {
    throw Error(ErrorKind::InvalidSpec, "model spec needs an 'arch' field");
  }
  const Arch arch = arch_from_string(spec.at("arch").get<std::string>());
  const json cfg = spec.value("config", json::object());
  switch (arch) {
    case Arch::ResNet: return std::make_unique<ResNet1D>(resnet_config_from_json(cfg), seed);
    case Arch::Lstm: return std::make_unique<LstmNet>(lstm_config_from_json(cfg), seed, Arch::Lstm);
    case Arch::Heading: {
      json merged = to_json(heading_config());
      merged.update(cfg);
      return std::make_unique<LstmNet>(lstm_config_from_json(merged), seed, Arch::Heading);
    }
    case Arch::Tcn: return std::make_unique<TcnNet>(tcn_config_from_json(cfg), seed);
  }
  throw Error(ErrorKind::InvalidSpec, "unknown architecture");
}

void zero_head(Model& model) {
  for (Parameter* p : model.params().all()) {
    if (p->name.rfind("head.", 0) == 0) std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
  }
}

// ---- checkpoints ------------------------------------------------------------

namespace {

constexpr char kMagic[5] = {'R', 'N', 'I', 'N', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

double get_f64(const char* p) { return std::bit_cast<double>(get_u64(p)); }

struct RawCheckpoint {
  json header;
  std::string blob;
};

RawCheckpoint read_raw(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::VersionMismatch, "not a checkpoint file (bad magic or truncated)");
  }
  const std::uint64_t hlen = get_u64(bytes.data() + sizeof(kMagic));
  const std::size_t hstart = sizeof(kMagic) + 8;
  if (hlen > bytes.size() - hstart) throw Error(ErrorKind::VersionMismatch, "checkpoint header truncated");
  RawCheckpoint raw;
  try {
    raw.header = json::parse(bytes.substr(hstart, hlen));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::VersionMismatch, std::string("unreadable checkpoint header: ") + e.what());
  }
  const int version = raw.header.value("format_version", -1);
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::VersionMismatch, "checkpoint format " + std::to_string(version) +
                                                ", expected " + std::to_string(kCheckpointVersion));
  }
  raw.blob = bytes.substr(hstart + hlen);
  return raw;
}

void fill_params(Model& model, const RawCheckpoint& raw) {
  std::map<std::string, const json*> table;
  for (const auto& t : raw.header.at("tensors")) table[t.at("name").get<std::string>()] = &t;
  for (Parameter* p : model.params().all()) {
    auto it = table.find(p->name);
    if (it == table.end()) throw Error(ErrorKind::MissingParameter, p->name);
    const auto shape = it->second->at("shape").get<Shape>();
    if (shape != p->value.shape) {
      throw Error(ErrorKind::ShapeMismatch, p->name + ": stored " + ad::shape_string(shape) +
                                                ", model " + ad::shape_string(p->value.shape));
    }
    const auto offset = it->second->at("offset").get<std::uint64_t>();
    const std::size_t bytes = p->value.numel() * 8;
    if (offset > raw.blob.size() || bytes > raw.blob.size() - offset) {
      throw Error(ErrorKind::MissingParameter, p->name + " (data truncated)");
    }
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      p->value.data[i] = get_f64(raw.blob.data() + offset + 8 * i);
    }
  }
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path, const json& meta) {
  json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = model.config_json();
  header["tensors"] = json::array();
  std::string blob;
  for (const Parameter* p : model.params().all()) {
    header["tensors"].push_back({{"name", p->name}, {"shape", p->value.shape}, {"offset", blob.size()}});
    for (double d : p->value.data) put_f64(blob, d);
  }
  header["meta"] = meta;
  const std::string h = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, h.size());
  out += h;
  out += blob;

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::Io, "cannot write " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error(ErrorKind::Io, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_raw(path);
  Checkpoint ck;
  ck.model = make_model(raw.header.at("config"), 0);
  fill_params(*ck.model, raw);
  ck.meta = raw.header.value("meta", json::object());
  return ck;
}

json load_into(Model& model, const std::filesystem::path& path) {
  const RawCheckpoint raw = read_raw(path);
  fill_params(model, raw);
  return raw.header.value("meta", json::object());
}

}  // namespace ronin::models
