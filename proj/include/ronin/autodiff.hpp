#pragma once

// Reverse-mode automatic differentiation over small f64 tensors.
//
// Tensors are row-major with up to three axes. Sequence tensors use the
// layout (batch, time, channel) so that per-frame feature vectors are
// contiguous; dense tensors are (rows, features). A Tape records every op in
// execution order and `backward` replays the recorded rules in exact reverse.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ronin/rng.hpp"

namespace ronin::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d);
  static Tensor zeros(Shape s);
  static Tensor filled(Shape s, double value);
  static Tensor scalar(double value);

  std::size_t numel() const { return data.size(); }
  std::size_t dim(std::size_t axis) const { return shape.at(axis); }
  std::size_t rank() const { return shape.size(); }
};

struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> grad;
  std::vector<double> m;  // Adam first moment
  std::vector<double> v;  // Adam second moment
  std::int64_t step = 0;
  bool trainable = true;  // false for buffers such as running statistics

  void zero_grad();
};

// Owns parameters with stable addresses, in registration order.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Shape shape, bool trainable = true);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> trainable();
  // Number of scalars; buffers are excluded unless requested.
  std::size_t count(bool include_buffers = false) const;
  std::size_t size() const { return params_.size(); }

  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

struct Node {
  Tensor value;
  std::vector<double> grad;  // empty until something flows into this node
  bool requires_grad = false;
  Parameter* param = nullptr;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, Node* node) : tape_(tape), node_(node) {}

  bool valid() const { return node_ != nullptr; }
  Tape* tape() const { return tape_; }
  Node* node() const { return node_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  double item() const;
  // Gradient after backward; zeros if nothing flowed here.
  std::vector<double> grad() const;
  bool requires_grad() const { return node_ != nullptr && node_->requires_grad; }

 private:
  Tape* tape_ = nullptr;
  Node* node_ = nullptr;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf that accumulates into Parameter::grad when trainable.
  Var param(Parameter& p);
  // Leaf whose gradient is read back through Var::grad.
  Var input(Tensor value, bool requires_grad = true);
  Var detach(const Var& v);

  // Records a node. `backward` receives the node and must push its gradient
  // into the inputs it captured. Ignored when no input requires grad.
  Var record(Tensor value, std::initializer_list<Var> inputs, std::function<void(Node&)> backward);
  Var record(Tensor value, const std::vector<Var>& inputs, std::function<void(Node&)> backward);

  // Seeds d(loss)/d(loss) = 1 and propagates. Node gradients are reset on each
  // call; parameter gradients accumulate.
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;
};

// ---- ops --------------------------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var abs(const Var& a);
Var relu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);

// (M, K) x (K, N).
Var matmul(const Var& a, const Var& b);
// x: (..., in), weight: (out, in), bias: (out) or invalid.
Var linear(const Var& x, const Var& weight, const Var& bias = {});

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
};

// x: (B, T, Cin), weight: (Cout, k, Cin), bias: (Cout) or invalid.
Var conv1d(const Var& x, const Var& weight, const Var& bias, const Conv1dOptions& options);
// Left padding (k - 1) * dilation, stride 1: output frame t sees inputs <= t.
Var causal_conv1d(const Var& x, const Var& weight, const Var& bias, std::size_t dilation);

// Max over time windows of (B, T, C); padded frames never win.
Var maxpool1d(const Var& x, std::size_t kernel, std::size_t stride, std::size_t pad);

struct BatchNormOptions {
  bool train = true;
  double momentum = 0.1;
  double eps = 1e-10;
};

// Normalizes each channel (last axis) over all other axes. Running stats are
// updated in train mode.
Var batchnorm1d(const Var& x, const Var& gamma, const Var& beta, Parameter& running_mean,
                Parameter& running_var, const BatchNormOptions& options);

// Identity when !train. Otherwise keeps each element with probability
// keep_p and scales survivors by 1 / keep_p.
Var dropout(const Var& x, double keep_p, bool train, Rng& rng);

// x: (..., I1), y: (..., I2) with equal leading dims; weight (O, I1, I2);
// out[o] = x^T W[o] y + b[o].
Var bilinear(const Var& x, const Var& y, const Var& weight, const Var& bias = {});

struct LstmState {
  Var h;
  Var c;
};

// Standard four-gate cell, gate order (input, forget, cell, output).
// x: (B, I), h and c: (B, H), w_ih: (4H, I), w_hh: (4H, H), bias: (4H).
LstmState lstm_cell(const Var& x, const LstmState& state, const Var& w_ih, const Var& w_hh,
                    const Var& bias);

Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(const Var& x, Shape shape);

Var sum_axis(const Var& x, std::size_t axis);
Var mean_axis(const Var& x, std::size_t axis);
// Sum over the time axis of a (B, T, C) tensor, giving (B, C).
Var sum_time(const Var& x);
Var sum(const Var& x);
Var mean(const Var& x);
// Mean of squared differences over all elements.
Var mse(const Var& a, const Var& b);
// Euclidean norm over the last axis.
Var l2norm(const Var& x);

// ---- optimization -----------------------------------------------------------

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(std::span<Parameter* const> params, double lr, const AdamOptions& options = {});
void zero_grad(std::span<Parameter* const> params);
// Scales gradients so their global norm is at most max_norm; returns the
// norm before scaling.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

class PlateauScheduler {
 public:
  PlateauScheduler(double factor, int patience) : factor_(factor), patience_(patience) {}

  // Feeds one validation loss; returns the learning rate to use next.
  double step(double lr, double val_loss);
  double best() const { return best_; }
  int bad_epochs() const { return bad_; }

 private:
  double factor_;
  int patience_;
  double best_ = 1e300;
  int bad_ = 0;
};

double plateau_lr(std::span<const double> val_history, double lr0, double factor, int patience = 10);

// Largest relative error |a - n| / max(1, |a|, |n|) between analytic and
// central-difference gradients. `loss` builds a scalar on the given tape.
// At most `max_coords` coordinates per parameter are probed (evenly spaced).
double grad_check(const std::function<Var(Tape&)>& loss, std::span<Parameter* const> params,
                  double eps = 1e-5, std::size_t max_coords = 64);

// ---- initialization ---------------------------------------------------------

void kaiming_uniform(Parameter& p, std::size_t fan_in, Rng& rng);
void uniform_init(Parameter& p, double bound, Rng& rng);
// Each (block x cols) row block is set to an orthogonal matrix.
void orthogonal_blocks(Parameter& p, std::size_t block_rows, Rng& rng);

}  // namespace ronin::ad
