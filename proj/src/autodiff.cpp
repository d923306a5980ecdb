#include "ronin/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ronin/error.hpp"

namespace ronin::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using Idx = Eigen::Index;

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw Error(ErrorKind::ShapeMismatch,
              std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b));
}

[[noreturn]] void bad_shape(const char* op, const Shape& a, const std::string& expected) {
  throw Error(ErrorKind::ShapeMismatch,
              std::string(op) + ": shape " + shape_string(a) + ", expected " + expected);
}

void same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) mismatch(op, a.shape(), b.shape());
}

Tape* tape_of(const Var& v) {
  if (!v.valid()) throw Error(ErrorKind::InvalidArgument, "op applied to an empty Var");
  return v.tape();
}

bool needs(const Var& v) { return v.valid() && v.requires_grad(); }

std::vector<double>& gbuf(const Var& v) { return v.node()->grad_buffer(); }

// Splits a shape around `axis` into (outer, len, inner) extents.
void split_axis(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& len,
                std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

// `dfdx(x, y)` receives the input and the forward output.
template <typename F, typename D>
Var map_unary(const Var& a, F f, D dfdx) {
  Tape* t = tape_of(a);
  Tensor out{a.shape(), std::vector<double>(a.value().numel())};
  const auto& x = a.value().data;
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x[i]);
  return t->record(std::move(out), {a}, [a, dfdx](Node& n) {
    auto& ga = gbuf(a);
    const auto& x = a.value().data;
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += n.grad[i] * dfdx(x[i], n.value.data[i]);
  });
}

}  // namespace

// ---- tensors and parameters -------------------------------------------------

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (data.size() != ad::numel(shape)) {
    throw Error(ErrorKind::ShapeMismatch, "tensor data length " + std::to_string(data.size()) +
                                              " does not fit shape " + shape_string(shape));
  }
}

Tensor Tensor::zeros(Shape s) { return filled(std::move(s), 0.0); }

Tensor Tensor::filled(Shape s, double value) {
  const std::size_t n = ad::numel(s);
  return Tensor(std::move(s), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

Parameter& ParameterStore::add(const std::string& name, Shape shape, bool trainable) {
  if (index_.count(name)) throw Error(ErrorKind::InvalidArgument, "duplicate parameter " + name);
  Parameter p;
  p.name = name;
  p.value = Tensor::zeros(std::move(shape));
  p.grad.assign(p.value.numel(), 0.0);
  p.m.assign(p.value.numel(), 0.0);
  p.v.assign(p.value.numel(), 0.0);
  p.trainable = trainable;
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

Parameter& ParameterStore::at(const std::string& name) {
  Parameter* p = find(name);
  if (!p) throw Error(ErrorKind::MissingParameter, name);
  return *p;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> ParameterStore::trainable() {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p.trainable) out.push_back(&p);
  }
  return out;
}

std::size_t ParameterStore::count(bool include_buffers) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable || include_buffers) n += p.value.numel();
  }
  return n;
}

std::vector<Tensor> ParameterStore::snapshot() const {
  std::vector<Tensor> out;
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

void ParameterStore::restore(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "snapshot has a different parameter count");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape != params_[i].value.shape) {
      mismatch(params_[i].name.c_str(), values[i].shape, params_[i].value.shape);
    }
    params_[i].value = values[i];
  }
}

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.numel(), 0.0);
  return grad;
}

// ---- tape -------------------------------------------------------------------

const Tensor& Var::value() const {
  if (!node_) throw Error(ErrorKind::InvalidArgument, "empty Var");
  return node_->value;
}

double Var::item() const {
  if (value().numel() != 1) {
    throw Error(ErrorKind::NonScalarLoss, "item() on shape " + shape_string(value().shape));
  }
  return value().data[0];
}

std::vector<double> Var::grad() const {
  if (!node_ || node_->grad.empty()) return std::vector<double>(value().numel(), 0.0);
  return node_->grad;
}

Var Tape::constant(Tensor value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return Var(this, &n);
}

Var Tape::param(Parameter& p) {
  Node& n = nodes_.emplace_back();
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.param = &p;
  return Var(this, &n);
}

Var Tape::input(Tensor value, bool requires_grad) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return Var(this, &n);
}

Var Tape::detach(const Var& v) { return constant(v.value()); }

Var Tape::record(Tensor value, std::initializer_list<Var> inputs,
                 std::function<void(Node&)> backward) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  for (const auto& in : inputs) {
    if (needs(in)) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return Var(this, &n);
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs,
                 std::function<void(Node&)> backward) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  for (const auto& in : inputs) {
    if (needs(in)) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return Var(this, &n);
}

void Tape::backward(const Var& loss) {
  if (loss.value().numel() != 1) {
    throw Error(ErrorKind::NonScalarLoss,
                "backward needs a scalar, got shape " + shape_string(loss.shape()));
  }
  for (auto& n : nodes_) n.grad.clear();
  if (!loss.requires_grad()) return;
  loss.node()->grad_buffer()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = *it;
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param) {
      auto& g = n.param->grad;
      if (g.size() != n.grad.size()) g.assign(n.grad.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    } else if (n.backward) {
      n.backward(n);
    }
  }
}

// ---- elementwise ------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  same_shape("add", a, b);
  Tensor out = a.value();
  const auto& y = b.value().data;
  for (std::size_t i = 0; i < y.size(); ++i) out.data[i] += y[i];
  return tape_of(a)->record(std::move(out), {a, b}, [a, b](Node& n) {
    for (const Var* v : {&a, &b}) {
      if (!needs(*v)) continue;
      auto& g = gbuf(*v);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  same_shape("sub", a, b);
  Tensor out = a.value();
  const auto& y = b.value().data;
  for (std::size_t i = 0; i < y.size(); ++i) out.data[i] -= y[i];
  return tape_of(a)->record(std::move(out), {a, b}, [a, b](Node& n) {
    if (needs(a)) {
      auto& g = gbuf(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (needs(b)) {
      auto& g = gbuf(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  same_shape("mul", a, b);
  Tensor out = a.value();
  const auto& y = b.value().data;
  for (std::size_t i = 0; i < y.size(); ++i) out.data[i] *= y[i];
  return tape_of(a)->record(std::move(out), {a, b}, [a, b](Node& n) {
    if (needs(a)) {
      auto& g = gbuf(a);
      const auto& y = b.value().data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * y[i];
    }
    if (needs(b)) {
      auto& g = gbuf(b);
      const auto& x = a.value().data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * x[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return map_unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return map_unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var abs(const Var& a) {
  return map_unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var relu(const Var& a) {
  return map_unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(const Var& a) {
  return map_unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return map_unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

// ---- dense ------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) mismatch("matmul", sa, sb);
  const Idx m = static_cast<Idx>(sa[0]);
  const Idx k = static_cast<Idx>(sa[1]);
  const Idx nn = static_cast<Idx>(sb[1]);
  Tensor out = Tensor::zeros({sa[0], sb[1]});
  MapMat(out.data.data(), m, nn).noalias() =
      CMapMat(a.value().data.data(), m, k) * CMapMat(b.value().data.data(), k, nn);
  return tape_of(a)->record(std::move(out), {a, b}, [a, b, m, k, nn](Node& n) {
    CMapMat g(n.grad.data(), m, nn);
    if (needs(a)) {
      MapMat(gbuf(a).data(), m, k).noalias() += g * CMapMat(b.value().data.data(), k, nn).transpose();
    }
    if (needs(b)) {
      MapMat(gbuf(b).data(), k, nn).noalias() += CMapMat(a.value().data.data(), m, k).transpose() * g;
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sx.empty() || sw.size() != 2 || sx.back() != sw[1]) mismatch("linear", sx, sw);
  if (bias.valid() && bias.shape() != Shape{sw[0]}) mismatch("linear bias", bias.shape(), {sw[0]});
  const Idx in = static_cast<Idx>(sw[1]);
  const Idx outf = static_cast<Idx>(sw[0]);
  const Idx rows = static_cast<Idx>(x.value().numel() / sw[1]);
  Shape so = sx;
  so.back() = sw[0];
  Tensor out = Tensor::zeros(so);
  MapMat y(out.data.data(), rows, outf);
  y.noalias() = CMapMat(x.value().data.data(), rows, in) *
                CMapMat(weight.value().data.data(), outf, in).transpose();
  if (bias.valid()) {
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data.data(), outf);
  }
  return tape_of(x)->record(std::move(out), {x, weight, bias},
                            [x, weight, bias, rows, in, outf](Node& n) {
                              CMapMat g(n.grad.data(), rows, outf);
                              if (needs(x)) {
                                MapMat(gbuf(x).data(), rows, in).noalias() +=
                                    g * CMapMat(weight.value().data.data(), outf, in);
                              }
                              if (needs(weight)) {
                                MapMat(gbuf(weight).data(), outf, in).noalias() +=
                                    g.transpose() * CMapMat(x.value().data.data(), rows, in);
                              }
                              if (needs(bias)) {
                                Eigen::Map<Eigen::RowVectorXd>(gbuf(bias).data(), outf) +=
                                    g.colwise().sum();
                              }
                            });
}

// ---- convolution and pooling ------------------------------------------------

namespace {

using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using CStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Stride-1 convolution as one GEMM per tap. The batch is laid out as a single
// padded row block of B * (T + pads) frames; output row r of the block sums
// taps at rows r + j * dilation, which never cross into the next sequence for
// the rows that are kept.
Var conv1d_stride1(const Var& x, const Var& weight, const Var& bias, const Conv1dOptions& o,
                   std::size_t tout) {
  const std::size_t B = x.dim(0), T = x.dim(1), cin = x.dim(2);
  const std::size_t cout = weight.dim(0), k = weight.dim(1), d = o.dilation;
  const std::size_t tp = T + o.pad_left + o.pad_right;
  const auto N = static_cast<Idx>(B * tp);
  const auto span_rows = static_cast<Idx>(B * tp - (k - 1) * d);
  const auto ci = static_cast<Idx>(cin);
  const auto co = static_cast<Idx>(cout);
  const auto wstride = Eigen::OuterStride<>(static_cast<Idx>(k * cin));

  auto xpad = std::make_shared<RowMat>(RowMat::Zero(N, ci));
  const auto& xd = x.value().data;
  for (std::size_t b = 0; b < B; ++b) {
    std::copy(xd.begin() + static_cast<std::ptrdiff_t>(b * T * cin),
              xd.begin() + static_cast<std::ptrdiff_t>((b + 1) * T * cin),
              xpad->data() + (b * tp + o.pad_left) * cin);
  }
  RowMat yfull = RowMat::Zero(span_rows, co);
  const double* w = weight.value().data.data();
  for (std::size_t j = 0; j < k; ++j) {
    yfull.noalias() += xpad->middleRows(static_cast<Idx>(j * d), span_rows) *
                       CStridedMap(w + j * cin, co, ci, wstride).transpose();
  }
  Tensor out = Tensor::zeros({B, tout, cout});
  for (std::size_t b = 0; b < B; ++b) {
    std::copy(yfull.data() + b * tp * cout, yfull.data() + (b * tp + tout) * cout,
              out.data.data() + b * tout * cout);
  }
  if (bias.valid()) {
    MapMat(out.data.data(), static_cast<Idx>(B * tout), co).rowwise() +=
        Eigen::Map<const Eigen::RowVectorXd>(bias.value().data.data(), co);
  }

  return tape_of(x)->record(std::move(out), {x, weight, bias},
                            [x, weight, bias, xpad, o, B, T, cin, cout, k, d, tp, tout, N, span_rows, ci, co,
                             wstride](Node& n) {
    CMapMat g(n.grad.data(), static_cast<Idx>(B * tout), co);
    if (needs(bias)) Eigen::Map<Eigen::RowVectorXd>(gbuf(bias).data(), co) += g.colwise().sum();
    if (!needs(weight) && !needs(x)) return;
    RowMat gfull = RowMat::Zero(span_rows, co);
    for (std::size_t b = 0; b < B; ++b) {
      std::copy(n.grad.data() + b * tout * cout, n.grad.data() + (b + 1) * tout * cout,
                gfull.data() + b * tp * cout);
    }
    if (needs(weight)) {
      double* gw = gbuf(weight).data();
      for (std::size_t j = 0; j < k; ++j) {
        StridedMap(gw + j * cin, co, ci, wstride).noalias() +=
            gfull.transpose() * xpad->middleRows(static_cast<Idx>(j * d), span_rows);
      }
    }
    if (needs(x)) {
      RowMat dxpad = RowMat::Zero(N, ci);
      const double* w = weight.value().data.data();
      for (std::size_t j = 0; j < k; ++j) {
        dxpad.middleRows(static_cast<Idx>(j * d), span_rows).noalias() +=
            gfull * CStridedMap(w + j * cin, co, ci, wstride);
      }
      auto& gx = gbuf(x);
      for (std::size_t b = 0; b < B; ++b) {
        const double* src = dxpad.data() + (b * tp + o.pad_left) * cin;
        double* dst = gx.data() + b * T * cin;
        for (std::size_t i = 0; i < T * cin; ++i) dst[i] += src[i];
      }
    }
  });
}

}  // namespace

Var conv1d(const Var& x, const Var& weight, const Var& bias, const Conv1dOptions& o) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sx.size() != 3 || sw.size() != 3 || sx[2] != sw[2]) mismatch("conv1d", sx, sw);
  if (bias.valid() && bias.shape() != Shape{sw[0]}) mismatch("conv1d bias", bias.shape(), {sw[0]});
  if (o.stride == 0 || o.dilation == 0) throw Error(ErrorKind::InvalidArgument, "conv1d: zero stride or dilation");
  const std::size_t B = sx[0], T = sx[1], cin = sx[2], cout = sw[0], k = sw[1];
  const std::size_t span = o.dilation * (k - 1) + 1;
  if (T + o.pad_left + o.pad_right < span) bad_shape("conv1d", sx, "a longer input than the kernel span");
  const std::size_t tout = (T + o.pad_left + o.pad_right - span) / o.stride + 1;
  if (o.stride == 1) return conv1d_stride1(x, weight, bias, o, tout);
  const std::size_t rows = B * tout;
  const std::size_t cols = k * cin;

  auto col = std::make_shared<std::vector<double>>(rows * cols, 0.0);
  const auto& xd = x.value().data;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t to = 0; to < tout; ++to) {
      double* dst = col->data() + (b * tout + to) * cols;
      for (std::size_t j = 0; j < k; ++j) {
        const auto ti = static_cast<std::ptrdiff_t>(to * o.stride + j * o.dilation) -
                        static_cast<std::ptrdiff_t>(o.pad_left);
        if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(T)) continue;
        const double* src = xd.data() + (b * T + static_cast<std::size_t>(ti)) * cin;
        std::copy(src, src + cin, dst + j * cin);
      }
    }
  }

  Tensor out = Tensor::zeros({B, tout, cout});
  MapMat y(out.data.data(), static_cast<Idx>(rows), static_cast<Idx>(cout));
  CMapMat wm(weight.value().data.data(), static_cast<Idx>(cout), static_cast<Idx>(cols));
  y.noalias() = CMapMat(col->data(), static_cast<Idx>(rows), static_cast<Idx>(cols)) * wm.transpose();
  if (bias.valid()) {
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data.data(), static_cast<Idx>(cout));
  }

  return tape_of(x)->record(
      std::move(out), {x, weight, bias}, [x, weight, bias, col, o, B, T, cin, cout, k, tout, rows, cols](Node& n) {
        CMapMat g(n.grad.data(), static_cast<Idx>(rows), static_cast<Idx>(cout));
        CMapMat cm(col->data(), static_cast<Idx>(rows), static_cast<Idx>(cols));
        if (needs(weight)) {
          MapMat(gbuf(weight).data(), static_cast<Idx>(cout), static_cast<Idx>(cols)).noalias() +=
              g.transpose() * cm;
        }
        if (needs(bias)) {
          Eigen::Map<Eigen::RowVectorXd>(gbuf(bias).data(), static_cast<Idx>(cout)) += g.colwise().sum();
        }
        if (needs(x)) {
          RowMat dcol = g * CMapMat(weight.value().data.data(), static_cast<Idx>(cout), static_cast<Idx>(cols));
          auto& gx = gbuf(x);
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t to = 0; to < tout; ++to) {
              const double* src = dcol.data() + (b * tout + to) * cols;
              for (std::size_t j = 0; j < k; ++j) {
                const auto ti = static_cast<std::ptrdiff_t>(to * o.stride + j * o.dilation) -
                                static_cast<std::ptrdiff_t>(o.pad_left);
                if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(T)) continue;
                double* dst = gx.data() + (b * T + static_cast<std::size_t>(ti)) * cin;
                for (std::size_t c = 0; c < cin; ++c) dst[c] += src[j * cin + c];
              }
            }
          }
        }
      });
}

Var causal_conv1d(const Var& x, const Var& weight, const Var& bias, std::size_t dilation) {
  if (weight.shape().size() != 3) bad_shape("causal_conv1d", weight.shape(), "(Cout, k, Cin)");
  Conv1dOptions o;
  o.dilation = dilation;
  o.pad_left = (weight.dim(1) - 1) * dilation;
  return conv1d(x, weight, bias, o);
}

Var maxpool1d(const Var& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  const Shape& sx = x.shape();
  if (sx.size() != 3) bad_shape("maxpool1d", sx, "(B, T, C)");
  const std::size_t B = sx[0], T = sx[1], C = sx[2];
  if (kernel == 0 || stride == 0 || T + 2 * pad < kernel) bad_shape("maxpool1d", sx, "T + 2 pad >= kernel");
  const std::size_t tout = (T + 2 * pad - kernel) / stride + 1;
  Tensor out = Tensor::zeros({B, tout, C});
  auto arg = std::make_shared<std::vector<std::size_t>>(out.numel());
  const auto& xd = x.value().data;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t to = 0; to < tout; ++to) {
      for (std::size_t c = 0; c < C; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t j = 0; j < kernel; ++j) {
          const auto ti = static_cast<std::ptrdiff_t>(to * stride + j) - static_cast<std::ptrdiff_t>(pad);
          if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(T)) continue;
          const std::size_t idx = (b * T + static_cast<std::size_t>(ti)) * C + c;
          if (xd[idx] > best) {
            best = xd[idx];
            best_i = idx;
          }
        }
        const std::size_t o = (b * tout + to) * C + c;
        out.data[o] = best;
        (*arg)[o] = best_i;
      }
    }
  }
  return tape_of(x)->record(std::move(out), {x}, [x, arg](Node& n) {
    auto& g = gbuf(x);
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[(*arg)[i]] += n.grad[i];
  });
}

// ---- normalization and regularization ---------------------------------------

Var batchnorm1d(const Var& x, const Var& gamma, const Var& beta, Parameter& running_mean,
                Parameter& running_var, const BatchNormOptions& o) {
  const Shape& sx = x.shape();
  if (sx.empty()) bad_shape("batchnorm1d", sx, "at least one axis");
  const std::size_t C = sx.back();
  const std::size_t N = x.value().numel() / C;
  for (const Var* v : {&gamma, &beta}) {
    if (v->shape() != Shape{C}) mismatch("batchnorm1d", sx, v->shape());
  }
  if (running_mean.value.numel() != C || running_var.value.numel() != C) {
    mismatch("batchnorm1d running stats", sx, running_mean.value.shape);
  }
  const auto& xd = x.value().data;
  const auto& gd = gamma.value().data;
  const auto& bd = beta.value().data;

  auto xhat = std::make_shared<std::vector<double>>(xd.size());
  auto inv_std = std::make_shared<std::vector<double>>(C);
  Tensor out = Tensor::zeros(sx);

  if (o.train) {
    if (N < 2) bad_shape("batchnorm1d", sx, "at least two rows per channel in train mode");
    std::vector<double> mu(C, 0.0), var(C, 0.0);
    for (std::size_t r = 0; r < N; ++r) {
      for (std::size_t c = 0; c < C; ++c) mu[c] += xd[r * C + c];
    }
    for (auto& m : mu) m /= static_cast<double>(N);
    for (std::size_t r = 0; r < N; ++r) {
      for (std::size_t c = 0; c < C; ++c) {
        const double d = xd[r * C + c] - mu[c];
        var[c] += d * d;
      }
    }
    for (std::size_t c = 0; c < C; ++c) {
      const double biased = var[c] / static_cast<double>(N);
      (*inv_std)[c] = 1.0 / std::sqrt(biased + o.eps);
      const double unbiased = var[c] / static_cast<double>(N - 1);
      running_mean.value.data[c] = (1.0 - o.momentum) * running_mean.value.data[c] + o.momentum * mu[c];
      running_var.value.data[c] = (1.0 - o.momentum) * running_var.value.data[c] + o.momentum * unbiased;
    }
    for (std::size_t r = 0; r < N; ++r) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = r * C + c;
        (*xhat)[i] = (xd[i] - mu[c]) * (*inv_std)[c];
        out.data[i] = gd[c] * (*xhat)[i] + bd[c];
      }
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) (*inv_std)[c] = 1.0 / std::sqrt(running_var.value.data[c] + o.eps);
    for (std::size_t r = 0; r < N; ++r) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = r * C + c;
        (*xhat)[i] = (xd[i] - running_mean.value.data[c]) * (*inv_std)[c];
        out.data[i] = gd[c] * (*xhat)[i] + bd[c];
      }
    }
  }

  const bool train = o.train;
  return tape_of(x)->record(std::move(out), {x, gamma, beta},
                            [x, gamma, beta, xhat, inv_std, C, N, train](Node& n) {
                              const auto& g = n.grad;
                              const auto& xh = *xhat;
                              std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
                              for (std::size_t r = 0; r < N; ++r) {
                                for (std::size_t c = 0; c < C; ++c) {
                                  sum_g[c] += g[r * C + c];
                                  sum_gx[c] += g[r * C + c] * xh[r * C + c];
                                }
                              }
                              if (needs(gamma)) {
                                auto& gg = gbuf(gamma);
                                for (std::size_t c = 0; c < C; ++c) gg[c] += sum_gx[c];
                              }
                              if (needs(beta)) {
                                auto& gb = gbuf(beta);
                                for (std::size_t c = 0; c < C; ++c) gb[c] += sum_g[c];
                              }
                              if (!needs(x)) return;
                              auto& gx = gbuf(x);
                              const auto& gd = gamma.value().data;
                              const double inv_n = 1.0 / static_cast<double>(N);
                              for (std::size_t r = 0; r < N; ++r) {
                                for (std::size_t c = 0; c < C; ++c) {
                                  const std::size_t i = r * C + c;
                                  const double k = gd[c] * (*inv_std)[c];
                                  if (train) {
                                    gx[i] += k * (g[i] - inv_n * sum_g[c] - xh[i] * inv_n * sum_gx[c]);
                                  } else {
                                    gx[i] += k * g[i];
                                  }
                                }
                              }
                            });
}

Var dropout(const Var& x, double keep_p, bool train, Rng& rng) {
  if (!(keep_p > 0.0 && keep_p <= 1.0)) throw Error(ErrorKind::InvalidArgument, "dropout keep_p must be in (0, 1]");
  if (!train || keep_p == 1.0) return x;
  auto mask = std::make_shared<std::vector<double>>(x.value().numel());
  const double s = 1.0 / keep_p;
  for (auto& m : *mask) m = rng.uniform() < keep_p ? s : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= (*mask)[i];
  return tape_of(x)->record(std::move(out), {x}, [x, mask](Node& n) {
    auto& g = gbuf(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (*mask)[i];
  });
}

// ---- bilinear and recurrent -------------------------------------------------

Var bilinear(const Var& x, const Var& y, const Var& weight, const Var& bias) {
  const Shape& sx = x.shape();
  const Shape& sy = y.shape();
  const Shape& sw = weight.shape();
  if (sx.empty() || sy.size() != sx.size() || sw.size() != 3 || sw[1] != sx.back() || sw[2] != sy.back()) {
    mismatch("bilinear", sx, sw);
  }
  for (std::size_t i = 0; i + 1 < sx.size(); ++i) {
    if (sx[i] != sy[i]) mismatch("bilinear", sx, sy);
  }
  if (bias.valid() && bias.shape() != Shape{sw[0]}) mismatch("bilinear bias", bias.shape(), {sw[0]});
  const std::size_t i1 = sw[1], i2 = sw[2], O = sw[0];
  const std::size_t N = x.value().numel() / i1;
  auto z = std::make_shared<RowMat>(static_cast<Idx>(N), static_cast<Idx>(i1 * i2));
  const auto& xd = x.value().data;
  const auto& yd = y.value().data;
  for (std::size_t r = 0; r < N; ++r) {
    for (std::size_t a = 0; a < i1; ++a) {
      for (std::size_t b = 0; b < i2; ++b) {
        (*z)(static_cast<Idx>(r), static_cast<Idx>(a * i2 + b)) = xd[r * i1 + a] * yd[r * i2 + b];
      }
    }
  }
  Shape so = sx;
  so.back() = O;
  Tensor out = Tensor::zeros(so);
  MapMat om(out.data.data(), static_cast<Idx>(N), static_cast<Idx>(O));
  CMapMat wm(weight.value().data.data(), static_cast<Idx>(O), static_cast<Idx>(i1 * i2));
  om.noalias() = (*z) * wm.transpose();
  if (bias.valid()) om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data.data(), static_cast<Idx>(O));

  return tape_of(x)->record(std::move(out), {x, y, weight, bias}, [x, y, weight, bias, z, i1, i2, O, N](Node& n) {
    CMapMat g(n.grad.data(), static_cast<Idx>(N), static_cast<Idx>(O));
    CMapMat wm(weight.value().data.data(), static_cast<Idx>(O), static_cast<Idx>(i1 * i2));
    if (needs(weight)) MapMat(gbuf(weight).data(), static_cast<Idx>(O), static_cast<Idx>(i1 * i2)).noalias() += g.transpose() * (*z);
    if (needs(bias)) Eigen::Map<Eigen::RowVectorXd>(gbuf(bias).data(), static_cast<Idx>(O)) += g.colwise().sum();
    if (!needs(x) && !needs(y)) return;
    RowMat dz = g * wm;
    const auto& xd = x.value().data;
    const auto& yd = y.value().data;
    if (needs(x)) {
      auto& gx = gbuf(x);
      for (std::size_t r = 0; r < N; ++r)
        for (std::size_t a = 0; a < i1; ++a)
          for (std::size_t b = 0; b < i2; ++b)
            gx[r * i1 + a] += dz(static_cast<Idx>(r), static_cast<Idx>(a * i2 + b)) * yd[r * i2 + b];
    }
    if (needs(y)) {
      auto& gy = gbuf(y);
      for (std::size_t r = 0; r < N; ++r)
        for (std::size_t a = 0; a < i1; ++a)
          for (std::size_t b = 0; b < i2; ++b)
            gy[r * i2 + b] += dz(static_cast<Idx>(r), static_cast<Idx>(a * i2 + b)) * xd[r * i1 + a];
    }
  });
}

LstmState lstm_cell(const Var& x, const LstmState& state, const Var& w_ih, const Var& w_hh,
                    const Var& bias) {
  const Shape& sx = x.shape();
  const Shape& sh = state.h.shape();
  if (sx.size() != 2 || sh.size() != 2 || sx[0] != sh[0]) mismatch("lstm_cell", sx, sh);
  if (state.c.shape() != sh) mismatch("lstm_cell", sh, state.c.shape());
  const std::size_t B = sx[0], I = sx[1], H = sh[1];
  if (w_ih.shape() != Shape{4 * H, I}) mismatch("lstm_cell w_ih", w_ih.shape(), {4 * H, I});
  if (w_hh.shape() != Shape{4 * H, H}) mismatch("lstm_cell w_hh", w_hh.shape(), {4 * H, H});
  if (bias.shape() != Shape{4 * H}) mismatch("lstm_cell bias", bias.shape(), {4 * H});

  // Gate activations after the nonlinearity, (B, 4H).
  auto act = std::make_shared<RowMat>(static_cast<Idx>(B), static_cast<Idx>(4 * H));
  act->noalias() = CMapMat(x.value().data.data(), static_cast<Idx>(B), static_cast<Idx>(I)) *
                   CMapMat(w_ih.value().data.data(), static_cast<Idx>(4 * H), static_cast<Idx>(I)).transpose();
  act->noalias() += CMapMat(state.h.value().data.data(), static_cast<Idx>(B), static_cast<Idx>(H)) *
                    CMapMat(w_hh.value().data.data(), static_cast<Idx>(4 * H), static_cast<Idx>(H)).transpose();
  act->rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data.data(), static_cast<Idx>(4 * H));

  const auto& cp = state.c.value().data;
  auto tc = std::make_shared<std::vector<double>>(B * H);
  Tensor out = Tensor::zeros({B, 2 * H});
  for (std::size_t b = 0; b < B; ++b) {
    double* a = act->data() + b * 4 * H;
    for (std::size_t j = 0; j < H; ++j) {
      const double i = 1.0 / (1.0 + std::exp(-a[j]));
      const double f = 1.0 / (1.0 + std::exp(-a[H + j]));
      const double g = std::tanh(a[2 * H + j]);
      const double o = 1.0 / (1.0 + std::exp(-a[3 * H + j]));
      a[j] = i;
      a[H + j] = f;
      a[2 * H + j] = g;
      a[3 * H + j] = o;
      const double c = f * cp[b * H + j] + i * g;
      const double t = std::tanh(c);
      (*tc)[b * H + j] = t;
      out.data[b * 2 * H + j] = o * t;
      out.data[b * 2 * H + H + j] = c;
    }
  }

  const Var h = state.h;
  const Var c = state.c;
  Var fused = tape_of(x)->record(std::move(out), {x, h, c, w_ih, w_hh, bias},
                                 [x, h, c, w_ih, w_hh, bias, act, tc, B, I, H](Node& n) {
    RowMat da(static_cast<Idx>(B), static_cast<Idx>(4 * H));
    std::vector<double> dc_prev(B * H);
    const auto& cp = c.value().data;
    for (std::size_t b = 0; b < B; ++b) {
      const double* a = act->data() + b * 4 * H;
      const double* g = n.grad.data() + b * 2 * H;
      for (std::size_t j = 0; j < H; ++j) {
        const double i = a[j], f = a[H + j], gg = a[2 * H + j], o = a[3 * H + j];
        const double t = (*tc)[b * H + j];
        const double dh = g[j];
        const double dc = g[H + j] + dh * o * (1.0 - t * t);
        da(static_cast<Idx>(b), static_cast<Idx>(j)) = dc * gg * i * (1.0 - i);
        da(static_cast<Idx>(b), static_cast<Idx>(H + j)) = dc * cp[b * H + j] * f * (1.0 - f);
        da(static_cast<Idx>(b), static_cast<Idx>(2 * H + j)) = dc * i * (1.0 - gg * gg);
        da(static_cast<Idx>(b), static_cast<Idx>(3 * H + j)) = dh * t * o * (1.0 - o);
        dc_prev[b * H + j] = dc * f;
      }
    }
    const Idx b4 = static_cast<Idx>(4 * H);
    if (needs(w_ih)) MapMat(gbuf(w_ih).data(), b4, static_cast<Idx>(I)).noalias() += da.transpose() * CMapMat(x.value().data.data(), static_cast<Idx>(B), static_cast<Idx>(I));
    if (needs(w_hh)) MapMat(gbuf(w_hh).data(), b4, static_cast<Idx>(H)).noalias() += da.transpose() * CMapMat(h.value().data.data(), static_cast<Idx>(B), static_cast<Idx>(H));
    if (needs(bias)) Eigen::Map<Eigen::RowVectorXd>(gbuf(bias).data(), b4) += da.colwise().sum();
    if (needs(x)) MapMat(gbuf(x).data(), static_cast<Idx>(B), static_cast<Idx>(I)).noalias() += da * CMapMat(w_ih.value().data.data(), b4, static_cast<Idx>(I));
    if (needs(h)) MapMat(gbuf(h).data(), static_cast<Idx>(B), static_cast<Idx>(H)).noalias() += da * CMapMat(w_hh.value().data.data(), b4, static_cast<Idx>(H));
    if (needs(c)) {
      auto& gc = gbuf(c);
      for (std::size_t i = 0; i < gc.size(); ++i) gc[i] += dc_prev[i];
    }
  });
  return {slice(fused, 1, 0, H), slice(fused, 1, H, 2 * H)};
}

// ---- structural -------------------------------------------------------------

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw Error(ErrorKind::InvalidArgument, "concat of nothing");
  Shape so = parts[0].shape();
  if (axis >= so.size()) bad_shape("concat", so, "axis within rank");
  so[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != so.size()) mismatch("concat", parts[0].shape(), s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != parts[0].shape()[i]) mismatch("concat", parts[0].shape(), s);
    }
    so[axis] += s[axis];
  }
  std::size_t outer, len, inner;
  split_axis(so, axis, outer, len, inner);
  Tensor out = Tensor::zeros(so);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t pl = p.shape()[axis];
    const auto& d = p.value().data;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(d.begin() + static_cast<std::ptrdiff_t>(o * pl * inner),
                d.begin() + static_cast<std::ptrdiff_t>((o + 1) * pl * inner),
                out.data.begin() + static_cast<std::ptrdiff_t>((o * len + off) * inner));
    }
    off += pl;
  }
  return tape_of(parts[0])->record(std::move(out), parts, [parts, offsets, axis, outer, len, inner](Node& n) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (!needs(parts[k])) continue;
      auto& g = gbuf(parts[k]);
      const std::size_t pl = parts[k].shape()[axis];
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = n.grad.data() + (o * len + offsets[k]) * inner;
        double* dst = g.data() + o * pl * inner;
        for (std::size_t i = 0; i < pl * inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& sx = x.shape();
  if (axis >= sx.size() || begin > end || end > sx[axis]) {
    bad_shape("slice", sx, "range [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " + std::to_string(axis));
  }
  std::size_t outer, len, inner;
  split_axis(sx, axis, outer, len, inner);
  const std::size_t w = end - begin;
  Shape so = sx;
  so[axis] = w;
  Tensor out = Tensor::zeros(so);
  const auto& d = x.value().data;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy(d.begin() + static_cast<std::ptrdiff_t>((o * len + begin) * inner),
              d.begin() + static_cast<std::ptrdiff_t>((o * len + end) * inner),
              out.data.begin() + static_cast<std::ptrdiff_t>(o * w * inner));
  }
  return tape_of(x)->record(std::move(out), {x}, [x, outer, len, inner, begin, w](Node& n) {
    auto& g = gbuf(x);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = n.grad.data() + o * w * inner;
      double* dst = g.data() + (o * len + begin) * inner;
      for (std::size_t i = 0; i < w * inner; ++i) dst[i] += src[i];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  if (numel(shape) != x.value().numel()) mismatch("reshape", x.shape(), shape);
  Tensor out(std::move(shape), x.value().data);
  return tape_of(x)->record(std::move(out), {x}, [x](Node& n) {
    auto& g = gbuf(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

// ---- reductions and losses --------------------------------------------------

Var sum_axis(const Var& x, std::size_t axis) {
  const Shape& sx = x.shape();
  if (axis >= sx.size()) bad_shape("sum_axis", sx, "axis within rank");
  std::size_t outer, len, inner;
  split_axis(sx, axis, outer, len, inner);
  Shape so = sx;
  so.erase(so.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out = Tensor::zeros(so);
  const auto& d = x.value().data;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out.data[o * inner + i] += d[(o * len + l) * inner + i];
  return tape_of(x)->record(std::move(out), {x}, [x, outer, len, inner](Node& n) {
    auto& g = gbuf(x);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t i = 0; i < inner; ++i) g[(o * len + l) * inner + i] += n.grad[o * inner + i];
  });
}

Var mean_axis(const Var& x, std::size_t axis) {
  if (axis >= x.shape().size()) bad_shape("mean_axis", x.shape(), "axis within rank");
  return scale(sum_axis(x, axis), 1.0 / static_cast<double>(x.shape()[axis]));
}

Var sum_time(const Var& x) {
  if (x.shape().size() != 3) bad_shape("sum_time", x.shape(), "(B, T, C)");
  return sum_axis(x, 1);
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data) s += v;
  return tape_of(x)->record(Tensor::scalar(s), {x}, [x](Node& n) {
    auto& g = gbuf(x);
    for (auto& v : g) v += n.grad[0];
  });
}

Var mean(const Var& x) {
  const auto count = static_cast<double>(x.value().numel());
  if (count == 0) bad_shape("mean", x.shape(), "non-empty");
  return scale(sum(x), 1.0 / count);
}

Var mse(const Var& a, const Var& b) {
  same_shape("mse", a, b);
  const auto& x = a.value().data;
  const auto& y = b.value().data;
  if (x.empty()) bad_shape("mse", a.shape(), "non-empty");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  const double inv = 1.0 / static_cast<double>(x.size());
  return tape_of(a)->record(Tensor::scalar(s * inv), {a, b}, [a, b, inv](Node& n) {
    const auto& x = a.value().data;
    const auto& y = b.value().data;
    const double k = 2.0 * inv * n.grad[0];
    if (needs(a)) {
      auto& g = gbuf(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * (x[i] - y[i]);
    }
    if (needs(b)) {
      auto& g = gbuf(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= k * (x[i] - y[i]);
    }
  });
}

Var l2norm(const Var& x) {
  const Shape& sx = x.shape();
  if (sx.empty()) bad_shape("l2norm", sx, "at least one axis");
  const std::size_t D = sx.back();
  const std::size_t N = D == 0 ? 0 : x.value().numel() / D;
  Shape so(sx.begin(), sx.end() - 1);
  Tensor out = Tensor::zeros(so);
  const auto& d = x.value().data;
  for (std::size_t r = 0; r < N; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < D; ++j) s += d[r * D + j] * d[r * D + j];
    out.data[r] = std::sqrt(s);
  }
  return tape_of(x)->record(std::move(out), {x}, [x, D, N](Node& n) {
    auto& g = gbuf(x);
    const auto& d = x.value().data;
    for (std::size_t r = 0; r < N; ++r) {
      const double norm = n.value.data[r];
      if (norm == 0.0) continue;
      const double k = n.grad[r] / norm;
      for (std::size_t j = 0; j < D; ++j) g[r * D + j] += k * d[r * D + j];
    }
  });
}

// ---- optimization -----------------------------------------------------------

void adam_step(std::span<Parameter* const> params, double lr, const AdamOptions& o) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    ++p->step;
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(p->step));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(p->step));
    auto& w = p->value.data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = p->grad[i];
      p->m[i] = o.beta1 * p->m[i] + (1.0 - o.beta1) * g;
      p->v[i] = o.beta2 * p->v[i] + (1.0 - o.beta2) * g * g;
      const double mh = p->m[i] / c1;
      const double vh = p->v[i] / c2;
      w[i] -= lr * mh / (std::sqrt(vh) + o.eps);
    }
  }
}

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    for (double g : p->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double k = max_norm / norm;
    for (Parameter* p : params) {
      if (!p->trainable) continue;
      for (auto& g : p->grad) g *= k;
    }
  }
  return norm;
}

double PlateauScheduler::step(double lr, double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    bad_ = 0;
    return lr;
  }
  if (++bad_ >= patience_) {
    bad_ = 0;
    return lr * factor_;
  }
  return lr;
}

double plateau_lr(std::span<const double> val_history, double lr0, double factor, int patience) {
  PlateauScheduler s(factor, patience);
  double lr = lr0;
  for (double v : val_history) lr = s.step(lr, v);
  return lr;
}

double grad_check(const std::function<Var(Tape&)>& loss, std::span<Parameter* const> params,
                  double eps, std::size_t max_coords) {
  zero_grad(params);
  {
    Tape t;
    Var l = loss(t);
    t.backward(l);
  }
  double worst = 0.0;
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    const std::size_t n = p->value.numel();
    const std::size_t probes = std::min(n, max_coords);
    for (std::size_t k = 0; k < probes; ++k) {
      const std::size_t i = probes == n ? k : k * n / probes;
      const double orig = p->value.data[i];
      p->value.data[i] = orig + eps;
      double fp, fm;
      {
        Tape t;
        fp = loss(t).item();
      }
      p->value.data[i] = orig - eps;
      {
        Tape t;
        fm = loss(t).item();
      }
      p->value.data[i] = orig;
      const double num = (fp - fm) / (2.0 * eps);
      const double a = p->grad[i];
      const double rel = std::abs(a - num) / std::max({1.0, std::abs(a), std::abs(num)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

// ---- initialization ---------------------------------------------------------

void kaiming_uniform(Parameter& p, std::size_t fan_in, Rng& rng) {
  uniform_init(p, std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1))), rng);
}

void uniform_init(Parameter& p, double bound, Rng& rng) {
  for (auto& w : p.value.data) w = rng.uniform(-bound, bound);
}

void orthogonal_blocks(Parameter& p, std::size_t block_rows, Rng& rng) {
  const Shape& s = p.value.shape;
  if (s.size() != 2 || block_rows == 0 || s[0] % block_rows != 0) {
    bad_shape("orthogonal_blocks", s, "rows divisible by the block size");
  }
  const auto r = static_cast<Idx>(block_rows);
  const auto c = static_cast<Idx>(s[1]);
  for (std::size_t blk = 0; blk < s[0] / block_rows; ++blk) {
    const bool tall = r >= c;
    Eigen::MatrixXd a(tall ? r : c, tall ? c : r);
    for (Idx i = 0; i < a.rows(); ++i)
      for (Idx j = 0; j < a.cols(); ++j) a(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
    const Eigen::MatrixXd rr = qr.matrixQR();
    for (Idx j = 0; j < a.cols(); ++j) {
      if (rr(j, j) < 0) q.col(j) *= -1.0;
    }
    const Eigen::MatrixXd block = tall ? q : Eigen::MatrixXd(q.transpose());
    for (Idx i = 0; i < r; ++i)
      for (Idx j = 0; j < c; ++j)
        p.value.data[(blk * block_rows + static_cast<std::size_t>(i)) * s[1] + static_cast<std::size_t>(j)] = block(i, j);
  }
}

}  // namespace ronin::ad
