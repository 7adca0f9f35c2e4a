#include "ces/network.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ces/tensor.hpp"

namespace ces {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

Vector softmax_value(const Vector& z) {
  Vector y = (z.array() - z.maxCoeff()).exp();
  return y / y.sum();
}

bool elementwise(Activation a) { return a != Activation::Softmax; }

double act_scalar(Activation a, double z, double alpha) {
  switch (a) {
    case Activation::Linear: return z;
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::LeakyRelu:
    case Activation::Prelu: return z > 0.0 ? z : alpha * z;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Softplus:
      // Stable softplus: max(x, 0) + log1p(exp(-|x|)).
      return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    case Activation::Elu: return z > 0.0 ? z : alpha * std::expm1(z);
    case Activation::Softmax: break;
  }
  throw ConfigError("softmax is not an elementwise activation");
}

double act_deriv(Activation a, double z, double y, double alpha) {
  switch (a) {
    case Activation::Linear: return 1.0;
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::LeakyRelu:
    case Activation::Prelu: return z > 0.0 ? 1.0 : alpha;
    case Activation::Tanh: return 1.0 - y * y;
    case Activation::Softplus: return sigmoid(z);
    case Activation::Elu: return z > 0.0 ? 1.0 : y + alpha;
    case Activation::Softmax: break;
  }
  throw ConfigError("softmax is not an elementwise activation");
}

Vector act_apply(Activation a, const Vector& z, double alpha) {
  if (a == Activation::Softmax) return softmax_value(z);
  Vector y(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i)
    y[i] = act_scalar(a, z[i], alpha);
  return y;
}

// dL/dz from dL/dy. For softmax the components couple:
//   dz = y .* (dy - <dy, y>).
Vector act_vjp(Activation a, const Vector& z, const Vector& y, const Vector& dy,
               double alpha) {
  if (a == Activation::Softmax) {
    double inner = dy.dot(y);
    return y.array() * (dy.array() - inner);
  }
  Vector dz(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i)
    dz[i] = dy[i] * act_deriv(a, z[i], y[i], alpha);
  return dz;
}

// Tangent push-forward; identical to the vjp weights for elementwise maps,
// and y .* (v - <y, v>) for softmax.
Vector act_jvp(Activation a, const Vector& z, const Vector& y, const Vector& v,
               double alpha) {
  if (a == Activation::Softmax) {
    double inner = y.dot(v);
    return y.array() * (v.array() - inner);
  }
  Vector out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i)
    out[i] = v[i] * act_deriv(a, z[i], y[i], alpha);
  return out;
}

// dL/dalpha for the learned prelu slope: sum over negative preactivations.
double prelu_alpha_grad(const Vector& z, const Vector& dy) {
  double g = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    if (z[i] <= 0.0) g += dy[i] * z[i];
  return g;
}

} // namespace

Activation activation_from_string(const std::string& name) {
  if (name == "linear") return Activation::Linear;
  if (name == "relu") return Activation::Relu;
  if (name == "leaky_relu") return Activation::LeakyRelu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "softplus") return Activation::Softplus;
  if (name == "softmax") return Activation::Softmax;
  if (name == "prelu") return Activation::Prelu;
  if (name == "elu") return Activation::Elu;
  throw ConfigError("unknown activation: " + name);
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Tanh: return "tanh";
    case Activation::Softplus: return "softplus";
    case Activation::Softmax: return "softmax";
    case Activation::Prelu: return "prelu";
    case Activation::Elu: return "elu";
  }
  throw ConfigError("unknown activation");
}

DenseLayer::DenseLayer(int in, int out, Activation act, double alpha)
    : w_(Matrix::Zero(out, in)), b_(Vector::Zero(out)), act_(act),
      alpha_(alpha) {
  require(in >= 1 && out >= 1, "dense layer dimensions must be positive");
  if (act == Activation::Prelu) alpha_ = 0.25;
}

int DenseLayer::parameter_count() const {
  int n = static_cast<int>(w_.size() + b_.size());
  return act_ == Activation::Prelu ? n + 1 : n;
}

void DenseLayer::get_parameters(double* out) const {
  for (Eigen::Index r = 0; r < w_.rows(); ++r)
    for (Eigen::Index c = 0; c < w_.cols(); ++c) *out++ = w_(r, c);
  for (Eigen::Index i = 0; i < b_.size(); ++i) *out++ = b_[i];
  if (act_ == Activation::Prelu) *out = alpha_;
}

void DenseLayer::set_parameters(const double* in) {
  for (Eigen::Index r = 0; r < w_.rows(); ++r)
    for (Eigen::Index c = 0; c < w_.cols(); ++c) w_(r, c) = *in++;
  for (Eigen::Index i = 0; i < b_.size(); ++i) b_[i] = *in++;
  if (act_ == Activation::Prelu) alpha_ = *in;
}

void DenseLayer::initialize(RngStream& rng) {
  // He for the rectifier family, Glorot otherwise.
  double fan_in = static_cast<double>(w_.cols());
  double fan_out = static_cast<double>(w_.rows());
  bool rectifier = act_ == Activation::Relu || act_ == Activation::LeakyRelu ||
                   act_ == Activation::Prelu || act_ == Activation::Elu;
  double scale = rectifier ? std::sqrt(2.0 / fan_in)
                           : std::sqrt(2.0 / (fan_in + fan_out));
  for (Eigen::Index r = 0; r < w_.rows(); ++r)
    for (Eigen::Index c = 0; c < w_.cols(); ++c)
      w_(r, c) = scale * rng.normal();
  b_.setZero();
}

Vector DenseLayer::forward(const Vector& x, LayerContext& ctx, bool,
                           RngStream*) const {
  require(x.size() == w_.cols(), "dense layer input size mismatch");
  ctx.input = x;
  ctx.pre_activation = w_ * x + b_;
  ctx.output = act_apply(act_, ctx.pre_activation, alpha_);
  return ctx.output;
}

Vector DenseLayer::backward(const LayerContext& ctx, const Vector& dy,
                            double* param_grad) const {
  Vector dz = act_vjp(act_, ctx.pre_activation, ctx.output, dy, alpha_);
  if (param_grad) {
    double* p = param_grad;
    for (Eigen::Index r = 0; r < w_.rows(); ++r)
      for (Eigen::Index c = 0; c < w_.cols(); ++c)
        *p++ += dz[r] * ctx.input[c];
    for (Eigen::Index i = 0; i < b_.size(); ++i) *p++ += dz[i];
    if (act_ == Activation::Prelu)
      *p += prelu_alpha_grad(ctx.pre_activation, dy);
  }
  return w_.transpose() * dz;
}

Vector DenseLayer::jvp(const LayerContext& ctx, const Vector& dx) const {
  Vector dz = w_ * dx;
  return act_jvp(act_, ctx.pre_activation, ctx.output, dz, alpha_);
}

std::unique_ptr<Layer> DenseLayer::clone() const {
  return std::make_unique<DenseLayer>(*this);
}

Conv2dLayer::Conv2dLayer(int in_channels, int in_h, int in_w, int out_channels,
                         int kernel, int stride, Activation act, double alpha)
    : in_c_(in_channels), in_h_(in_h), in_w_(in_w), out_c_(out_channels),
      k_(kernel), stride_(stride), act_(act), alpha_(alpha) {
  require(in_channels >= 1 && out_channels >= 1, "channel counts must be positive");
  require(kernel >= 1 && stride >= 1, "kernel and stride must be positive");
  require(in_h >= kernel && in_w >= kernel,
          "convolution window exceeds the input");
  out_h_ = (in_h - kernel) / stride + 1;
  out_w_ = (in_w - kernel) / stride + 1;
  kernels_.assign(static_cast<std::size_t>(out_c_) * in_c_ * k_ * k_, 0.0);
  bias_ = Vector::Zero(out_c_);
  if (act == Activation::Prelu) alpha_ = 0.25;
  require(elementwise(act), "convolution layers use elementwise activations");
}

int Conv2dLayer::parameter_count() const {
  int n = static_cast<int>(kernels_.size()) + out_c_;
  return act_ == Activation::Prelu ? n + 1 : n;
}

void Conv2dLayer::get_parameters(double* out) const {
  for (double k : kernels_) *out++ = k;
  for (int i = 0; i < out_c_; ++i) *out++ = bias_[i];
  if (act_ == Activation::Prelu) *out = alpha_;
}

void Conv2dLayer::set_parameters(const double* in) {
  for (double& k : kernels_) k = *in++;
  for (int i = 0; i < out_c_; ++i) bias_[i] = *in++;
  if (act_ == Activation::Prelu) alpha_ = *in;
}

void Conv2dLayer::initialize(RngStream& rng) {
  double fan_in = static_cast<double>(in_c_) * k_ * k_;
  double scale = std::sqrt(2.0 / fan_in);
  for (double& k : kernels_) k = scale * rng.normal();
  bias_.setZero();
}

Vector Conv2dLayer::affine(const Vector& x, bool with_bias) const {
  Vector z = Vector::Zero(output_size());
  auto xin = [&](int c, int i, int j) { return x[(c * in_h_ + i) * in_w_ + j]; };
  auto ker = [&](int oc, int ic, int a, int b) {
    return kernels_[((static_cast<std::size_t>(oc) * in_c_ + ic) * k_ + a) * k_ + b];
  };
  for (int oc = 0; oc < out_c_; ++oc)
    for (int oi = 0; oi < out_h_; ++oi)
      for (int oj = 0; oj < out_w_; ++oj) {
        double acc = with_bias ? bias_[oc] : 0.0;
        for (int ic = 0; ic < in_c_; ++ic)
          for (int a = 0; a < k_; ++a)
            for (int b = 0; b < k_; ++b)
              acc += ker(oc, ic, a, b) * xin(ic, oi * stride_ + a, oj * stride_ + b);
        z[(oc * out_h_ + oi) * out_w_ + oj] = acc;
      }
  return z;
}

Vector Conv2dLayer::forward(const Vector& x, LayerContext& ctx, bool,
                            RngStream*) const {
  require(x.size() == input_size(), "conv layer input size mismatch");
  ctx.input = x;
  ctx.pre_activation = affine(x, true);
  ctx.output = act_apply(act_, ctx.pre_activation, alpha_);
  return ctx.output;
}

Vector Conv2dLayer::backward(const LayerContext& ctx, const Vector& dy,
                             double* param_grad) const {
  Vector dz = act_vjp(act_, ctx.pre_activation, ctx.output, dy, alpha_);
  Vector dx = Vector::Zero(input_size());
  auto kidx = [&](int oc, int ic, int a, int b) {
    return ((static_cast<std::size_t>(oc) * in_c_ + ic) * k_ + a) * k_ + b;
  };
  for (int oc = 0; oc < out_c_; ++oc)
    for (int oi = 0; oi < out_h_; ++oi)
      for (int oj = 0; oj < out_w_; ++oj) {
        double d = dz[(oc * out_h_ + oi) * out_w_ + oj];
        if (d == 0.0) continue;
        for (int ic = 0; ic < in_c_; ++ic)
          for (int a = 0; a < k_; ++a)
            for (int b = 0; b < k_; ++b) {
              int xi = (ic * in_h_ + oi * stride_ + a) * in_w_ + oj * stride_ + b;
              dx[xi] += kernels_[kidx(oc, ic, a, b)] * d;
              if (param_grad) param_grad[kidx(oc, ic, a, b)] += ctx.input[xi] * d;
            }
        if (param_grad) param_grad[kernels_.size() + oc] += d;
      }
  if (param_grad && act_ == Activation::Prelu)
    param_grad[kernels_.size() + out_c_] +=
        prelu_alpha_grad(ctx.pre_activation, dy);
  return dx;
}

Vector Conv2dLayer::jvp(const LayerContext& ctx, const Vector& dx) const {
  Vector dz = affine(dx, false);
  return act_jvp(act_, ctx.pre_activation, ctx.output, dz, alpha_);
}

std::unique_ptr<Layer> Conv2dLayer::clone() const {
  return std::make_unique<Conv2dLayer>(*this);
}

PoolLayer::PoolLayer(int channels, int in_h, int in_w, int window, int stride,
                     PoolKind pool)
    : c_(channels), in_h_(in_h), in_w_(in_w), win_(window), stride_(stride),
      pool_(pool) {
  require(channels >= 1 && window >= 1 && stride >= 1,
          "pool parameters must be positive");
  require(in_h >= window && in_w >= window, "pool window exceeds the input");
  out_h_ = (in_h - window) / stride + 1;
  out_w_ = (in_w - window) / stride + 1;
}

Vector PoolLayer::forward(const Vector& x, LayerContext& ctx, bool,
                          RngStream*) const {
  require(x.size() == input_size(), "pool layer input size mismatch");
  ctx.input = x;
  Vector y(output_size());
  ctx.pool_argmax.assign(output_size(), -1);
  const double inv_area = 1.0 / (win_ * win_);
  for (int c = 0; c < c_; ++c)
    for (int oi = 0; oi < out_h_; ++oi)
      for (int oj = 0; oj < out_w_; ++oj) {
        int oidx = (c * out_h_ + oi) * out_w_ + oj;
        if (pool_ == PoolKind::Max) {
          // Ties resolve to the first window element in row-major order.
          int best = -1;
          double best_v = 0.0;
          for (int a = 0; a < win_; ++a)
            for (int b = 0; b < win_; ++b) {
              int xi = (c * in_h_ + oi * stride_ + a) * in_w_ + oj * stride_ + b;
              if (best < 0 || x[xi] > best_v) {
                best = xi;
                best_v = x[xi];
              }
            }
          ctx.pool_argmax[oidx] = best;
          y[oidx] = best_v;
        } else {
          double acc = 0.0;
          for (int a = 0; a < win_; ++a)
            for (int b = 0; b < win_; ++b)
              acc += x[(c * in_h_ + oi * stride_ + a) * in_w_ + oj * stride_ + b];
          y[oidx] = acc * inv_area;
        }
      }
  ctx.output = y;
  return y;
}

Vector PoolLayer::backward(const LayerContext& ctx, const Vector& dy,
                           double*) const {
  Vector dx = Vector::Zero(input_size());
  const double inv_area = 1.0 / (win_ * win_);
  for (int c = 0; c < c_; ++c)
    for (int oi = 0; oi < out_h_; ++oi)
      for (int oj = 0; oj < out_w_; ++oj) {
        int oidx = (c * out_h_ + oi) * out_w_ + oj;
        if (pool_ == PoolKind::Max) {
          dx[ctx.pool_argmax[oidx]] += dy[oidx];
        } else {
          for (int a = 0; a < win_; ++a)
            for (int b = 0; b < win_; ++b)
              dx[(c * in_h_ + oi * stride_ + a) * in_w_ + oj * stride_ + b] +=
                  dy[oidx] * inv_area;
        }
      }
  return dx;
}

Vector PoolLayer::jvp(const LayerContext& ctx, const Vector& dx) const {
  Vector dy(output_size());
  const double inv_area = 1.0 / (win_ * win_);
  for (int c = 0; c < c_; ++c)
    for (int oi = 0; oi < out_h_; ++oi)
      for (int oj = 0; oj < out_w_; ++oj) {
        int oidx = (c * out_h_ + oi) * out_w_ + oj;
        if (pool_ == PoolKind::Max) {
          dy[oidx] = dx[ctx.pool_argmax[oidx]];
        } else {
          double acc = 0.0;
          for (int a = 0; a < win_; ++a)
            for (int b = 0; b < win_; ++b)
              acc += dx[(c * in_h_ + oi * stride_ + a) * in_w_ + oj * stride_ + b];
          dy[oidx] = acc * inv_area;
        }
      }
  return dy;
}

std::unique_ptr<Layer> PoolLayer::clone() const {
  return std::make_unique<PoolLayer>(*this);
}

Vector FlattenLayer::forward(const Vector& x, LayerContext& ctx, bool,
                             RngStream*) const {
  require(x.size() == size_, "flatten layer input size mismatch");
  ctx.input = x;
  ctx.output = x;
  return x;
}

Vector FlattenLayer::backward(const LayerContext&, const Vector& dy,
                              double*) const {
  return dy;
}

Vector FlattenLayer::jvp(const LayerContext&, const Vector& dx) const {
  return dx;
}

std::unique_ptr<Layer> FlattenLayer::clone() const {
  return std::make_unique<FlattenLayer>(*this);
}

DropoutLayer::DropoutLayer(int size, double rate) : size_(size), rate_(rate) {
  require(size >= 1, "dropout size must be positive");
  require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0, 1)");
}

Vector DropoutLayer::forward(const Vector& x, LayerContext& ctx, bool train,
                             RngStream* rng) const {
  require(x.size() == size_, "dropout layer input size mismatch");
  ctx.input = x;
  if (!train || rate_ == 0.0) {
    ctx.dropout_mask = Vector::Ones(size_);
    ctx.output = x;
    return x;
  }
  require(rng != nullptr, "training-mode dropout needs a random stream");
  // Inverted scaling keeps the expectation equal to the input.
  double keep = 1.0 - rate_;
  ctx.dropout_mask = Vector(size_);
  for (int i = 0; i < size_; ++i)
    ctx.dropout_mask[i] = rng->uniform() < keep ? 1.0 / keep : 0.0;
  ctx.output = x.cwiseProduct(ctx.dropout_mask);
  return ctx.output;
}

Vector DropoutLayer::backward(const LayerContext& ctx, const Vector& dy,
                              double*) const {
  return dy.cwiseProduct(ctx.dropout_mask);
}

Vector DropoutLayer::jvp(const LayerContext& ctx, const Vector& dx) const {
  return dx.cwiseProduct(ctx.dropout_mask);
}

std::unique_ptr<Layer> DropoutLayer::clone() const {
  return std::make_unique<DropoutLayer>(*this);
}

Network::Network(int input_size) : input_size_(input_size) {
  require(input_size >= 1, "network input size must be positive");
}

Network::Network(const Network& other) : input_size_(other.input_size_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this == &other) return *this;
  input_size_ = other.input_size_;
  layers_.clear();
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
  return *this;
}

int Network::output_size() const {
  return layers_.empty() ? input_size_ : layers_.back()->output_size();
}

Network& Network::add_layer(std::unique_ptr<Layer> layer) {
  require(layer->input_size() == output_size(),
          "layer input does not match the current network output (" +
              std::to_string(layer->input_size()) + " vs " +
              std::to_string(output_size()) + ")");
  layers_.push_back(std::move(layer));
  return *this;
}

Network& Network::add_dense(int out, Activation act, double alpha) {
  return add_layer(std::make_unique<DenseLayer>(output_size(), out, act, alpha));
}

Network& Network::add_conv2d(int in_channels, int in_h, int in_w,
                             int out_channels, int kernel, int stride,
                             Activation act, double alpha) {
  require(in_channels * in_h * in_w == output_size(),
          "conv shape does not match the current network output");
  return add_layer(std::make_unique<Conv2dLayer>(
      in_channels, in_h, in_w, out_channels, kernel, stride, act, alpha));
}

Network& Network::add_pool(int channels, int in_h, int in_w, int window,
                           int stride, PoolKind pool) {
  require(channels * in_h * in_w == output_size(),
          "pool shape does not match the current network output");
  return add_layer(
      std::make_unique<PoolLayer>(channels, in_h, in_w, window, stride, pool));
}

Network& Network::add_flatten() {
  return add_layer(std::make_unique<FlattenLayer>(output_size()));
}

Network& Network::add_dropout(double rate) {
  return add_layer(std::make_unique<DropoutLayer>(output_size(), rate));
}

int Network::parameter_count() const {
  int n = 0;
  for (const auto& l : layers_) n += l->parameter_count();
  return n;
}

Vector Network::parameters() const {
  Vector theta(parameter_count());
  double* p = theta.data();
  for (const auto& l : layers_) {
    l->get_parameters(p);
    p += l->parameter_count();
  }
  return theta;
}

void Network::set_parameters(const Vector& theta) {
  require(theta.size() == parameter_count(), "parameter vector size mismatch");
  const double* p = theta.data();
  for (const auto& l : layers_) {
    l->set_parameters(p);
    p += l->parameter_count();
  }
}

void Network::initialize(RngStream& rng) {
  for (auto& l : layers_) l->initialize(rng);
}

Vector Network::evaluate(const Vector& x) const {
  std::vector<LayerContext> ctx;
  return forward_cached(x, ctx, false, nullptr);
}

Vector Network::forward_cached(const Vector& x, std::vector<LayerContext>& ctx,
                               bool train, RngStream* rng) const {
  require(x.size() == input_size_, "network input size mismatch");
  ctx.resize(layers_.size());
  Vector cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    cur = layers_[i]->forward(cur, ctx[i], train, rng);
  return cur;
}

Vector Network::backward(const std::vector<LayerContext>& ctx, const Vector& dy,
                         Vector& param_grad) const {
  require(ctx.size() == layers_.size(), "layer context mismatch");
  param_grad = Vector::Zero(parameter_count());
  std::vector<double*> offsets(layers_.size());
  double* p = param_grad.data();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    offsets[i] = p;
    p += layers_[i]->parameter_count();
  }
  Vector cur = dy;
  for (std::size_t i = layers_.size(); i-- > 0;)
    cur = layers_[i]->backward(ctx[i], cur, offsets[i]);
  return cur;
}

Vector Network::input_gradient(const std::vector<LayerContext>& ctx,
                               const Vector& dy) const {
  require(ctx.size() == layers_.size(), "layer context mismatch");
  Vector cur = dy;
  for (std::size_t i = layers_.size(); i-- > 0;)
    cur = layers_[i]->backward(ctx[i], cur, nullptr);
  return cur;
}

Vector Network::jvp_cached(const std::vector<LayerContext>& ctx,
                           const Vector& v) const {
  require(ctx.size() == layers_.size(), "layer context mismatch");
  Vector cur = v;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    cur = layers_[i]->jvp(ctx[i], cur);
  return cur;
}

Vector Network::vjp(const Vector& x, const Vector& cotangent) const {
  std::vector<LayerContext> ctx;
  forward_cached(x, ctx, false, nullptr);
  return input_gradient(ctx, cotangent);
}

Vector Network::jvp(const Vector& x, const Vector& v) const {
  std::vector<LayerContext> ctx;
  forward_cached(x, ctx, false, nullptr);
  return jvp_cached(ctx, v);
}

Matrix Network::jacobian_reverse(const Vector& x) const {
  std::vector<LayerContext> ctx;
  Vector y = forward_cached(x, ctx, false, nullptr);
  Matrix jac(y.size(), input_size_);
  Vector e = Vector::Zero(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    e[i] = 1.0;
    jac.row(i) = input_gradient(ctx, e).transpose();
    e[i] = 0.0;
  }
  return jac;
}

Matrix Network::jacobian_forward(const Vector& x) const {
  std::vector<LayerContext> ctx;
  Vector y = forward_cached(x, ctx, false, nullptr);
  Matrix jac(y.size(), input_size_);
  Vector e = Vector::Zero(input_size_);
  for (Eigen::Index j = 0; j < input_size_; ++j) {
    e[j] = 1.0;
    jac.col(j) = jvp_cached(ctx, e);
    e[j] = 0.0;
  }
  return jac;
}

namespace {

nlohmann::json layer_manifest(const Layer& layer) {
  nlohmann::json j;
  j["kind"] = layer.kind();
  if (auto* d = dynamic_cast<const DenseLayer*>(&layer)) {
    j["in"] = d->input_size();
    j["out"] = d->output_size();
    j["activation"] = activation_name(d->activation());
    j["alpha"] = d->alpha();
  } else if (auto* c = dynamic_cast<const Conv2dLayer*>(&layer)) {
    j["in_channels"] = c->in_channels();
    j["in_h"] = c->in_h();
    j["in_w"] = c->in_w();
    j["out_channels"] = c->out_channels();
    j["kernel"] = c->kernel();
    j["stride"] = c->stride();
    j["activation"] = activation_name(c->activation());
    j["alpha"] = c->alpha();
  } else if (auto* p = dynamic_cast<const PoolLayer*>(&layer)) {
    j["channels"] = p->channels();
    j["in_h"] = p->in_h();
    j["in_w"] = p->in_w();
    j["window"] = p->window();
    j["stride"] = p->stride();
    j["pool"] = p->pool() == PoolKind::Max ? "max" : "avg";
  } else if (auto* f = dynamic_cast<const FlattenLayer*>(&layer)) {
    j["size"] = f->input_size();
  } else if (auto* dr = dynamic_cast<const DropoutLayer*>(&layer)) {
    j["size"] = dr->input_size();
    j["rate"] = dr->rate();
  } else {
    throw ConfigError("unknown layer kind for serialization");
  }
  return j;
}

std::unique_ptr<Layer> layer_from_manifest(const nlohmann::json& j) {
  const std::string kind = j.at("kind");
  if (kind == "dense") {
    auto l = std::make_unique<DenseLayer>(
        j.at("in").get<int>(), j.at("out").get<int>(),
        activation_from_string(j.at("activation")), j.at("alpha").get<double>());
    return l;
  }
  if (kind == "conv2d") {
    return std::make_unique<Conv2dLayer>(
        j.at("in_channels").get<int>(), j.at("in_h").get<int>(),
        j.at("in_w").get<int>(), j.at("out_channels").get<int>(),
        j.at("kernel").get<int>(), j.at("stride").get<int>(),
        activation_from_string(j.at("activation")), j.at("alpha").get<double>());
  }
  if (kind == "pool") {
    return std::make_unique<PoolLayer>(
        j.at("channels").get<int>(), j.at("in_h").get<int>(),
        j.at("in_w").get<int>(), j.at("window").get<int>(),
        j.at("stride").get<int>(),
        j.at("pool") == "max" ? PoolKind::Max : PoolKind::Avg);
  }
  if (kind == "flatten")
    return std::make_unique<FlattenLayer>(j.at("size").get<int>());
  if (kind == "dropout")
    return std::make_unique<DropoutLayer>(j.at("size").get<int>(),
                                          j.at("rate").get<double>());
  throw ConfigError("unknown layer kind in network file: " + kind);
}

} // namespace

void write_network(std::ostream& out, const Network& net) {
  nlohmann::json manifest;
  manifest["format"] = "ces-network";
  manifest["version"] = 1;
  manifest["input_size"] = net.input_size();
  manifest["layers"] = nlohmann::json::array();
  for (int i = 0; i < net.layer_count(); ++i)
    manifest["layers"].push_back(layer_manifest(net.layer(i)));

  std::string header = manifest.dump();
  std::uint32_t len = static_cast<std::uint32_t>(header.size());
  unsigned char lenb[4] = {static_cast<unsigned char>(len & 0xff),
                           static_cast<unsigned char>((len >> 8) & 0xff),
                           static_cast<unsigned char>((len >> 16) & 0xff),
                           static_cast<unsigned char>((len >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(lenb), 4);
  out.write(header.data(), header.size());
  Tensor params = Tensor::from_vector(net.parameters());
  write_tensor(out, params);
  if (!out) throw NumericalError("failed writing network stream");
}

Network read_network(std::istream& in) {
  unsigned char lenb[4];
  in.read(reinterpret_cast<char*>(lenb), 4);
  if (!in) throw ConfigError("truncated network stream");
  std::uint32_t len = static_cast<std::uint32_t>(lenb[0]) |
                      (static_cast<std::uint32_t>(lenb[1]) << 8) |
                      (static_cast<std::uint32_t>(lenb[2]) << 16) |
                      (static_cast<std::uint32_t>(lenb[3]) << 24);
  std::string header(len, '\0');
  in.read(header.data(), len);
  if (!in) throw ConfigError("truncated network stream");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid network manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "ces-network")
    throw ConfigError("stream does not hold a network");
  if (manifest.value("version", 0) != 1)
    throw ConfigError("unsupported network file version");

  Network net(manifest.at("input_size").get<int>());
  for (const auto& lj : manifest.at("layers"))
    net.add_layer(layer_from_manifest(lj));
  Tensor params = read_tensor(in);
  net.set_parameters(params.to_vector());
  return net;
}

void save_network(const std::string& path, const Network& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open network file for writing: " + path);
  write_network(out, net);
  if (!out) throw NumericalError("failed writing network file: " + path);
}

Network load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open network file: " + path);
  return read_network(in);
}

} // namespace ces
