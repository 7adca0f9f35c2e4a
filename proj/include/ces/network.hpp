#ifndef CES_NETWORK_HPP
#define CES_NETWORK_HPP

#include <memory>
#include <string>
#include <vector>

#include "ces/random.hpp"
#include "ces/types.hpp"

namespace ces {

enum class Activation {
  Linear,
  Relu,
  LeakyRelu,
  Tanh,
  Softplus,
  Softmax,
  Prelu,
  Elu
};

Activation activation_from_string(const std::string& name);
std::string activation_name(Activation a);

/// Per-layer values cached by a forward pass and reused by backward and
/// tangent propagation.
struct LayerContext {
  Vector input;
  Vector pre_activation;
  Vector output;
  std::vector<int> pool_argmax;
  Vector dropout_mask;
};

/// One differentiable map in a feed-forward stack. Flat vectors throughout;
/// convolution and pooling interpret them as (channels, height, width)
/// row-major.
class Layer {
public:
  virtual ~Layer() = default;

  virtual int input_size() const = 0;
  virtual int output_size() const = 0;
  virtual int parameter_count() const { return 0; }
  virtual void get_parameters(double* out) const {}
  virtual void set_parameters(const double* in) {}
  virtual void initialize(RngStream& rng) {}

  /// train enables stochastic behavior (dropout); rng may be null otherwise.
  virtual Vector forward(const Vector& x, LayerContext& ctx, bool train,
                         RngStream* rng) const = 0;
  /// Reverse sweep: dL/dy -> dL/dx, parameter gradient accumulated into
  /// param_grad (length parameter_count, may be null when unused).
  virtual Vector backward(const LayerContext& ctx, const Vector& dy,
                          double* param_grad) const = 0;
  /// Tangent sweep through the linearization at the cached point.
  virtual Vector jvp(const LayerContext& ctx, const Vector& dx) const = 0;

  virtual std::string kind() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;
};

class DenseLayer : public Layer {
public:
  DenseLayer(int in, int out, Activation act, double alpha = 0.01);

  int input_size() const override { return static_cast<int>(w_.cols()); }
  int output_size() const override { return static_cast<int>(w_.rows()); }
  int parameter_count() const override;
  void get_parameters(double* out) const override;
  void set_parameters(const double* in) override;
  void initialize(RngStream& rng) override;

  Vector forward(const Vector& x, LayerContext& ctx, bool train,
                 RngStream* rng) const override;
  Vector backward(const LayerContext& ctx, const Vector& dy,
                  double* param_grad) const override;
  Vector jvp(const LayerContext& ctx, const Vector& dx) const override;

  std::string kind() const override { return "dense"; }
  std::unique_ptr<Layer> clone() const override;

  Activation activation() const { return act_; }
  double alpha() const { return alpha_; }
  const Matrix& weights() const { return w_; }

private:
  Matrix w_;
  Vector b_;
  Activation act_;
  double alpha_; // leaky/elu slope, or the learned prelu parameter
};

class Conv2dLayer : public Layer {
public:
  Conv2dLayer(int in_channels, int in_h, int in_w, int out_channels,
              int kernel, int stride, Activation act, double alpha = 0.01);

  int input_size() const override { return in_c_ * in_h_ * in_w_; }
  int output_size() const override { return out_c_ * out_h_ * out_w_; }
  int parameter_count() const override;
  void get_parameters(double* out) const override;
  void set_parameters(const double* in) override;
  void initialize(RngStream& rng) override;

  Vector forward(const Vector& x, LayerContext& ctx, bool train,
                 RngStream* rng) const override;
  Vector backward(const LayerContext& ctx, const Vector& dy,
                  double* param_grad) const override;
  Vector jvp(const LayerContext& ctx, const Vector& dx) const override;

  std::string kind() const override { return "conv2d"; }
  std::unique_ptr<Layer> clone() const override;

  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }
  int out_channels() const { return out_c_; }
  int in_channels() const { return in_c_; }
  int in_h() const { return in_h_; }
  int in_w() const { return in_w_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  Activation activation() const { return act_; }
  double alpha() const { return alpha_; }

private:
  Vector affine(const Vector& x, bool with_bias) const;

  int in_c_, in_h_, in_w_, out_c_, k_, stride_, out_h_, out_w_;
  std::vector<double> kernels_; // (out_c, in_c, k, k) row-major
  Vector bias_;
  Activation act_;
  double alpha_;
};

enum class PoolKind { Max, Avg };

class PoolLayer : public Layer {
public:
  PoolLayer(int channels, int in_h, int in_w, int window, int stride,
            PoolKind pool);

  int input_size() const override { return c_ * in_h_ * in_w_; }
  int output_size() const override { return c_ * out_h_ * out_w_; }

  Vector forward(const Vector& x, LayerContext& ctx, bool train,
                 RngStream* rng) const override;
  Vector backward(const LayerContext& ctx, const Vector& dy,
                  double* param_grad) const override;
  Vector jvp(const LayerContext& ctx, const Vector& dx) const override;

  std::string kind() const override { return "pool"; }
  std::unique_ptr<Layer> clone() const override;

  PoolKind pool() const { return pool_; }
  int channels() const { return c_; }
  int in_h() const { return in_h_; }
  int in_w() const { return in_w_; }
  int window() const { return win_; }
  int stride() const { return stride_; }
  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }

private:
  int c_, in_h_, in_w_, win_, stride_, out_h_, out_w_;
  PoolKind pool_;
};

/// Marks the transition from spatial to flat blocks; the identity on the
/// flat representation.
class FlattenLayer : public Layer {
public:
  explicit FlattenLayer(int size) : size_(size) {
    require(size >= 1, "flatten size must be positive");
  }
  int input_size() const override { return size_; }
  int output_size() const override { return size_; }
  Vector forward(const Vector& x, LayerContext& ctx, bool,
                 RngStream*) const override;
  Vector backward(const LayerContext&, const Vector& dy,
                  double*) const override;
  Vector jvp(const LayerContext&, const Vector& dx) const override;
  std::string kind() const override { return "flatten"; }
  std::unique_ptr<Layer> clone() const override;

private:
  int size_;
};

/// Inverted dropout: active only in training-mode forwards, the identity at
/// inference.
class DropoutLayer : public Layer {
public:
  DropoutLayer(int size, double rate);
  int input_size() const override { return size_; }
  int output_size() const override { return size_; }
  Vector forward(const Vector& x, LayerContext& ctx, bool train,
                 RngStream* rng) const override;
  Vector backward(const LayerContext& ctx, const Vector& dy,
                  double*) const override;
  Vector jvp(const LayerContext& ctx, const Vector& dx) const override;
  std::string kind() const override { return "dropout"; }
  std::unique_ptr<Layer> clone() const override;

  double rate() const { return rate_; }

private:
  int size_;
  double rate_;
};

/// Feed-forward stack with reverse-mode and forward-mode sweeps.
class Network {
public:
  explicit Network(int input_size);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  Network& add_dense(int out, Activation act, double alpha = 0.01);
  Network& add_conv2d(int in_channels, int in_h, int in_w, int out_channels,
                      int kernel, int stride, Activation act,
                      double alpha = 0.01);
  Network& add_pool(int channels, int in_h, int in_w, int window, int stride,
                    PoolKind pool);
  Network& add_flatten();
  Network& add_dropout(double rate);
  Network& add_layer(std::unique_ptr<Layer> layer);

  int input_size() const { return input_size_; }
  int output_size() const;
  int layer_count() const { return static_cast<int>(layers_.size()); }
  const Layer& layer(int i) const { return *layers_[i]; }

  int parameter_count() const;
  Vector parameters() const;
  void set_parameters(const Vector& theta);
  void initialize(RngStream& rng);

  /// Inference-mode evaluation.
  Vector evaluate(const Vector& x) const;

  /// Forward pass keeping per-layer caches; train enables dropout.
  Vector forward_cached(const Vector& x, std::vector<LayerContext>& ctx,
                        bool train = false, RngStream* rng = nullptr) const;
  /// Reverse sweep from output cotangent dy; returns dL/dx and fills the
  /// flat parameter gradient (resized to parameter_count).
  Vector backward(const std::vector<LayerContext>& ctx, const Vector& dy,
                  Vector& param_grad) const;
  /// Reverse sweep ignoring parameter gradients.
  Vector input_gradient(const std::vector<LayerContext>& ctx,
                        const Vector& dy) const;
  /// Forward-mode directional derivative along v at the cached point.
  Vector jvp_cached(const std::vector<LayerContext>& ctx,
                    const Vector& v) const;

  /// Gradient of c . f(x) with respect to x at inference mode.
  Vector vjp(const Vector& x, const Vector& cotangent) const;
  /// Directional derivative df(x)[v] at inference mode.
  Vector jvp(const Vector& x, const Vector& v) const;

  /// Full Jacobian, one reverse sweep per output component.
  Matrix jacobian_reverse(const Vector& x) const;
  /// Full Jacobian, one tangent sweep per input component.
  Matrix jacobian_forward(const Vector& x) const;

private:
  int input_size_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

void write_network(std::ostream& out, const Network& net);
Network read_network(std::istream& in);
void save_network(const std::string& path, const Network& net);
Network load_network(const std::string& path);

} // namespace ces

#endif
