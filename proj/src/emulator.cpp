#include "ces/emulator.hpp"

#include <cmath>

namespace ces {

Emulator::Emulator(Network net, ObservationSet obs)
    : net_(std::move(net)), obs_(std::move(obs)) {
  require(net_.output_size() == obs_.m(),
          "surrogate output does not match the observations");
}

double Emulator::potential(const Vector& u) const {
  Vector r = obs_.y() - net_.evaluate(u);
  return 0.5 * obs_.sq_norm_gamma(r);
}

Vector Emulator::grad_potential(const Vector& u) const {
  std::vector<LayerContext> ctx;
  Vector g = net_.forward_cached(u, ctx, false, nullptr);
  Vector r = obs_.y() - g;
  Vector cotangent = -obs_.apply_gamma_inv(r);
  return net_.input_gradient(ctx, cotangent);
}

Network make_dense_emulator_network(int input_dim, int output_dim,
                                    int hidden_layers, double dropout_rate) {
  require(hidden_layers >= 1, "at least one hidden layer is required");
  Network net(input_dim);
  // Linear interpolation of widths between input and output dimensions.
  auto width = [&](int k) {
    double t = static_cast<double>(k) / (hidden_layers + 1);
    return std::max(1, static_cast<int>(std::lround(
                           (1.0 - t) * input_dim + t * output_dim)));
  };
  for (int k = 1; k <= hidden_layers; ++k) {
    net.add_dense(width(k), Activation::Softplus);
    if (dropout_rate > 0.0) net.add_dropout(dropout_rate);
  }
  net.add_dense(output_dim, Activation::Linear);
  return net;
}

Network make_conv_emulator_network(int grid_n, int output_dim, int channels,
                                   int latent_units, double dropout_rate) {
  require(grid_n >= 5, "grid too small for two convolution stages");
  require(channels >= 1 && latent_units >= 1,
          "channels and latent units must be positive");
  Network net(grid_n * grid_n);
  int side = grid_n;
  net.add_conv2d(1, side, side, channels, 3, 1, Activation::Softplus);
  side -= 2;
  if (side % 2 == 0) {
    net.add_pool(channels, side, side, 2, 2, PoolKind::Max);
    side /= 2;
  }
  require(side >= 3, "grid too small for the second convolution stage");
  net.add_conv2d(channels, side, side, channels, 3, 1, Activation::Softplus);
  net.add_flatten();
  net.add_dense(latent_units, Activation::Softmax);
  if (dropout_rate > 0.0) net.add_dropout(dropout_rate);
  net.add_dense(output_dim, Activation::Linear);
  return net;
}

TrainingSet flatten_history(const CalibrationHistory& hist) {
  require(!hist.params.empty(), "empty calibration history");
  const Eigen::Index d = hist.params.front().rows();
  const Eigen::Index m = hist.outputs.front().rows();
  const Eigen::Index j = hist.params.front().cols();
  const Eigen::Index n = static_cast<Eigen::Index>(hist.params.size());
  TrainingSet set;
  set.inputs.resize(d, n * j);
  set.targets.resize(m, n * j);
  for (Eigen::Index s = 0; s < n; ++s) {
    set.inputs.middleCols(s * j, j) = hist.params[s];
    set.targets.middleCols(s * j, j) = hist.outputs[s];
  }
  return set;
}

EmulatorFit train_emulator(const TrainingSet& data, const ObservationSet& obs,
                           int hidden_layers, double dropout_rate,
                           const TrainConfig& cfg) {
  Network net = make_dense_emulator_network(
      static_cast<int>(data.inputs.rows()),
      static_cast<int>(data.targets.rows()), hidden_layers, dropout_rate);
  TrainReport report = train_network(net, data.inputs, data.targets, cfg);
  return {Emulator(std::move(net), obs), std::move(report)};
}

double emulator_rms_error(const Emulator& em, const ForwardModel& model,
                          const Matrix& probes) {
  require(probes.cols() >= 1, "at least one probe point is required");
  double acc = 0.0;
  for (Eigen::Index c = 0; c < probes.cols(); ++c) {
    Vector truth = model.evaluate(probes.col(c));
    Vector approx = em.evaluate(probes.col(c));
    acc += (approx - truth).squaredNorm() / (1.0 + truth.squaredNorm());
  }
  return std::sqrt(acc / probes.cols());
}

} // namespace ces
