#include "ces/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ces {

double mse_loss(const Network& net, const Matrix& inputs,
                const Matrix& targets) {
  double acc = 0.0;
  for (Eigen::Index c = 0; c < inputs.cols(); ++c)
    acc += (net.evaluate(inputs.col(c)) - targets.col(c)).squaredNorm();
  return acc / (static_cast<double>(inputs.cols()) * targets.rows());
}

TrainReport train_network(Network& net, const Matrix& inputs,
                          const Matrix& targets, const TrainConfig& cfg) {
  require(inputs.cols() == targets.cols(), "input/target sample counts differ");
  require(inputs.rows() == net.input_size(), "input dimension mismatch");
  require(targets.rows() == net.output_size(), "target dimension mismatch");
  require(cfg.learning_rate > 0.0, "learning rate must be positive");
  require(cfg.epochs >= 1 && cfg.batch_size >= 1, "bad training schedule");
  require(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0,
          "validation fraction must be in [0, 1)");

  const int n_total = static_cast<int>(inputs.cols());
  RngStream rng(cfg.seed, 1);
  net.initialize(rng);

  // One seeded shuffle fixes the split and the epoch order base.
  std::vector<int> order(n_total);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  int n_val = static_cast<int>(std::floor(cfg.validation_fraction * n_total));
  int n_train = n_total - n_val;
  require(n_train >= 1, "no training samples after the validation split");
  std::vector<int> train_idx(order.begin(), order.begin() + n_train);
  std::vector<int> val_idx(order.begin() + n_train, order.end());

  const int m = static_cast<int>(targets.rows());
  const int p = net.parameter_count();
  Vector theta = net.parameters();
  Vector adam_m = Vector::Zero(p);
  Vector adam_v = Vector::Zero(p);
  long adam_t = 0;

  TrainReport report;
  report.train_count = n_train;
  report.val_count = n_val;

  std::vector<LayerContext> ctx;
  Vector grad(p), batch_grad(p);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng.engine());
    double epoch_loss = 0.0;
    for (int start = 0; start < n_train; start += cfg.batch_size) {
      int bs = std::min(cfg.batch_size, n_train - start);
      batch_grad.setZero();
      double batch_loss = 0.0;
      for (int b = 0; b < bs; ++b) {
        int idx = train_idx[start + b];
        Vector y = net.forward_cached(inputs.col(idx), ctx, true, &rng);
        Vector resid = y - targets.col(idx);
        batch_loss += resid.squaredNorm();
        // d(mean sq err)/dy for this sample within the batch mean.
        Vector dy = (2.0 / (bs * static_cast<double>(m))) * resid;
        net.backward(ctx, dy, grad);
        batch_grad += grad;
      }
      batch_loss /= bs * static_cast<double>(m);
      epoch_loss += batch_loss * bs;

      if (!std::isfinite(batch_loss))
        throw NumericalError(
            "training diverged at epoch " + std::to_string(epoch) +
            " (loss is not finite); learning rate " +
            std::to_string(cfg.learning_rate));

      if (cfg.optimizer == Optimizer::Sgd) {
        theta -= cfg.learning_rate * batch_grad;
      } else {
        ++adam_t;
        adam_m = cfg.beta1 * adam_m + (1.0 - cfg.beta1) * batch_grad;
        adam_v = cfg.beta2 * adam_v +
                 (1.0 - cfg.beta2) * batch_grad.cwiseProduct(batch_grad);
        double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam_t));
        double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam_t));
        Vector mhat = adam_m / bc1;
        Vector vhat = adam_v / bc2;
        theta -= cfg.learning_rate *
                 (mhat.array() / (vhat.array().sqrt() + cfg.adam_eps)).matrix();
      }
      net.set_parameters(theta);
    }
    report.train_loss.push_back(epoch_loss / n_train);

    if (n_val > 0) {
      double vloss = 0.0;
      for (int idx : val_idx)
        vloss += (net.evaluate(inputs.col(idx)) - targets.col(idx)).squaredNorm();
      report.val_loss.push_back(vloss / (n_val * static_cast<double>(m)));
      if (!std::isfinite(report.val_loss.back()))
        throw NumericalError(
            "training diverged at epoch " + std::to_string(epoch) +
            " (validation loss is not finite); learning rate " +
            std::to_string(cfg.learning_rate));
    }
  }
  return report;
}

} // namespace ces
