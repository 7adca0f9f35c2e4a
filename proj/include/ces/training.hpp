#ifndef CES_TRAINING_HPP
#define CES_TRAINING_HPP

#include "ces/network.hpp"

namespace ces {

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  Optimizer optimizer = Optimizer::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 200;
  int batch_size = 32;
  /// Held-out fraction; the split follows one seeded shuffle.
  double validation_fraction = 0.25;
  std::uint64_t seed = 0;
};

struct TrainReport {
  std::vector<double> train_loss; // one entry per epoch
  std::vector<double> val_loss;
  int train_count = 0;
  int val_count = 0;
};

/// Minimize mean squared error over (inputs, targets) columns. Throws
/// NumericalError with the epoch and learning rate when the loss turns
/// non-finite.
TrainReport train_network(Network& net, const Matrix& inputs,
                          const Matrix& targets, const TrainConfig& cfg);

/// Mean over samples and components of the squared error, inference mode.
double mse_loss(const Network& net, const Matrix& inputs,
                const Matrix& targets);

} // namespace ces

#endif
