#ifndef CES_EMULATOR_HPP
#define CES_EMULATOR_HPP

#include "ces/calibration.hpp"
#include "ces/forward_model.hpp"
#include "ces/network.hpp"
#include "ces/training.hpp"

namespace ces {

/// Surrogate G^e for the forward map plus the data it was fit against.
/// Potential and gradient never touch the true model.
class Emulator {
public:
  Emulator(Network net, ObservationSet obs);

  int input_dim() const { return net_.input_size(); }
  int output_dim() const { return net_.output_size(); }

  Vector evaluate(const Vector& u) const { return net_.evaluate(u); }

  /// 0.5 || y - G^e(u) ||^2_Gamma.
  double potential(const Vector& u) const;
  /// Reverse sweep with cotangent -Gamma^{-1}(y - G^e(u)).
  Vector grad_potential(const Vector& u) const;

  const Network& network() const { return net_; }
  const ObservationSet& observations() const { return obs_; }

private:
  Network net_;
  ObservationSet obs_;
};

/// Dense stack d -> m with hidden widths interpolated linearly between the
/// endpoints, softplus hidden activations, linear output.
Network make_dense_emulator_network(int input_dim, int output_dim,
                                    int hidden_layers, double dropout_rate);

/// Grid-input surrogate: conv(+pool) blocks over the n x n field, a dense
/// softmax latent stage, and a linear readout.
Network make_conv_emulator_network(int grid_n, int output_dim, int channels,
                                   int latent_units, double dropout_rate);

/// Collect (params, outputs) training pairs from the flattened calibration
/// history, optionally transforming inputs (whitening) first.
struct TrainingSet {
  Matrix inputs;  // d x N
  Matrix targets; // m x N
};
TrainingSet flatten_history(const CalibrationHistory& hist);

/// Fit a dense emulator to history pairs; returns the fitted emulator and
/// the training report.
struct EmulatorFit {
  Emulator emulator;
  TrainReport report;
};
EmulatorFit train_emulator(const TrainingSet& data, const ObservationSet& obs,
                           int hidden_layers, double dropout_rate,
                           const TrainConfig& cfg);

/// Root-mean-square relative error of the surrogate over probe points.
double emulator_rms_error(const Emulator& em, const ForwardModel& model,
                          const Matrix& probes);

} // namespace ces

#endif
