#ifndef CES_AUTOENCODER_HPP
#define CES_AUTOENCODER_HPP

#include "ces/network.hpp"
#include "ces/training.hpp"

namespace ces {

/// Encoder phi: R^d -> R^{d_L} and decoder psi: R^{d_L} -> R^d trained as a
/// composite reconstruction map.
class Autoencoder {
public:
  Autoencoder(Network encoder, Network decoder);

  int full_dim() const { return encoder_.input_size(); }
  int latent_dim() const { return encoder_.output_size(); }

  Vector encode(const Vector& u) const { return encoder_.evaluate(u); }
  Vector decode(const Vector& z) const { return decoder_.evaluate(z); }

  /// d_L x d: one reverse sweep per latent component.
  Matrix encoder_jacobian(const Vector& u) const;
  /// d x d_L: one tangent sweep per latent component.
  Matrix decoder_jacobian(const Vector& z) const;

  /// log of the volume element of the map at the point: the sum of the log
  /// singular values of the rectangular Jacobian. Throws NumericalError
  /// naming the map when a singular value underflows 1e-12.
  double log_volume_encoder(const Vector& u) const;
  double log_volume_decoder(const Vector& z) const;

  const Network& encoder() const { return encoder_; }
  const Network& decoder() const { return decoder_; }

private:
  Network encoder_;
  Network decoder_;
};

/// Sum of log singular values of a rectangular Jacobian; the shared volume
/// kernel behind both map directions.
double log_volume_of_jacobian(const Matrix& jac, const std::string& map_name);

struct AutoencoderSpec {
  int latent_dim = 2;
  int encoder_layers = 2; // hidden+output stages per half
  int decoder_layers = 2;
  Activation hidden_activation = Activation::LeakyRelu;
  double alpha = 2.0; // leaky slope used by the reference configuration
  bool linear = false; // strictly linear maps (no activation anywhere)
};

/// Build the composite network, train on reconstruction, split the halves.
struct AutoencoderFit {
  Autoencoder ae;
  TrainReport report;
};
AutoencoderFit train_autoencoder(const Matrix& data, const AutoencoderSpec& spec,
                                 const TrainConfig& cfg);

void save_autoencoder(const std::string& path, const Autoencoder& ae);
Autoencoder load_autoencoder(const std::string& path);

} // namespace ces

#endif
