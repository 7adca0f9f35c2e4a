#include "ces/autoencoder.hpp"

#include <cmath>
#include <fstream>

namespace ces {

Autoencoder::Autoencoder(Network encoder, Network decoder)
    : encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
  require(encoder_.output_size() == decoder_.input_size(),
          "latent dimensions of encoder and decoder disagree");
  require(encoder_.input_size() == decoder_.output_size(),
          "full-space dimensions of encoder and decoder disagree");
  require(encoder_.output_size() <= encoder_.input_size(),
          "latent dimension exceeds the full dimension");
}

Matrix Autoencoder::encoder_jacobian(const Vector& u) const {
  return encoder_.jacobian_reverse(u);
}

Matrix Autoencoder::decoder_jacobian(const Vector& z) const {
  // d_L tangent sweeps, one per latent coordinate.
  return decoder_.jacobian_forward(z);
}

double log_volume_of_jacobian(const Matrix& jac, const std::string& map_name) {
  Eigen::JacobiSVD<Matrix> svd(jac);
  const Vector& sv = svd.singularValues();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] <= 1e-12)
      throw NumericalError("rank-deficient Jacobian of the " + map_name +
                           " (singular value " + std::to_string(sv[i]) + ")");
    acc += std::log(sv[i]);
  }
  return acc;
}

double Autoencoder::log_volume_encoder(const Vector& u) const {
  return log_volume_of_jacobian(encoder_jacobian(u), "encoder");
}

double Autoencoder::log_volume_decoder(const Vector& z) const {
  return log_volume_of_jacobian(decoder_jacobian(z), "decoder");
}

AutoencoderFit train_autoencoder(const Matrix& data, const AutoencoderSpec& spec,
                                 const TrainConfig& cfg) {
  const int d = static_cast<int>(data.rows());
  require(spec.latent_dim >= 1 && spec.latent_dim <= d,
          "latent dimension must lie in [1, d]");
  require(spec.encoder_layers >= 1 && spec.decoder_layers >= 1,
          "each half needs at least one layer");

  // Widths interpolate linearly between d and the latent dimension; the
  // final stage of each half is linear.
  auto interp = [&](int k, int stages, int from, int to) {
    double t = static_cast<double>(k) / stages;
    return std::max(1, static_cast<int>(std::lround((1.0 - t) * from + t * to)));
  };

  Network net(d);
  for (int k = 1; k <= spec.encoder_layers; ++k) {
    int w = interp(k, spec.encoder_layers, d, spec.latent_dim);
    bool last = k == spec.encoder_layers;
    Activation act = (spec.linear || last) ? Activation::Linear
                                           : spec.hidden_activation;
    net.add_dense(w, act, spec.alpha);
  }
  const int encoder_end = net.layer_count();
  for (int k = 1; k <= spec.decoder_layers; ++k) {
    int w = interp(k, spec.decoder_layers, spec.latent_dim, d);
    bool last = k == spec.decoder_layers;
    Activation act = (spec.linear || last) ? Activation::Linear
                                           : spec.hidden_activation;
    net.add_dense(w, act, spec.alpha);
  }

  TrainReport report = train_network(net, data, data, cfg);

  Network encoder(d);
  for (int i = 0; i < encoder_end; ++i)
    encoder.add_layer(net.layer(i).clone());
  Network decoder(spec.latent_dim);
  for (int i = encoder_end; i < net.layer_count(); ++i)
    decoder.add_layer(net.layer(i).clone());
  return {Autoencoder(std::move(encoder), std::move(decoder)),
          std::move(report)};
}

void save_autoencoder(const std::string& path, const Autoencoder& ae) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw ConfigError("cannot open autoencoder file for writing: " + path);
  write_network(out, ae.encoder());
  write_network(out, ae.decoder());
  if (!out) throw NumericalError("failed writing autoencoder file: " + path);
}

Autoencoder load_autoencoder(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open autoencoder file: " + path);
  Network encoder = read_network(in);
  Network decoder = read_network(in);
  return Autoencoder(std::move(encoder), std::move(decoder));
}

} // namespace ces
