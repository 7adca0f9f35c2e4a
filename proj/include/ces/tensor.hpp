#ifndef CES_TENSOR_HPP
#define CES_TENSOR_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ces/types.hpp"

namespace ces {

/// Dense row-major float64 tensor with the on-disk container format:
///   magic "CEST" | version u16 | dtype u8 (1 = float64 LE) | rank u8 |
///   shape u64[rank] | payload float64[prod(shape)]
/// All integers little-endian. Round trips are bit-exact.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);

  std::size_t size() const;
  std::size_t rank() const { return shape.size(); }

  /// Row-major offset of a 2-d or 3-d index.
  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t i, std::size_t j, std::size_t k);
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  static Tensor from_vector(const Vector& v);
  static Tensor from_matrix(const Matrix& m);
  Vector to_vector() const;
  Matrix to_matrix() const;

  /// Matrix slice [i, :, :] of a rank-3 tensor.
  Matrix slice_matrix(std::size_t i) const;
};

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

} // namespace ces

#endif
