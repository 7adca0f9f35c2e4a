#include "ces/tensor.hpp"

#include <cstring>
#include <fstream>
#include <numeric>

namespace ces {

namespace {

constexpr char kMagic[4] = {'C', 'E', 'S', 'T'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kDtypeFloat64 = 1;

void write_u16(std::ostream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  require(data.size() == size(), "tensor payload length does not match shape");
}

std::size_t Tensor::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

double& Tensor::at(std::size_t i, std::size_t j) {
  return data[i * shape[1] + j];
}
double Tensor::at(std::size_t i, std::size_t j) const {
  return data[i * shape[1] + j];
}
double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
  return data[(i * shape[1] + j) * shape[2] + k];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return data[(i * shape[1] + j) * shape[2] + k];
}

Tensor Tensor::from_vector(const Vector& v) {
  return Tensor({static_cast<std::size_t>(v.size())},
                std::vector<double>(v.data(), v.data() + v.size()));
}

Tensor Tensor::from_matrix(const Matrix& m) {
  Tensor t;
  t.shape = {static_cast<std::size_t>(m.rows()),
             static_cast<std::size_t>(m.cols())};
  t.data.resize(t.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      t.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
  return t;
}

Vector Tensor::to_vector() const {
  require(rank() == 1, "tensor is not rank 1");
  return Eigen::Map<const Vector>(data.data(),
                                  static_cast<Eigen::Index>(data.size()));
}

Matrix Tensor::to_matrix() const {
  require(rank() == 2, "tensor is not rank 2");
  Matrix m(shape[0], shape[1]);
  for (std::size_t i = 0; i < shape[0]; ++i)
    for (std::size_t j = 0; j < shape[1]; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = at(i, j);
  return m;
}

Matrix Tensor::slice_matrix(std::size_t i) const {
  require(rank() == 3, "tensor is not rank 3");
  require(i < shape[0], "slice index out of range");
  Matrix m(shape[1], shape[2]);
  for (std::size_t j = 0; j < shape[1]; ++j)
    for (std::size_t k = 0; k < shape[2]; ++k)
      m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
          at(i, j, k);
  return m;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic, 4);
  write_u16(out, kVersion);
  out.put(static_cast<char>(kDtypeFloat64));
  out.put(static_cast<char>(t.rank()));
  for (std::size_t s : t.shape) write_u64(out, s);
  static_assert(sizeof(double) == 8);
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * 8));
  if (!out) throw NumericalError("tensor write failed");
}

Tensor read_tensor(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ConfigError("tensor container: bad magic bytes");
  const std::uint16_t version = read_u16(in);
  if (version != kVersion)
    throw ConfigError("tensor container: unsupported version " +
                      std::to_string(version));
  const int dtype = in.get();
  if (dtype != kDtypeFloat64)
    throw ConfigError("tensor container: unsupported dtype tag");
  const int rank = in.get();
  if (rank < 0 || rank > 8)
    throw ConfigError("tensor container: unsupported rank");
  Tensor t;
  t.shape.resize(static_cast<std::size_t>(rank));
  for (auto& s : t.shape) s = read_u64(in);
  t.data.resize(t.size());
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * 8));
  if (!in) throw ConfigError("tensor container: truncated payload");
  return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  write_tensor(out, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open for reading: " + path);
  return read_tensor(in);
}

} // namespace ces
