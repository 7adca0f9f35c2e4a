#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

#include "ces/random.hpp"
#include "ces/tensor.hpp"

using namespace ces;

namespace {

bool bit_equal(double a, double b) {
  std::uint64_t ba, bb;
  std::memcpy(&ba, &a, 8);
  std::memcpy(&bb, &b, 8);
  return ba == bb;
}

} // namespace

TEST_CASE("tensor round trip is bit exact") {
  Tensor t;
  t.shape = {3, 4, 5};
  t.data.resize(60);
  RngStream rng(17);
  for (auto& v : t.data) v = rng.normal() * 1e3;
  t.data[0] = -0.0;
  t.data[1] = 1e-310; // subnormal
  t.data[2] = 1.0 / 3.0;

  std::stringstream ss;
  write_tensor(ss, t);
  Tensor back = read_tensor(ss);

  REQUIRE(back.shape == t.shape);
  REQUIRE(back.data.size() == t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i)
    CHECK(bit_equal(back.data[i], t.data[i]));
}

TEST_CASE("empty tensor round trips") {
  Tensor t;
  t.shape = {0};
  std::stringstream ss;
  write_tensor(ss, t);
  Tensor back = read_tensor(ss);
  CHECK(back.shape == t.shape);
  CHECK(back.data.empty());
}

TEST_CASE("matrix and vector helpers preserve layout") {
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  Tensor t = Tensor::from_matrix(m);
  REQUIRE(t.shape == std::vector<std::size_t>{2, 3});
  // Row-major payload.
  CHECK(t.data[0] == 1);
  CHECK(t.data[1] == 2);
  CHECK(t.data[3] == 4);
  Matrix back = t.to_matrix();
  CHECK(back.isApprox(m));

  Vector v(4);
  v << 9, 8, 7, 6;
  Tensor tv = Tensor::from_vector(v);
  CHECK(tv.to_vector().isApprox(v));
}

TEST_CASE("slice_matrix extracts one page of a rank-3 tensor") {
  Tensor t;
  t.shape = {2, 3, 4};
  t.data.resize(24);
  for (std::size_t i = 0; i < 24; ++i) t.data[i] = static_cast<double>(i);
  Matrix page1 = t.slice_matrix(1);
  REQUIRE(page1.rows() == 3);
  REQUIRE(page1.cols() == 4);
  CHECK(page1(0, 0) == 12.0);
  CHECK(page1(2, 3) == 23.0);
}

TEST_CASE("corrupt streams are rejected") {
  Tensor t;
  t.shape = {2, 2};
  t.data = {1, 2, 3, 4};
  std::stringstream ss;
  write_tensor(ss, t);
  std::string raw = ss.str();

  SUBCASE("bad magic") {
    std::string bad = raw;
    bad[0] = 'X';
    std::stringstream in(bad);
    CHECK_THROWS_AS(read_tensor(in), ConfigError);
  }
  SUBCASE("truncated payload") {
    std::stringstream in(raw.substr(0, raw.size() - 5));
    CHECK_THROWS_AS(read_tensor(in), ConfigError);
  }
  SUBCASE("truncated header") {
    std::stringstream in(raw.substr(0, 6));
    CHECK_THROWS_AS(read_tensor(in), ConfigError);
  }
}

TEST_CASE("file save and load") {
  auto path = std::filesystem::temp_directory_path() / "ces_roundtrip.tnsr";
  Tensor t;
  t.shape = {5};
  t.data = {0.1, 0.2, 0.3, 0.4, 0.5};
  save_tensor(path.string(), t);
  Tensor back = load_tensor(path.string());
  CHECK(back.shape == t.shape);
  for (int i = 0; i < 5; ++i) CHECK(bit_equal(back.data[i], t.data[i]));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_tensor(path.string()), ConfigError);
}
