#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "tdr/io.hpp"

using namespace tdr;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
  const fs::path p = fs::temp_directory_path() / "tdr_io_tests";
  fs::create_directories(p);
  return p / name;
}

}  // namespace

TEST_CASE("tensor files round-trip values, mask and dims bit-exactly") {
  std::mt19937_64 rng(41);
  const fs::path file = temp_file("roundtrip.tpd1");
  for (int seed = 0; seed < 10; ++seed) {
    Tensor4d t = oracle::random_tensor(rng, {3, 2, 4, 1 + seed % 3}, seed % 2 ? 0.4 : 0.0);
    write_tensor(file, t);
    const Tensor4d back = read_tensor(file);
    CHECK(back.dims() == t.dims());
    CHECK(back.values() == t.values());
    CHECK((back.mask() == t.mask()).all());
  }

  // all-missing and all-observed masks
  Tensor4d none = oracle::random_tensor(rng, {2, 2, 3, 2});
  none.mask().setConstant(false);
  none = project_omega(none);
  write_tensor(file, none);
  CHECK((read_tensor(file).mask() == false).all());

  Tensor4d all = oracle::random_tensor(rng, {2, 2, 3, 2});
  write_tensor(file, all);
  CHECK(read_tensor(file).mask().all());
}

TEST_CASE("order-3 tensor files carry single streams") {
  std::mt19937_64 rng(43);
  Tensor4d stream = oracle::random_tensor(rng, {4, 3, 5, 1}, 0.2);
  const fs::path file = temp_file("stream.tpd1");
  write_tensor(file, stream, 3);
  const Tensor4d back = read_tensor(file);
  CHECK(back.dims() == stream.dims());
  CHECK(back.values() == stream.values());

  Tensor4d batch = oracle::random_tensor(rng, {2, 2, 2, 3});
  CHECK_THROWS_AS(write_tensor(file, batch, 3), std::invalid_argument);
}

TEST_CASE("matrix files round-trip") {
  std::mt19937_64 rng(47);
  const MatrixX<double> m = oracle::random_matrix(rng, 3, 7);
  const fs::path file = temp_file("factor.tpd1");
  write_matrix(file, m);
  CHECK(read_matrix(file) == m);
}

TEST_CASE("unobserved values are stored as zero on disk") {
  Tensor4d t(2, 1, 1, 1);
  t.values() << 5.0, 7.0;
  t.set_observed(1, 0, 0, 0, false);  // 7 is masked but not zeroed in memory
  const fs::path file = temp_file("projected.tpd1");
  write_tensor(file, t);
  const Tensor4d back = read_tensor(file);
  CHECK(back.values()[0] == 5.0);
  CHECK(back.values()[1] == 0.0);
}

TEST_CASE("corrupt headers are rejected") {
  const fs::path file = temp_file("bad.tpd1");
  {
    std::ofstream os(file, std::ios::binary);
    os << "NOPE";
  }
  CHECK_THROWS(read_tpd1(file));
  CHECK_THROWS(read_tpd1(temp_file("does_not_exist.tpd1")));
}
