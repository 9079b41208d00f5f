#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <vector>

#include "mudlab/codebook.hpp"
#include "mudlab/rng.hpp"
#include "mudlab/signal_io.hpp"

using namespace mudlab;

namespace {

std::filesystem::path scratch(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "mudlab_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("codebook") {

TEST_CASE("rng: uniform moments and normal moments") {
  Rng rng(11);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    s += u;
  }
  CHECK(std::abs(s / n - 0.5) < 3 * std::sqrt(1.0 / 12.0 / n) + 1e-12);
  s = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.standard_normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 4 / std::sqrt(double(n)));
  CHECK(std::abs(s2 / n - 1.0) < 4 * std::sqrt(2.0 / n));
}

TEST_CASE("rng: complex normal variance splits evenly") {
  Rng rng(3);
  const int n = 200000;
  double re2 = 0, im2 = 0;
  for (int i = 0; i < n; ++i) {
    const auto z = rng.complex_normal(0.5);
    re2 += z.real() * z.real();
    im2 += z.imag() * z.imag();
  }
  CHECK(re2 / n == doctest::Approx(0.25).epsilon(0.02));
  CHECK(im2 / n == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("rng: child seeds depend only on their arguments") {
  CHECK(child_seed(1, 10, 3) == child_seed(1, 10, 3));
  CHECK(child_seed(1, 10, 3) != child_seed(1, 10, 4));
  CHECK(child_seed(1, 10, 3) != child_seed(2, 10, 3));
  CHECK(child_seed(1, 10, 3) != child_seed(1, 11, 3));
}

TEST_CASE("rng: uniform_index covers the range evenly") {
  Rng rng(5);
  std::vector<int> hits(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++hits[rng.uniform_index(7)];
  const double p = 1.0 / 7, se = std::sqrt(p * (1 - p) / n);
  for (int h : hits) CHECK(std::abs(double(h) / n - p) < 4 * se);
}

TEST_CASE("generate: entries are +-1 and columns distinct") {
  const auto C = generate_code_matrix(4, 8, 7);
  CHECK(C.L() == 4);
  CHECK(C.K() == 8);
  for (Eigen::Index l = 0; l < 4; ++l)
    for (Eigen::Index j = 0; j < 8; ++j) CHECK(std::abs(C.entries()(l, j)) == 1.0);
  std::set<std::vector<double>> cols;
  for (Eigen::Index j = 0; j < 8; ++j)
    cols.insert(std::vector<double>(C.column(j).begin(), C.column(j).end()));
  CHECK(cols.size() == 8);
}

TEST_CASE("generate: distinct columns over many seeds") {
  // 2^8 patterns for 64 columns: raw draws collide often, so redrawing is exercised.
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto C = generate_code_matrix(8, 64, seed);
    std::set<std::vector<double>> cols;
    for (Eigen::Index j = 0; j < 64; ++j)
      cols.insert(std::vector<double>(C.column(j).begin(), C.column(j).end()));
    CHECK(cols.size() == 64);
  }
}

TEST_CASE("generate: deterministic in the seed") {
  CHECK(generate_code_matrix(4, 8, 7) == generate_code_matrix(4, 8, 7));
  CHECK(!(generate_code_matrix(4, 8, 7) == generate_code_matrix(4, 8, 8)));
}

TEST_CASE("generate: 144 x 256") {
  const auto C = generate_code_matrix(144, 256, 42);
  CHECK(C.L() == 144);
  CHECK(C.K() == 256);
  CHECK(C.entries().cwiseAbs().minCoeff() == 1.0);
  CHECK(C.entries().cwiseAbs().maxCoeff() == 1.0);
  // Balanced fair coin: fraction of +1 near 1/2.
  const double plus = (C.entries().array() > 0).cast<double>().mean();
  CHECK(std::abs(plus - 0.5) < 4 * std::sqrt(0.25 / (144 * 256)));
}

TEST_CASE("constructor rejects bad entries and undercomplete shapes") {
  Eigen::MatrixXd m(2, 2);
  m << 1, 0, 1, -1;
  CHECK_THROWS_AS(CodeMatrix{m}, std::invalid_argument);
  CHECK_THROWS_AS(CodeMatrix{Eigen::MatrixXd::Ones(3, 2)}, std::invalid_argument);
}

TEST_CASE("without_column drops exactly one column") {
  const auto C = generate_code_matrix(4, 8, 7);
  const auto R = C.without_column(2);
  REQUIRE(R.cols() == 7);
  CHECK(R.col(1) == C.column(1));
  CHECK(R.col(2) == C.column(3));
  CHECK(C.column_sum().isApprox(C.entries() * Eigen::VectorXd::Ones(8)));
}

TEST_CASE("save/load round trip") {
  const auto C = generate_code_matrix(4, 8, 7);
  const auto path = scratch("codes.txt");
  save_code_matrix(C, path);
  CHECK(load_code_matrix(path) == C);
  CHECK(parse_code_matrix(format_code_matrix(C)) == C);
}

TEST_CASE("parse error at a zero entry names the coordinates") {
  const std::string text = "2 3\n+1 -1 +1\n-1 0 +1\n";
  try {
    parse_code_matrix(text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.row() == 2);
    CHECK(e.col() == 2);
  }
}

TEST_CASE("ragged rows are rejected") {
  const std::string text = "2 3\n+1 -1 +1\n-1 +1\n";
  try {
    parse_code_matrix(text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("ragged") != std::string::npos);
    CHECK(e.row() == 2);
  }
  CHECK_THROWS_AS(parse_code_matrix("2 3\n+1 -1 +1 +1\n-1 +1 -1\n"), ParseError);
  CHECK_THROWS_AS(parse_code_matrix("2 3\n+1 -1 +1\n"), ParseError);
}

TEST_CASE("signal files round trip exactly") {
  Rng rng(9);
  Eigen::VectorXcd y(5);
  for (Eigen::Index i = 0; i < 5; ++i) y(i) = rng.complex_normal(1.0);
  CHECK(parse_received(format_received(y)) == y);
  Eigen::MatrixXd D = Eigen::MatrixXd::Random(3, 4);
  CHECK(parse_real_matrix(format_real_matrix(D)) == D);
  CHECK_THROWS_AS(parse_received("1 2\n3\n"), ParseError);
  CHECK_THROWS_AS(parse_real_matrix("2 2\n1 2\n3 x\n"), ParseError);
}

}  // TEST_SUITE
