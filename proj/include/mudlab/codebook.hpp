#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace mudlab {

// Raised for malformed matrix files. Carries the offending 1-based position
// when one applies (0 otherwise).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t row = 0, std::size_t col = 0)
      : std::runtime_error(what), row_(row), col_(col) {}
  std::size_t row() const { return row_; }
  std::size_t col() const { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

// L x K bank of BPSK codes; column j is the code transmitted on the L
// bandwidth-request subcarriers by whoever picks index j.
class CodeMatrix {
 public:
  // Validates that every entry is +-1 and that L <= K. Generated banks are
  // strictly overcomplete; square banks are accepted for hand-built examples.
  explicit CodeMatrix(Eigen::MatrixXd entries);

  const Eigen::MatrixXd& entries() const { return entries_; }
  Eigen::Index L() const { return entries_.rows(); }
  Eigen::Index K() const { return entries_.cols(); }

  auto column(Eigen::Index j) const { return entries_.col(j); }

  // Sum of all code columns.
  Eigen::VectorXd column_sum() const { return entries_.rowwise().sum(); }

  // Copy without column `skip`.
  Eigen::MatrixXd without_column(Eigen::Index skip) const;

  bool operator==(const CodeMatrix& other) const { return entries_ == other.entries_; }

 private:
  Eigen::MatrixXd entries_;
};

// i.i.d. fair +-1 draws keyed by seed; duplicate columns are redrawn.
CodeMatrix generate_code_matrix(Eigen::Index L, Eigen::Index K, std::uint64_t seed);

// Text format: a "L K" header line followed by L rows of "+1"/"-1" tokens.
void save_code_matrix(const CodeMatrix& codes, const std::filesystem::path& path);
CodeMatrix load_code_matrix(const std::filesystem::path& path);

std::string format_code_matrix(const CodeMatrix& codes);
CodeMatrix parse_code_matrix(const std::string& text);

}  // namespace mudlab
