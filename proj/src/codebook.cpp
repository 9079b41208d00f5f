#include "mudlab/codebook.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>
#include <vector>

#include "mudlab/rng.hpp"

namespace mudlab {

namespace {

std::uint64_t column_key(const Eigen::MatrixXd& m, Eigen::Index j) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (Eigen::Index l = 0; l < m.rows(); ++l) h = mix64(h ^ (m(l, j) > 0 ? 1u : 2u));
  return h;
}

bool has_duplicate_of(const Eigen::MatrixXd& m, Eigen::Index j) {
  for (Eigen::Index k = 0; k < j; ++k)
    if (m.col(k) == m.col(j)) return true;
  return false;
}

}  // namespace

CodeMatrix::CodeMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
  if (entries_.rows() == 0 || entries_.cols() == 0)
    throw std::invalid_argument("code matrix must have L > 0 and K > 0");
  if (entries_.rows() > entries_.cols())
    throw std::invalid_argument("code matrix must have L <= K, got L=" +
                                std::to_string(entries_.rows()) +
                                " K=" + std::to_string(entries_.cols()));
  for (Eigen::Index j = 0; j < entries_.cols(); ++j)
    for (Eigen::Index l = 0; l < entries_.rows(); ++l)
      if (entries_(l, j) != 1.0 && entries_(l, j) != -1.0)
        throw std::invalid_argument("code matrix entry (" + std::to_string(l + 1) + ", " +
                                    std::to_string(j + 1) + ") is not +1/-1");
}

Eigen::MatrixXd CodeMatrix::without_column(Eigen::Index skip) const {
  Eigen::MatrixXd out(L(), K() - 1);
  for (Eigen::Index j = 0, c = 0; j < K(); ++j)
    if (j != skip) out.col(c++) = entries_.col(j);
  return out;
}

CodeMatrix generate_code_matrix(Eigen::Index L, Eigen::Index K, std::uint64_t seed) {
  if (L <= 0 || K <= 0) throw std::invalid_argument("L and K must be positive");
  if (L >= K) throw std::invalid_argument("L must be smaller than K");
  // With L < 64 the number of distinct columns can be smaller than K.
  if (L < 63 && (std::uint64_t{1} << L) < static_cast<std::uint64_t>(K))
    throw std::invalid_argument("2^L distinct codes cannot cover K columns");

  Rng rng(seed);
  Eigen::MatrixXd m(L, K);
  std::unordered_set<std::uint64_t> seen;
  for (Eigen::Index j = 0; j < K; ++j) {
    for (;;) {
      for (Eigen::Index l = 0; l < L; ++l) m(l, j) = rng.sign();
      const auto key = column_key(m, j);
      // The hash only screens; a hit is confirmed against the stored columns.
      if (!seen.contains(key) || !has_duplicate_of(m, j)) {
        seen.insert(key);
        break;
      }
    }
  }
  return CodeMatrix(std::move(m));
}

std::string format_code_matrix(const CodeMatrix& codes) {
  std::ostringstream out;
  out << codes.L() << ' ' << codes.K() << '\n';
  for (Eigen::Index l = 0; l < codes.L(); ++l) {
    for (Eigen::Index j = 0; j < codes.K(); ++j) {
      if (j) out << ' ';
      out << (codes.entries()(l, j) > 0 ? "+1" : "-1");
    }
    out << '\n';
  }
  return out.str();
}

CodeMatrix parse_code_matrix(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty code-matrix file");
  std::istringstream header(line);
  long long L = 0, K = 0;
  if (!(header >> L >> K) || L <= 0 || K <= 0)
    throw ParseError("bad header, expected \"L K\" with positive integers", 1);

  Eigen::MatrixXd m(L, K);
  for (long long l = 0; l < L; ++l) {
    if (!std::getline(in, line))
      throw ParseError("missing row " + std::to_string(l + 1), static_cast<std::size_t>(l + 1));
    std::istringstream row(line);
    std::string tok;
    long long j = 0;
    while (row >> tok) {
      if (j >= K)
        throw ParseError("ragged row " + std::to_string(l + 1) + ": more than " +
                             std::to_string(K) + " entries",
                         static_cast<std::size_t>(l + 1), static_cast<std::size_t>(j + 1));
      double v;
      if (tok == "+1" || tok == "1")
        v = 1.0;
      else if (tok == "-1")
        v = -1.0;
      else
        throw ParseError("entry \"" + tok + "\" at row " + std::to_string(l + 1) + ", column " +
                             std::to_string(j + 1) + " is not +1/-1",
                         static_cast<std::size_t>(l + 1), static_cast<std::size_t>(j + 1));
      m(l, j++) = v;
    }
    if (j != K)
      throw ParseError("ragged row " + std::to_string(l + 1) + ": " + std::to_string(j) +
                           " entries, expected " + std::to_string(K),
                       static_cast<std::size_t>(l + 1), static_cast<std::size_t>(j + 1));
  }
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos)
      throw ParseError("trailing data after " + std::to_string(L) + " rows");
  try {
    return CodeMatrix(std::move(m));
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
}

void save_code_matrix(const CodeMatrix& codes, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << format_code_matrix(codes);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

CodeMatrix load_code_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_code_matrix(buf.str());
}

}  // namespace mudlab
