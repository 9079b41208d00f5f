#include "mudlab/signal_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "mudlab/codebook.hpp"

namespace mudlab {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& tok, std::size_t row, std::size_t col) {
  double v = 0.0;
  const char* b = tok.data();
  const char* e = b + tok.size();
  if (!tok.empty() && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e)
    throw ParseError("bad number \"" + tok + "\" at row " + std::to_string(row) + ", column " +
                         std::to_string(col),
                     row, col);
  return v;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

}  // namespace

std::string format_received(const Eigen::VectorXcd& y) {
  std::string out;
  for (Eigen::Index l = 0; l < y.size(); ++l)
    out += fmt(y(l).real()) + ' ' + fmt(y(l).imag()) + '\n';
  return out;
}

Eigen::VectorXcd parse_received(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::complex<double>> vals;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (blank(line)) continue;
    std::istringstream ls(line);
    std::string a, b, extra;
    if (!(ls >> a >> b) || (ls >> extra))
      throw ParseError("line " + std::to_string(row) + ": expected \"re im\"", row);
    vals.emplace_back(parse_double(a, row, 1), parse_double(b, row, 2));
  }
  Eigen::VectorXcd y(static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) y(static_cast<Eigen::Index>(i)) = vals[i];
  return y;
}

std::string format_real_matrix(const Eigen::MatrixXd& m) {
  std::string out = std::to_string(m.rows()) + ' ' + std::to_string(m.cols()) + '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ' ';
      out += fmt(m(r, c));
    }
    out += '\n';
  }
  return out;
}

Eigen::MatrixXd parse_real_matrix(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty matrix file");
  std::istringstream header(line);
  long long R = 0, Cc = 0;
  if (!(header >> R >> Cc) || R <= 0 || Cc <= 0)
    throw ParseError("bad header, expected \"rows cols\"", 1);
  Eigen::MatrixXd m(R, Cc);
  for (long long r = 0; r < R; ++r) {
    if (!std::getline(in, line))
      throw ParseError("missing row " + std::to_string(r + 1), static_cast<std::size_t>(r + 1));
    std::istringstream ls(line);
    std::string tok;
    long long c = 0;
    while (ls >> tok) {
      if (c >= Cc)
        throw ParseError("ragged row " + std::to_string(r + 1), static_cast<std::size_t>(r + 1),
                         static_cast<std::size_t>(c + 1));
      m(r, c) = parse_double(tok, static_cast<std::size_t>(r + 1), static_cast<std::size_t>(c + 1));
      ++c;
    }
    if (c != Cc)
      throw ParseError("ragged row " + std::to_string(r + 1) + ": " + std::to_string(c) +
                           " entries, expected " + std::to_string(Cc),
                       static_cast<std::size_t>(r + 1), static_cast<std::size_t>(c + 1));
  }
  return m;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void save_received(const Eigen::VectorXcd& y, const std::filesystem::path& path) {
  write_text_file(path, format_received(y));
}

Eigen::VectorXcd load_received(const std::filesystem::path& path) {
  return parse_received(read_text_file(path));
}

void save_real_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
  write_text_file(path, format_real_matrix(m));
}

Eigen::MatrixXd load_real_matrix(const std::filesystem::path& path) {
  return parse_real_matrix(read_text_file(path));
}

}  // namespace mudlab
