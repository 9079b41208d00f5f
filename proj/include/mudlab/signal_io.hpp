#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>

namespace mudlab {

// Received signal: one subcarrier per line, "re im".
std::string format_received(const Eigen::VectorXcd& y);
Eigen::VectorXcd parse_received(const std::string& text);
void save_received(const Eigen::VectorXcd& y, const std::filesystem::path& path);
Eigen::VectorXcd load_received(const std::filesystem::path& path);

// Real matrix: "rows cols" header, then one row per line. Values are written
// with 17 significant digits so a round trip is exact.
std::string format_real_matrix(const Eigen::MatrixXd& m);
Eigen::MatrixXd parse_real_matrix(const std::string& text);
void save_real_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& path);
Eigen::MatrixXd load_real_matrix(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mudlab
