#include "trailermatch/io_util.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace trailermatch {

namespace fs = std::filesystem;

void atomic_write_file(const fs::path& path, const std::string& bytes) {
  fs::path dir = path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for read: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

static void append_double(std::string& out, double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  out += buf;
}

std::string format_matrix(const Mat& m) {
  std::string out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out += ' ';
      append_double(out, m(i, j));
    }
    out += '\n';
  }
  return out;
}

std::string format_vector(const Vec& v) {
  std::string out;
  for (Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ' ';
    append_double(out, v(i));
  }
  out += '\n';
  return out;
}

Mat parse_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    double x;
    while (ls >> x) row.push_back(x);
    if (!ls.eof() && ls.fail()) throw std::invalid_argument("bad number in matrix text");
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("empty matrix text");
  const std::size_t cols = rows.front().size();
  Mat m(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw std::invalid_argument("ragged matrix text");
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return m;
}

Vec parse_vector(const std::string& text) {
  std::istringstream ss(text);
  std::vector<double> vals;
  double x;
  while (ss >> x) vals.push_back(x);
  if (!ss.eof() && ss.fail()) throw std::invalid_argument("bad number in vector text");
  if (vals.empty()) throw std::invalid_argument("empty vector text");
  Vec v(static_cast<Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) v(static_cast<Index>(i)) = vals[i];
  return v;
}

LogLevel log_level() {
  static const LogLevel cached = [] {
    const char* env = std::getenv("TRAILERMATCH_LOG");
    if (!env) return LogLevel::Info;
    const std::string s(env);
    if (s == "quiet") return LogLevel::Quiet;
    if (s == "error") return LogLevel::Error;
    if (s == "warn") return LogLevel::Warn;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return cached;
}

void log_message(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  const char* tag = "info";
  switch (level) {
    case LogLevel::Error: tag = "error"; break;
    case LogLevel::Warn: tag = "warn"; break;
    case LogLevel::Debug: tag = "debug"; break;
    default: break;
  }
  std::cerr << "[" << tag << "] " << msg << "\n";
}

}  // namespace trailermatch
