#pragma once

#include "trailermatch/common.hpp"

#include <filesystem>
#include <string>

namespace trailermatch {

// Write-to-temp-then-rename so interrupted runs never leave partial files.
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

// Whitespace-separated text matrix / vector, one matrix row per line.
// Doubles are printed with enough digits to round-trip exactly.
std::string format_matrix(const Mat& m);
std::string format_vector(const Vec& v);
Mat parse_matrix(const std::string& text);
Vec parse_vector(const std::string& text);

enum class LogLevel { Quiet = 0, Error = 1, Warn = 2, Info = 3, Debug = 4 };

// Level comes from the TRAILERMATCH_LOG environment variable
// (quiet|error|warn|info|debug), default info.
LogLevel log_level();
void log_message(LogLevel level, const std::string& msg);

inline void log_info(const std::string& msg) { log_message(LogLevel::Info, msg); }
inline void log_warn(const std::string& msg) { log_message(LogLevel::Warn, msg); }
inline void log_error(const std::string& msg) { log_message(LogLevel::Error, msg); }
inline void log_debug(const std::string& msg) { log_message(LogLevel::Debug, msg); }

}  // namespace trailermatch
