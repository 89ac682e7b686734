#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ahop/error.hpp"
#include "ahop/linalg.hpp"

namespace ahop {

enum class PatternRole { Memory, Query };

/// d x N matrix whose columns are patterns, with its max-abs entry cached.
class PatternMatrix {
 public:
  PatternMatrix() = default;

  explicit PatternMatrix(Matrix data, PatternRole role = PatternRole::Memory)
      : data_(std::move(data)), role_(role) {
    require(data_.rows() >= 1, ErrorCode::InvalidArgument, "PatternMatrix: dimension must be >= 1");
    max_norm_ = max_abs(data_);
  }

  const Matrix& data() const { return data_; }
  PatternRole role() const { return role_; }
  int dim() const { return static_cast<int>(data_.rows()); }
  int count() const { return static_cast<int>(data_.cols()); }
  double max_norm() const { return max_norm_; }
  auto pattern(int i) const { return data_.col(i); }

  /// Largest column 2-norm (the sphere radius m of the pattern set).
  double radius() const { return data_.cols() == 0 ? 0.0 : data_.colwise().norm().maxCoeff(); }

 private:
  Matrix data_;
  PatternRole role_ = PatternRole::Memory;
  double max_norm_ = 0.0;
};

namespace io {

/// Writes through a temporary sibling and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, ErrorCode::IoError, "rename to " + path.string() + " failed: " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Shortest round-trip representation of a double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Strict decimal parse of a whole CSV cell (surrounding blanks allowed).
inline double parse_double(std::string_view cell, std::string_view what) {
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || end != cell.data() + cell.size())
    fail(ErrorCode::IoError, std::string(what) + ": cannot parse '" + std::string(cell) + "' as a number");
  return v;
}

// CSV layout: first line "dim=<d>", then one pattern per line.
inline std::string patterns_to_csv(const Matrix& data) {
  std::string out = "dim=" + std::to_string(data.rows()) + "\n";
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      if (i) out += ',';
      out += format_double(data(i, j));
    }
    out += '\n';
  }
  return out;
}

inline Matrix patterns_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::IoError, "pattern CSV: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line.rfind("dim=", 0) == 0, ErrorCode::IoError, "pattern CSV: header must be dim=<d>");
  const int d = static_cast<int>(parse_double(std::string_view(line).substr(4), "pattern CSV header"));
  require(d >= 1, ErrorCode::IoError, "pattern CSV: dim must be >= 1");
  std::vector<double> values;
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    int count = 0;
    while (std::getline(fields, cell, ',')) {
      values.push_back(parse_double(cell, "pattern CSV"));
      ++count;
    }
    require(count == d, ErrorCode::IoError,
            "pattern CSV: row " + std::to_string(rows + 1) + " has " + std::to_string(count) + " values, expected " +
                std::to_string(d));
    ++rows;
  }
  Matrix out(d, rows);
  for (int j = 0; j < rows; ++j)
    for (int i = 0; i < d; ++i) out(i, j) = values[static_cast<std::size_t>(j) * d + i];
  return out;
}

// Binary layout (little endian): "AHOP", u32 d, u32 N, u32 reserved = 0,
// then N patterns of d float64 values each.
inline std::string patterns_to_binary(const Matrix& data) {
  static_assert(std::endian::native == std::endian::little, "binary pattern I/O assumes a little-endian host");
  std::string out("AHOP", 4);
  const std::uint32_t header[3] = {static_cast<std::uint32_t>(data.rows()), static_cast<std::uint32_t>(data.cols()), 0};
  out.append(reinterpret_cast<const char*>(header), sizeof header);
  out.append(reinterpret_cast<const char*>(data.data()), static_cast<std::size_t>(data.size()) * sizeof(double));
  return out;
}

inline Matrix patterns_from_binary(const std::string& bytes) {
  require(bytes.size() >= 16 && bytes.compare(0, 4, "AHOP") == 0, ErrorCode::IoError, "pattern binary: bad magic");
  std::uint32_t header[3];
  std::memcpy(header, bytes.data() + 4, sizeof header);
  const std::size_t expected = 16 + static_cast<std::size_t>(header[0]) * header[1] * sizeof(double);
  require(bytes.size() == expected, ErrorCode::IoError, "pattern binary: payload size mismatch");
  require(header[0] >= 1, ErrorCode::IoError, "pattern binary: dim must be >= 1");
  Matrix out(header[0], header[1]);
  std::memcpy(out.data(), bytes.data() + 16, expected - 16);
  return out;
}

inline bool has_binary_magic(const std::string& bytes) { return bytes.size() >= 4 && bytes.compare(0, 4, "AHOP") == 0; }

inline PatternMatrix load_patterns(const std::filesystem::path& path, PatternRole role) {
  const auto bytes = read_file(path);
  return PatternMatrix(has_binary_magic(bytes) ? patterns_from_binary(bytes) : patterns_from_csv(bytes), role);
}

}  // namespace io
}  // namespace ahop
