#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "scrambling/error.hpp"

namespace scrambling {

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Writes `content` to a sibling temporary file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  class Row {
   public:
    explicit Row(CsvTable& t) : t_(t) {}
    Row& operator<<(double v) { return add(format_number(v)); }
    Row& operator<<(int v) { return add(std::to_string(v)); }
    Row& operator<<(long v) { return add(std::to_string(v)); }
    Row& operator<<(unsigned long v) { return add(std::to_string(v)); }
    Row& operator<<(unsigned long long v) { return add(std::to_string(v)); }
    Row& operator<<(long long v) { return add(std::to_string(v)); }
    Row& operator<<(const std::string& v) { return add(v); }
    Row& operator<<(const char* v) { return add(v); }
    ~Row() noexcept(false) { t_.finish(cells_); }

   private:
    Row& add(std::string s) {
      cells_.push_back(std::move(s));
      return *this;
    }
    CsvTable& t_;
    std::vector<std::string> cells_;
  };

  Row row() { return Row(*this); }

  std::size_t rows() const { return rows_; }
  const std::vector<std::string>& header() const { return header_; }

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < header_.size(); ++i) out += (i ? "," : "") + header_[i];
    out += "\n";
    return out + body_.str();
  }

  void write(const std::filesystem::path& path) const { write_file_atomic(path, str()); }

 private:
  void finish(const std::vector<std::string>& cells) {
    if (cells.size() != header_.size())
      throw Error("csv: row has " + std::to_string(cells.size()) + " cells, header has " +
                  std::to_string(header_.size()));
    for (std::size_t i = 0; i < cells.size(); ++i) body_ << (i ? "," : "") << cells[i];
    body_ << "\n";
    ++rows_;
  }

  std::vector<std::string> header_;
  std::ostringstream body_;
  std::size_t rows_ = 0;
};

}  // namespace scrambling
