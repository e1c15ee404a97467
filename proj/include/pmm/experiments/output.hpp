#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace pmm::experiments {

/// Shortest round-trip decimal form; "inf", "-inf" and "nan" for the rest.
std::string format_number(double v);

/// RFC 4180: quotes a field containing a comma, quote, CR or LF and doubles
/// embedded quotes.
std::string csv_field(std::string_view s);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  void add(std::vector<std::string> row);
  std::size_t rows() const noexcept { return rows_.size(); }
  /// Header then rows, CRLF line endings.
  void write(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace pmm::experiments
