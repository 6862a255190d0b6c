// Copyright 2026 The attnlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace attnlab::harness {

/// 17 significant digits, so parsing the text gives back the same double.
/// Non-finite values print as nan, inf, -inf.
std::string format_double(double value);

/// format_double, or "nan" for a missing (diverged) value.
std::string format_optional(const std::optional<double>& value);

/// Accumulates rows and writes them with '\n' line endings.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  /// Throws std::invalid_argument when the cell count differs from the header.
  void add_row(std::vector<std::string> cells);
  std::size_t row_count() const { return rows_.size(); }
  std::string str() const;
  /// Throws std::runtime_error when the file cannot be written.
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Quotes a cell if it holds a comma, quote or newline.
std::string csv_escape(const std::string& cell);

/// Minimal reader for files produced by CsvWriter (quoted cells supported).
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

}  // namespace attnlab::harness
