// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace vspec {

/// Shortest decimal that round-trips to the same value.
std::string format_float(double v);
std::string format_float(float v);

/// Parsed CSV: header plus rows of string fields. No quoting; fields never contain commas.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position by name; throws DataError when absent.
  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(std::istream& is);

void write_csv_row(std::ostream& os, const std::vector<std::string>& fields);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

}  // namespace vspec
