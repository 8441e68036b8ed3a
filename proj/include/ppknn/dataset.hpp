#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <gmpxx.h>

#include "ppknn/errors.hpp"

namespace ppknn {

// A categorical table after integer encoding. Attribute codes start at 0
// per column; class codes are 1..w so a class code is never confused with
// an empty slot downstream.
struct PlainTable {
  std::size_t m = 0;                            // attribute columns
  std::vector<std::vector<std::uint32_t>> rows; // encoded attributes, n x m
  std::vector<std::uint32_t> labels;            // class codes, 1..w
  std::uint32_t w = 0;                          // distinct classes

  std::size_t n() const { return rows.size(); }
};

// Bidirectional category <-> code mapping, one list per column in
// first-appearance order. Column m (one past the attributes) is the class
// column; its codes are offset by one.
struct EncodingMap {
  std::vector<std::vector<std::string>> categories;

  std::size_t attr_columns() const { return categories.empty() ? 0 : categories.size() - 1; }

  std::optional<std::uint32_t> encode(std::size_t col, const std::string& value) const {
    if (col >= categories.size()) throw ContractError("column out of range");
    const auto& cats = categories[col];
    auto it = std::find(cats.begin(), cats.end(), value);
    if (it == cats.end()) return std::nullopt;
    auto idx = static_cast<std::uint32_t>(it - cats.begin());
    return col + 1 == categories.size() ? idx + 1 : idx;
  }

  std::string decode(std::size_t col, std::uint32_t code) const {
    if (col >= categories.size()) throw ContractError("column out of range");
    bool is_class = col + 1 == categories.size();
    std::uint32_t idx = is_class ? code - 1 : code;
    if (is_class && code == 0) throw ContractError("class codes start at 1");
    if (idx >= categories[col].size()) throw ContractError("code out of range for column");
    return categories[col][idx];
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) fields.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace detail

// Reads a headerless CSV of categorical values, last column the class
// label. Codes are assigned in first-appearance order.
inline std::pair<PlainTable, EncodingMap> load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open: " + path);

  PlainTable table;
  EncodingMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> fields = detail::split_csv_line(line);
    if (fields.size() < 2)
      throw IngestError(path + ":" + std::to_string(line_no) + ": need at least one attribute and a label");
    if (table.m == 0) {
      table.m = fields.size() - 1;
      map.categories.resize(fields.size());
    } else if (fields.size() != table.m + 1) {
      throw IngestError(path + ":" + std::to_string(line_no) + ": ragged row, expected " +
                        std::to_string(table.m + 1) + " fields");
    }

    std::vector<std::uint32_t> row(table.m);
    for (std::size_t col = 0; col <= table.m; ++col) {
      const std::string& value = fields[col];
      if (value.empty())
        throw IngestError(path + ":" + std::to_string(line_no) + ": empty field in column " +
                          std::to_string(col));
      auto& cats = map.categories[col];
      auto it = std::find(cats.begin(), cats.end(), value);
      std::uint32_t idx;
      if (it == cats.end()) {
        idx = static_cast<std::uint32_t>(cats.size());
        cats.push_back(value);
      } else {
        idx = static_cast<std::uint32_t>(it - cats.begin());
      }
      if (col < table.m)
        row[col] = idx;
      else
        table.labels.push_back(idx + 1);
    }
    table.rows.push_back(std::move(row));
  }
  if (table.rows.empty()) throw IngestError(path + ": no data rows");
  table.w = static_cast<std::uint32_t>(map.categories[table.m].size());
  return {std::move(table), std::move(map)};
}

// Smallest digit count that fits every encoded attribute value.
inline unsigned attr_bits_for(const PlainTable& t) {
  std::uint32_t max_code = 0;
  for (const auto& row : t.rows)
    for (std::uint32_t v : row) max_code = std::max(max_code, v);
  unsigned bits = 1;
  while ((std::uint32_t(1) << bits) <= max_code) ++bits;
  return bits;
}

inline unsigned attr_bits_for(const EncodingMap& map) {
  std::uint32_t max_code = 0;
  for (std::size_t col = 0; col + 1 < map.categories.size(); ++col)
    if (!map.categories[col].empty())
      max_code = std::max(max_code, static_cast<std::uint32_t>(map.categories[col].size() - 1));
  unsigned bits = 1;
  while ((std::uint32_t(1) << bits) <= max_code) ++bits;
  return bits;
}

// Digit count that bounds every achievable squared distance: with m
// attributes of up to attr_bits digits each, the distance tops out at
// m*(2^attr_bits - 1)^2, so l = ceil(log2 of that + 1).
inline unsigned compute_l(std::size_t m, unsigned attr_bits) {
  if (m == 0 || attr_bits == 0) throw ContractError("need at least one attribute and one digit");
  mpz_class span = (mpz_class(1) << attr_bits) - 1;
  mpz_class worst = mpz_class(static_cast<unsigned long>(m)) * span * span;
  return static_cast<unsigned>(mpz_sizeinbase(worst.get_mpz_t(), 2));
}

// Sidecar text format, one mapping per line: column,category,code.
inline void save_encoding_map(const std::string& path, const EncodingMap& map) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IngestError("cannot open for writing: " + path);
  for (std::size_t col = 0; col < map.categories.size(); ++col) {
    bool is_class = col + 1 == map.categories.size();
    for (std::size_t i = 0; i < map.categories[col].size(); ++i)
      out << col << ',' << map.categories[col][i] << ',' << (is_class ? i + 1 : i) << '\n';
  }
  if (!out) throw IngestError("write failed: " + path);
}

inline EncodingMap load_encoding_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open: " + path);
  EncodingMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> fields = detail::split_csv_line(line);
    if (fields.size() != 3)
      throw IngestError(path + ":" + std::to_string(line_no) + ": expected column,category,code");
    std::size_t col = std::stoul(fields[0]);
    if (col >= map.categories.size()) map.categories.resize(col + 1);
    map.categories[col].push_back(fields[1]);
    // Codes are positional; verify the file agrees with the position.
    std::size_t expect = map.categories[col].size() - 1;
    std::size_t code = std::stoul(fields[2]);
    if (code != expect && code != expect + 1)
      throw IngestError(path + ":" + std::to_string(line_no) + ": code out of order");
  }
  if (map.categories.empty()) throw IngestError(path + ": empty encoding map");
  return map;
}

}  // namespace ppknn
