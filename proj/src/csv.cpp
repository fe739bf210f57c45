#include "nsd/csv.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <system_error>

#include <fmt/format.h>

#include "nsd/errors.hpp"

namespace nsd::csv {

std::string formatDouble(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  return fmt::format("{}", value);
}

std::string quoteField(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> splitRow(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current += c;
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

double parseDouble(const std::string& field) {
  if (field == "nan") return std::nan("");
  if (field == "inf") return INFINITY;
  if (field == "-inf") return -INFINITY;
  double value = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw IoError("malformed number in CSV: '" + field + "'");
  return value;
}

std::vector<std::vector<std::string>> readTable(std::istream& in,
                                                const std::vector<std::string>& expected) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("CSV is empty");
  if (splitRow(line) != expected) throw IoError("unexpected CSV header: '" + line + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = splitRow(line);
    if (row.size() != expected.size()) {
      throw IoError("CSV row has " + std::to_string(row.size()) + " fields, expected " +
                    std::to_string(expected.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace nsd::csv
