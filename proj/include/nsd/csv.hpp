#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace nsd::csv {

// Shortest round-trippable decimal form; identical inputs give identical bytes.
std::string formatDouble(double value);

// RFC 4180 quoting, applied only when the field needs it.
std::string quoteField(std::string_view field);

std::vector<std::string> splitRow(std::string_view line);

double parseDouble(const std::string& field);

// Reads a header row and the body; throws IoError when the header does not
// equal `expected` or a row has the wrong width.
std::vector<std::vector<std::string>> readTable(std::istream& in,
                                                const std::vector<std::string>& expected);

}  // namespace nsd::csv
