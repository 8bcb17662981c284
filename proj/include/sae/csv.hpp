#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sae::csv {

// One parsed line. `line` is the 1-based physical line number in the source.
struct Row {
    std::size_t line = 0;
    std::vector<std::string> cells;
};

// Comma-delimited reader with RFC-4180 style double quoting. Blank lines are
// skipped. Fields are not trimmed except for a trailing '\r'.
std::vector<Row> read(std::istream& in);

std::string escape(std::string_view cell);
std::string join(const std::vector<std::string>& cells);

std::string trim(std::string_view s);

// Strict numeric parsing: the whole (trimmed) cell must be consumed.
std::optional<double> parse_double(std::string_view cell);
std::optional<long> parse_long(std::string_view cell);

// printf("%.*g") formatting used for every real written to tabular output.
std::string format_real(double value, int significant = 6);

}  // namespace sae::csv
