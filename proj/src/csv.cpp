#include "sae/csv.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>

namespace sae::csv {

std::vector<Row> read(std::istream& in) {
    std::vector<Row> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t start_line = line_no;
        Row row;
        row.line = start_line;
        std::string cell;
        bool quoted = false;
        bool any = false;
        for (std::size_t i = 0;; ++i) {
            if (i == line.size()) {
                if (quoted) {
                    // quoted field spans a newline
                    std::string next;
                    if (!std::getline(in, next)) {
                        throw std::runtime_error("unterminated quoted field starting at line " +
                                                 std::to_string(start_line));
                    }
                    ++line_no;
                    cell.push_back('\n');
                    line = std::move(next);
                    i = static_cast<std::size_t>(-1);
                    continue;
                }
                break;
            }
            const char c = line[i];
            any = true;
            if (quoted) {
                if (c == '"') {
                    if (i + 1 < line.size() && line[i + 1] == '"') {
                        cell.push_back('"');
                        ++i;
                    } else {
                        quoted = false;
                    }
                } else {
                    cell.push_back(c);
                }
            } else if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                row.cells.push_back(std::move(cell));
                cell.clear();
            } else {
                cell.push_back(c);
            }
        }
        if (!cell.empty() && cell.back() == '\r') {
            cell.pop_back();
        }
        row.cells.push_back(std::move(cell));
        if (!any || (row.cells.size() == 1 && trim(row.cells[0]).empty())) {
            continue;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string escape(std::string_view cell) {
    if (cell.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(cell);
    }
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

std::string join(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) {
            out.push_back(',');
        }
        out += escape(cells[i]);
    }
    return out;
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::optional<double> parse_double(std::string_view cell) {
    const std::string t = trim(cell);
    if (t.empty()) {
        return std::nullopt;
    }
    double value = 0;
    const auto* end = t.data() + t.size();
    const auto res = std::from_chars(t.data(), end, value);
    if (res.ec != std::errc{} || res.ptr != end) {
        return std::nullopt;
    }
    return value;
}

std::optional<long> parse_long(std::string_view cell) {
    const std::string t = trim(cell);
    if (t.empty()) {
        return std::nullopt;
    }
    long value = 0;
    const auto* end = t.data() + t.size();
    const auto res = std::from_chars(t.data(), end, value);
    if (res.ec != std::errc{} || res.ptr != end) {
        return std::nullopt;
    }
    return value;
}

std::string format_real(double value, int significant) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", significant, value);
    return buf;
}

}  // namespace sae::csv
