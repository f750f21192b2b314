#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace trendmine::csv {

struct Row {
    std::vector<std::string> fields;
    size_t line_number = 0;  // 1-based, of the row's first physical line
};

// RFC-4180-style parse: comma separated, double-quote quoting, "" escapes a
// quote, quoted fields may contain commas and newlines. CRLF tolerated.
std::vector<Row> parse(std::string_view text);

// Quotes a field only when it contains a comma, quote, or newline.
std::string escape_field(std::string_view field);

std::string join_row(const std::vector<std::string>& fields);

}  // namespace trendmine::csv
