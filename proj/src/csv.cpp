#include "trendmine/csv.hpp"

#include "trendmine/errors.hpp"

namespace trendmine::csv {

std::vector<Row> parse(std::string_view text) {
    std::vector<Row> rows;
    Row current;
    std::string field;
    bool in_quotes = false;
    bool row_started = false;
    size_t line = 1;
    size_t row_first_line = 1;

    auto end_field = [&] {
        if (!row_started) row_first_line = line;
        current.fields.push_back(std::move(field));
        field.clear();
        row_started = true;
    };
    auto end_row = [&] {
        end_field();
        current.line_number = row_first_line;
        rows.push_back(std::move(current));
        current = Row{};
        row_started = false;
    };

    for (size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!field.empty())
                    throw input_error("line " + std::to_string(line) +
                                      ": quote inside unquoted field");
                in_quotes = true;
                if (!row_started) row_first_line = line;
                row_started = true;
                break;
            case ',':
                end_field();
                break;
            case '\r':
                break;  // swallow; the \n ends the row
            case '\n':
                end_row();
                ++line;
                break;
            default:
                field.push_back(c);
                break;
        }
    }
    if (in_quotes)
        throw input_error("line " + std::to_string(row_first_line) +
                          ": unterminated quoted field");
    if (row_started || !field.empty()) end_row();
    return rows;
}

std::string escape_field(std::string_view field) {
    const bool needs_quote =
        field.find_first_of(",\"\n\r") != std::string_view::npos;
    if (!needs_quote) return std::string(field);
    std::string out;
    out.reserve(field.size() + 2);
    out.push_back('"');
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string join_row(const std::vector<std::string>& fields) {
    std::string out;
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += escape_field(fields[i]);
    }
    out.push_back('\n');
    return out;
}

}  // namespace trendmine::csv
