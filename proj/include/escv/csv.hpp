#pragma once
#include <escv/dataset.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

namespace escv {

/*
 * CSV syntax or content error. row and column are 1-based positions in the
 * file (the header is row 1).
 */
class ParseError : public Error
{
public:
    ParseError(const std::string& msg, std::size_t row, std::size_t col)
        : Error("row " + std::to_string(row) + ", column " + std::to_string(col) + ": " + msg),
          row_(row), col_(col)
    {}

    std::size_t row() const { return row_; }
    std::size_t column() const { return col_; }

private:
    std::size_t row_;
    std::size_t col_;
};

namespace csv {

using Record = std::vector<std::string>;

// Shortest decimal that is round-trip exact is not required; 17 significant
// digits always round-trips a double.
inline std::string format_double(double v)
{
    char buf[32];
    const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(len));
}

inline std::string quote(std::string_view field)
{
    const bool needs = field.find_first_of(",\"\r\n") != std::string_view::npos
                    || (!field.empty() && (field.front() == ' ' || field.back() == ' '));
    if (!needs) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline void write_record(std::ostream& os, const Record& rec)
{
    for (std::size_t k = 0; k < rec.size(); ++k) {
        if (k) os << ',';
        os << quote(rec[k]);
    }
    os << '\n';
}

/*
 * RFC-4180 reader: quoted fields may contain commas, CR/LF and doubled
 * quotes; records end at LF or CRLF. Blank lines are skipped.
 */
inline std::vector<Record> parse(std::string_view text)
{
    std::vector<Record> records;
    Record rec;
    std::string field;
    std::size_t row = 1;
    std::size_t i = 0;
    bool field_started = false;
    bool record_has_content = false;

    auto end_field = [&] {
        rec.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(rec));
        rec.clear();
        record_has_content = false;
        ++row;
    };

    while (i < text.size()) {
        const char c = text[i];
        if (!field_started && c == '"') {
            field_started = true;
            record_has_content = true;
            ++i;
            bool closed = false;
            while (i < text.size()) {
                if (text[i] == '"') {
                    if (i + 1 < text.size() && text[i + 1] == '"') {
                        field += '"';
                        i += 2;
                    } else {
                        ++i;
                        closed = true;
                        break;
                    }
                } else {
                    if (text[i] == '\n') ++row;
                    field += text[i++];
                }
            }
            if (!closed) throw ParseError("unterminated quoted field", row, rec.size() + 1);
            if (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
                throw ParseError("unexpected character after closing quote", row, rec.size() + 1);
            }
            continue;
        }
        if (c == ',') {
            record_has_content = true;
            end_field();
            ++i;
        } else if (c == '\n' || (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n')) {
            if (record_has_content || field_started || !rec.empty()) {
                end_record();
            } else {
                ++row;  // blank line
            }
            i += c == '\r' ? 2 : 1;
        } else {
            field_started = true;
            record_has_content = true;
            field += c;
            ++i;
        }
    }
    if (record_has_content || field_started) end_record();
    return records;
}

inline std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline double parse_double(std::string_view cell, std::size_t row, std::size_t col)
{
    while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
    while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
    if (cell.empty()) throw ParseError("missing value", row, col);
    if (cell.front() == '+') cell.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw ParseError("non-numeric value '" + std::string(cell) + "'", row, col);
    }
    if (!std::isfinite(v)) throw ParseError("non-finite value", row, col);
    return v;
}

} // namespace csv

/*
 * Which column holds the response when loading. Default: the first column.
 */
using ResponseColumn = std::variant<std::monostate, std::size_t, std::string>;

/*
 * Load a dataset from a CSV file with a header row. By default the first
 * column is the response; `response` selects another column by 0-based
 * index or header name. The result is unstandardized.
 */
inline Dataset load_csv_text(std::string_view text, const ResponseColumn& response = {})
{
    const auto records = csv::parse(text);
    if (records.empty()) throw ParseError("empty file", 1, 1);
    const auto& header = records.front();
    const std::size_t width = header.size();
    if (width < 2) throw ParseError("need a response and at least one predictor column", 1, 1);

    std::size_t ycol = 0;
    if (const auto* idx = std::get_if<std::size_t>(&response)) {
        if (*idx >= width) throw ParseError("response column index out of range", 1, *idx + 1);
        ycol = *idx;
    } else if (const auto* name = std::get_if<std::string>(&response)) {
        auto it = std::find(header.begin(), header.end(), *name);
        if (it == header.end()) throw ParseError("no column named '" + *name + "'", 1, 1);
        ycol = static_cast<std::size_t>(it - header.begin());
    }

    const auto n = static_cast<Index>(records.size() - 1);
    const auto p = static_cast<Index>(width - 1);
    Vector y(n);
    Matrix x(n, p);
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() != width) {
            throw ParseError("expected " + std::to_string(width) + " fields, found "
                                 + std::to_string(rec.size()),
                             r + 1, std::min(rec.size(), width) + 1);
        }
        Index j = 0;
        for (std::size_t c = 0; c < width; ++c) {
            const double v = csv::parse_double(rec[c], r + 1, c + 1);
            if (c == ycol) {
                y(static_cast<Index>(r - 1)) = v;
            } else {
                x(static_cast<Index>(r - 1), j++) = v;
            }
        }
    }

    Dataset ds = make_dataset(std::move(y), std::move(x));
    ds.names.clear();
    ds.names.push_back(header[ycol]);
    for (std::size_t c = 0; c < width; ++c) {
        if (c != ycol) ds.names.push_back(header[c]);
    }
    return ds;
}

inline Dataset load_csv(const std::string& path, const ResponseColumn& response = {})
{
    return load_csv_text(csv::read_file(path), response);
}

// Response first, then predictors; values at 17 significant digits.
inline void write_csv(std::ostream& os, const Dataset& ds)
{
    csv::Record rec = ds.names.size() == static_cast<std::size_t>(ds.p() + 1)
                          ? ds.names
                          : default_names(ds.p());
    csv::write_record(os, rec);
    for (Index i = 0; i < ds.n(); ++i) {
        rec.clear();
        rec.push_back(csv::format_double(ds.y(i)));
        for (Index j = 0; j < ds.p(); ++j) rec.push_back(csv::format_double(ds.x(i, j)));
        csv::write_record(os, rec);
    }
}

inline void save_csv(const Dataset& ds, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    write_csv(out, ds);
}

} // namespace escv
