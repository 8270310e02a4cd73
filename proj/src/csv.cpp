#include "psw/csv.hpp"

#include "psw/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace psw {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (quoted) throw InvalidInput("unterminated quoted field in CSV line");
    fields.push_back(std::move(field));
    return fields;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw) {
    const std::string s = trim(raw);
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    if (s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan") return nan;
    double value = nan;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return nan;
    return value;
}

} // namespace

Table read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput("CSV input is empty (header row required)");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

    Table table;
    std::set<std::string> seen;
    for (auto& name : split_csv_line(line)) {
        name = trim(name);
        if (name.empty()) throw InvalidInput("CSV header has an empty column name");
        if (!seen.insert(name).second) {
            throw InvalidInput("CSV header repeats column '" + name + "'");
        }
        table.names.push_back(name);
    }
    table.columns.resize(table.names.size());

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != table.names.size()) {
            throw InvalidInput("CSV line " + std::to_string(line_no) + " has " +
                               std::to_string(fields.size()) + " fields, header has " +
                               std::to_string(table.names.size()));
        }
        for (std::size_t j = 0; j < fields.size(); ++j) {
            table.columns[j].push_back(parse_cell(fields[j]));
        }
    }
    return table;
}

Table read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open CSV file '" + path.string() + "'");
    return read_csv(in);
}

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

std::string csv_field(const std::string& text) {
    if (text.find_first_of(",\"\n") == std::string::npos) return text;
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_csv(std::ostream& out, const Table& table) {
    for (std::size_t j = 0; j < table.names.size(); ++j) {
        out << (j ? "," : "") << csv_field(table.names[j]);
    }
    out << '\n';
    for (std::size_t i = 0; i < table.rows(); ++i) {
        for (std::size_t j = 0; j < table.columns.size(); ++j) {
            out << (j ? "," : "") << format_double(table.columns[j][i]);
        }
        out << '\n';
    }
}

} // namespace psw
