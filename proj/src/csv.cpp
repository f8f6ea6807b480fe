#include "rfqmm/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rfqmm {

std::size_t CsvTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw std::runtime_error("csv: no column named '" + name + "'");
}

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    // Shortest decimal form that round-trips: try increasing precision.
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == x) return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("csv: cannot open '" + path + "' for writing");
    for (const auto& [key, value] : table.metadata)
        out << "# " << key << ": " << value << "\n";
    for (std::size_t i = 0; i < table.columns.size(); ++i)
        out << (i ? "," : "") << table.columns[i];
    out << "\n";
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() != table.columns.size()) {
            std::ostringstream os;
            os << "csv: row " << r << " has " << row.size() << " cells, expected "
               << table.columns.size();
            throw std::runtime_error(os.str());
        }
        for (std::size_t i = 0; i < row.size(); ++i)
            out << (i ? "," : "") << format_double(row[i]);
        out << "\n";
    }
    out.flush();
    if (!out) throw std::runtime_error("csv: write failed for '" + path + "'");
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string body = strip(line.substr(1));
            const std::size_t colon = body.find(':');
            if (colon != std::string::npos)
                table.metadata[strip(body.substr(0, colon))] =
                    strip(body.substr(colon + 1));
            continue;
        }
        if (!have_header) {
            for (const std::string& cell : split(line, ','))
                table.columns.push_back(strip(cell));
            have_header = true;
            continue;
        }
        const std::vector<std::string> cells = split(line, ',');
        if (cells.size() != table.columns.size()) {
            std::ostringstream os;
            os << "csv: '" << path << "' line " << lineno << ": expected "
               << table.columns.size() << " cells, got " << cells.size();
            throw std::runtime_error(os.str());
        }
        std::vector<double> row(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const std::string cell = strip(cells[i]);
            if (cell == "nan") {
                row[i] = std::nan("");
                continue;
            }
            try {
                std::size_t used = 0;
                row[i] = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                std::ostringstream os;
                os << "csv: '" << path << "' line " << lineno
                   << ": non-numeric cell '" << cell << "'";
                throw std::runtime_error(os.str());
            }
        }
        table.rows.push_back(std::move(row));
    }
    if (!have_header) throw std::runtime_error("csv: '" + path + "' has no header row");
    return table;
}

}  // namespace rfqmm
