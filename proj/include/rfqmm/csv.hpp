#pragma once

// Tidy CSV writing/reading for solver outputs.
//
// Files carry a leading comment block ("# key: value" lines) holding the
// tool version and the hash of the resolved configuration that produced
// them, then a header row, then data rows.  Readers get the metadata back
// and can verify provenance before mixing artifacts from different runs.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace rfqmm {

struct CsvTable {
    std::map<std::string, std::string> metadata;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;  // row-major, rows[i].size() == columns.size()

    std::size_t column_index(const std::string& name) const;  // throws if absent
};

/// Serialize with full round-trip precision (shortest representation that
/// parses back exactly).
std::string format_double(double x);

/// Write `table` to `path`.  Metadata keys are emitted sorted.  Throws
/// std::runtime_error on I/O failure or ragged rows.
void write_csv(const std::string& path, const CsvTable& table);

/// Parse a file produced by write_csv.  Unknown comment lines are kept as
/// metadata; non-numeric cells raise std::runtime_error with the line
/// number.
CsvTable read_csv(const std::string& path);

}  // namespace rfqmm
