#pragma once

#include <string>
#include <vector>

namespace ergolab {

/// Round-trip decimal form (%.17g). Output is locale independent.
std::string format_double(double value);

/// Writes a comma-separated table with a header line. Throws IoError.
void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);

/// Convenience for all-numeric rows.
void write_numeric_table(const std::string& path, const std::vector<std::string>& header,
                         const std::vector<std::vector<double>>& rows);

}  // namespace ergolab
