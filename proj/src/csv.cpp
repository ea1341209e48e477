#include "ergolab/csv.hpp"

#include <cstdio>
#include <fstream>

#include "ergolab/error.hpp"

namespace ergolab {

std::string format_double(double value) {
    char buffer[40];
    std::snprintf(buffer, sizeof buffer, "%.17g", value);
    return buffer;
}

void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
    auto emit = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out << ',';
            out << cells[i];
        }
        out << '\n';
    };
    emit(header);
    for (const auto& row : rows) emit(row);
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path + "'");
}

void write_numeric_table(const std::string& path, const std::vector<std::string>& header,
                         const std::vector<std::vector<double>>& rows) {
    std::vector<std::vector<std::string>> text;
    text.reserve(rows.size());
    for (const auto& row : rows) {
        std::vector<std::string> cells;
        cells.reserve(row.size());
        for (double v : row) cells.push_back(format_double(v));
        text.push_back(std::move(cells));
    }
    write_table(path, header, text);
}

}  // namespace ergolab
