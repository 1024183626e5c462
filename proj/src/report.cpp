#include "disparity/report.hpp"

#include <cctype>
#include <sstream>

namespace disparity {

std::string markdown_table(const CsvTable& table) {
    std::ostringstream os;
    os << "|";
    for (const auto& h : table.header) os << " " << h << " |";
    os << "\n|";
    for (std::size_t i = 0; i < table.header.size(); ++i) os << " --- |";
    os << "\n";
    for (const auto& row : table.rows) {
        os << "|";
        for (const auto& cell : row) os << " " << (cell.empty() ? " " : cell) << " |";
        os << "\n";
    }
    return os.str();
}

std::string slug(const std::string& name) {
    std::string out;
    for (char ch : name) {
        if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '.' ||
            ch == '_') {
            out.push_back(ch);
        } else {
            out.push_back('_');
        }
    }
    return out;
}

}  // namespace disparity
