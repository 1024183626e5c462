#pragma once

#include <string>

#include "disparity/csv.hpp"

namespace disparity {

// Renders a CSV table as a GitHub-style markdown table.
std::string markdown_table(const CsvTable& table);

// Filesystem-safe slug for model/benchmark names used in file names.
std::string slug(const std::string& name);

}  // namespace disparity
