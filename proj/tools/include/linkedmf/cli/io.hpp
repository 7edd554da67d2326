#ifndef LINKEDMF_CLI_IO_HPP
#define LINKEDMF_CLI_IO_HPP

#include "linkedmf/types.hpp"

#include <filesystem>
#include <string>

namespace linkedmf::cli {

struct LoadedMatrix {
  Matrix values;  // missing entries hold 0
  Mask mask;      // true = missing
};

/// Reads a delimited numeric text file. The delimiter (tab or comma) is
/// taken from the first line; a line without either is one column. Tokens
/// "NA" and "NaN" (any case) mark missing entries. Blank lines are ignored.
LoadedMatrix load_matrix(const std::filesystem::path& path);

/// Writes `values` tab-separated with 17 significant digits; entries set in
/// `mask` (if given) are written as NA.
void write_matrix(const std::filesystem::path& path, const Matrix& values, const Mask* mask = nullptr);

/// Formats `x` with 17 significant digits.
std::string format_double(double x);

}  // namespace linkedmf::cli

#endif  // LINKEDMF_CLI_IO_HPP
