#pragma once

#include <filesystem>

#include "fedrap/model.hpp"

namespace fedrap {

// Text dump: first line "m k", then m lines of k space-separated values
// printed with 17 significant digits.
void write_matrix_text(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_text(const std::filesystem::path& path);

// Binary dump: 8-byte magic "FRMATRX1", uint64 rows, uint64 cols, then
// rows * cols float64 values, row-major, all little-endian.
void write_matrix_binary(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_binary(const std::filesystem::path& path);

}  // namespace fedrap
