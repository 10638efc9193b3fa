// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "rmmb/matrix.hpp"

namespace rmmb {

// One row per line, comma-separated decimals. Blank lines are skipped.
// Throws ShapeError on ragged rows and DomainError on unparsable or
// non-finite fields.
std::vector<std::vector<double>> read_csv_rows(std::istream& in);
Matrix read_matrix_csv(std::istream& in);
Matrix read_matrix_csv(const std::filesystem::path& path);

// %.17g so that reading back is lossless.
void write_matrix_csv(std::ostream& out, const Matrix& m);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

}  // namespace rmmb
