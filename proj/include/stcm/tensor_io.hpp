#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "stcm/tensor.hpp"

namespace stcm {

// STCM1 layout: "STCM1\n" | u32 rank | rank x u32 extents | f32 values (all little-endian,
// row-major, no padding).

void write_tensor(std::ostream& out, const Tensor& t);
void write_tensor(const std::filesystem::path& path, const Tensor& t);

/// Throws FormatError (with byte offset) on bad magic, rank outside 1..8, zero extents,
/// truncated payload, or trailing bytes.
Tensor read_tensor(std::istream& in);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace stcm
