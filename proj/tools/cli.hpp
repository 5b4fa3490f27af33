#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "stcm/models.hpp"

namespace stcm::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kNumeric = 3 };

/// Entry point shared by the executable and the tests. Messages go to `out` / `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

enum class FilterSource { decoder, encoder };

struct FilterImage {
  Index width = 0;
  Index height = 0;
  Index channels = 1;               // 1 -> PGM (P5), 3 -> PPM (P6)
  std::vector<unsigned char> pixels;  // row-major, interleaved for 3 channels
};

/// Tiles one layer's filters: pool groups side by side with no gap, one-pixel gaps
/// between groups and between rows, `groups_per_row` groups per row. Each filter is
/// min-max normalized to 0..255 independently; constant filters become 128.
FilterImage render_filters(const Model& model, std::size_t layer, FilterSource source, Index groups_per_row = 16);

/// Binary netpbm bytes: "P5\n<w> <h>\n255\n" or "P6\n..." followed by the pixels.
std::string encode_netpbm(const FilterImage& image);

}  // namespace stcm::cli
