#pragma once

#include <filesystem>
#include <vector>

namespace timecast::pgm {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // [0,1]
};

// Binary P5, maxval 65535, MSB first, value = round(v * 65535).
void write_pgm16(const std::filesystem::path& path, int width, int height,
                 const std::vector<float>& values);
Image read_pgm16(const std::filesystem::path& path);

// Binary P5, maxval 255 (contact sheets).
void write_pgm8(const std::filesystem::path& path, int width, int height,
                const std::vector<float>& values);

}  // namespace timecast::pgm
