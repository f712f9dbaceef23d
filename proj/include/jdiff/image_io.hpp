#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace jdiff {

// Binary PGM (P5), one channel, row-major u8.
void write_pgm(const std::string& path, const std::vector<uint8_t>& pixels, int h, int w);

// Binary PPM (P6), interleaved RGB u8.
void write_ppm(const std::string& path, const std::vector<uint8_t>& rgb, int h, int w);

// Tile a batch of single-channel u8 images [n][h*w] into one grid image with
// `cols` images per row and a 1-pixel separator, then write it as PGM.
void write_pgm_grid(const std::string& path, const std::vector<std::vector<uint8_t>>& images, int h, int w, int cols);

}  // namespace jdiff
