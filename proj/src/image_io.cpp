#include "jdiff/image_io.hpp"

#include <fstream>
#include <stdexcept>

namespace jdiff {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("image_io: cannot open '" + path + "' for writing");
  return os;
}

}  // namespace

void write_pgm(const std::string& path, const std::vector<uint8_t>& pixels, int h, int w) {
  if ((int64_t)pixels.size() != (int64_t)h * w)
    throw std::invalid_argument("write_pgm: pixel count " + std::to_string(pixels.size()) + " != " +
                                std::to_string(h) + "x" + std::to_string(w));
  auto os = open_out(path);
  os << "P5\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(pixels.data()), (std::streamsize)pixels.size());
  if (!os) throw std::runtime_error("image_io: short write to '" + path + "'");
}

void write_ppm(const std::string& path, const std::vector<uint8_t>& rgb, int h, int w) {
  if ((int64_t)rgb.size() != (int64_t)3 * h * w)
    throw std::invalid_argument("write_ppm: byte count " + std::to_string(rgb.size()) + " != 3x" +
                                std::to_string(h) + "x" + std::to_string(w));
  auto os = open_out(path);
  os << "P6\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(rgb.data()), (std::streamsize)rgb.size());
  if (!os) throw std::runtime_error("image_io: short write to '" + path + "'");
}

void write_pgm_grid(const std::string& path, const std::vector<std::vector<uint8_t>>& images, int h, int w, int cols) {
  if (images.empty()) throw std::invalid_argument("write_pgm_grid: no images");
  if (cols < 1) throw std::invalid_argument("write_pgm_grid: cols must be >= 1");
  for (const auto& img : images)
    if ((int64_t)img.size() != (int64_t)h * w)
      throw std::invalid_argument("write_pgm_grid: image size mismatch");
  int n = (int)images.size();
  int rows = (n + cols - 1) / cols;
  int gw = cols * w + (cols - 1);
  int gh = rows * h + (rows - 1);
  std::vector<uint8_t> grid((size_t)gw * gh, 0);
  for (int i = 0; i < n; ++i) {
    int r = i / cols, c = i % cols;
    int y0 = r * (h + 1), x0 = c * (w + 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) grid[(size_t)(y0 + y) * gw + x0 + x] = images[i][(size_t)y * w + x];
  }
  write_pgm(path, grid, gh, gw);
}

}  // namespace jdiff
