#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "qp/common.hpp"

namespace qp {

/// Three channel planes of doubles, row-major within a plane.
struct ImageRGB {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> planes;  // 3 × height × width

  ImageRGB() = default;
  ImageRGB(std::size_t w, std::size_t h) : width(w), height(h), planes(3 * w * h, 0.0) {}

  double& at(std::size_t c, std::size_t row, std::size_t col) {
    return planes[(c * height + row) * width + col];
  }
  double at(std::size_t c, std::size_t row, std::size_t col) const {
    return planes[(c * height + row) * width + col];
  }
};

/// Binary PPM (P6, maxval 255); values are clamped to [0, 1] and rounded.
void write_ppm(std::ostream& out, const ImageRGB& img);
void write_ppm(const std::filesystem::path& path, const ImageRGB& img);
/// Reads a P6 file back into [0, 1] values.
ImageRGB read_ppm(const std::filesystem::path& path);

/// Lossless raw planes: "MIMG" | u32 w | u32 h | 3 planes of f64, little-endian.
void write_mimg(std::ostream& out, const ImageRGB& img);
ImageRGB read_mimg(std::istream& in);
void save_mimg(const std::filesystem::path& path, const ImageRGB& img);
ImageRGB load_mimg(const std::filesystem::path& path);

/// Min-max normalization used for a heatmap, written next to it so the raw
/// values can be recovered as min + (max - min) · gray / 255.
struct HeatmapScale {
  double min = 0.0;
  double max = 0.0;
};

/// 8-bit binary PGM (P5) of `values` (row-major, width × height). Returns the
/// normalization applied. A constant map is written as all zeros.
HeatmapScale write_pgm_heatmap(const std::filesystem::path& path, std::span<const double> values,
                               std::size_t width, std::size_t height);
void write_heatmap_sidecar(const std::filesystem::path& path, const HeatmapScale& scale);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<unsigned char> pixels;
};
GrayImage read_pgm(const std::filesystem::path& path);

/// Binary PBM (P4); `true` is written as a black (1) pixel.
void write_pbm(const std::filesystem::path& path, const std::vector<bool>& bits, std::size_t width,
               std::size_t height);
std::vector<bool> read_pbm(const std::filesystem::path& path, std::size_t* width,
                           std::size_t* height);

}  // namespace qp
