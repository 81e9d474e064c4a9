#include "qp/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <string>

#include "qp/binary_io.hpp"

namespace qp {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

// Netpbm header: magic, then whitespace-separated integers, '#' comments
// allowed, followed by exactly one whitespace byte.
std::size_t read_header_int(std::istream& in) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw FormatError("netpbm: malformed header");
  std::size_t v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + static_cast<std::size_t>(c - '0');
    if (v > (1u << 24)) throw FormatError("netpbm: implausible header value");
    c = in.get();
  }
  if (c == EOF || !std::isspace(c)) throw FormatError("netpbm: malformed header");
  return v;
}

void expect_netpbm_magic(std::istream& in, const char* magic) {
  char m[2] = {0, 0};
  in.read(m, 2);
  if (!in || m[0] != magic[0] || m[1] != magic[1]) {
    throw FormatError(std::string("expected netpbm magic ") + magic);
  }
}

}  // namespace

void write_ppm(std::ostream& out, const ImageRGB& img) {
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<char> row(3 * img.width);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch)
        row[3 * c + ch] = static_cast<char>(to_byte(img.at(ch, r, c)));
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("failed writing PPM");
}

void write_ppm(const std::filesystem::path& path, const ImageRGB& img) {
  auto out = open_out(path);
  write_ppm(out, img);
}

ImageRGB read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  expect_netpbm_magic(in, "P6");
  const std::size_t w = read_header_int(in);
  const std::size_t h = read_header_int(in);
  const std::size_t maxval = read_header_int(in);
  if (w == 0 || h == 0 || maxval != 255) throw FormatError("PPM: unsupported header");
  ImageRGB img(w, h);
  std::vector<char> row(3 * w);
  for (std::size_t r = 0; r < h; ++r) {
    in.read(row.data(), static_cast<std::streamsize>(row.size()));
    if (!in) throw FormatError("PPM: truncated pixel data");
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch)
        img.at(ch, r, c) = static_cast<unsigned char>(row[3 * c + ch]) / 255.0;
  }
  return img;
}

void write_mimg(std::ostream& out, const ImageRGB& img) {
  binio::write_magic(out, "MIMG");
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(img.width));
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(img.height));
  for (double v : img.planes) binio::write<double>(out, v);
  if (!out) throw IoError("failed writing MIMG");
}

ImageRGB read_mimg(std::istream& in) {
  binio::expect_magic(in, "MIMG");
  const auto w = binio::read<std::uint32_t>(in);
  const auto h = binio::read<std::uint32_t>(in);
  if (w == 0 || h == 0 || w > (1u << 15) || h > (1u << 15)) throw FormatError("MIMG: bad size");
  ImageRGB img(w, h);
  for (double& v : img.planes) v = binio::read<double>(in);
  return img;
}

void save_mimg(const std::filesystem::path& path, const ImageRGB& img) {
  auto out = open_out(path);
  write_mimg(out, img);
}

ImageRGB load_mimg(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_mimg(in);
}

HeatmapScale write_pgm_heatmap(const std::filesystem::path& path, std::span<const double> values,
                               std::size_t width, std::size_t height) {
  if (values.size() != width * height || values.empty()) {
    throw ShapeError("heatmap size does not match width × height");
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const HeatmapScale scale{*lo, *hi};
  const double span = scale.max - scale.min;
  auto out = open_out(path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (double v : values) {
    const double g = span > 0.0 ? (v - scale.min) / span : 0.0;
    out.put(static_cast<char>(to_byte(g)));
  }
  if (!out) throw IoError("failed writing PGM");
  return scale;
}

void write_heatmap_sidecar(const std::filesystem::path& path, const HeatmapScale& scale) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(17) << "min " << scale.min << "\nmax " << scale.max
      << "\n# value = min + (max - min) * gray / 255\n";
}

GrayImage read_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  expect_netpbm_magic(in, "P5");
  GrayImage img;
  img.width = read_header_int(in);
  img.height = read_header_int(in);
  if (img.width == 0 || img.height == 0 || read_header_int(in) != 255) {
    throw FormatError("PGM: unsupported header");
  }
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw FormatError("PGM: truncated pixel data");
  return img;
}

void write_pbm(const std::filesystem::path& path, const std::vector<bool>& bits, std::size_t width,
               std::size_t height) {
  if (bits.size() != width * height || bits.empty()) throw ShapeError("PBM size mismatch");
  auto out = open_out(path);
  out << "P4\n" << width << ' ' << height << '\n';
  const std::size_t stride = (width + 7) / 8;
  std::vector<unsigned char> row(stride);
  for (std::size_t r = 0; r < height; ++r) {
    std::fill(row.begin(), row.end(), 0);
    for (std::size_t c = 0; c < width; ++c)
      if (bits[r * width + c]) row[c / 8] |= static_cast<unsigned char>(0x80u >> (c % 8));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(stride));
  }
  if (!out) throw IoError("failed writing PBM");
}

std::vector<bool> read_pbm(const std::filesystem::path& path, std::size_t* width,
                           std::size_t* height) {
  auto in = open_in(path);
  expect_netpbm_magic(in, "P4");
  const std::size_t w = read_header_int(in);
  const std::size_t h = read_header_int(in);
  if (w == 0 || h == 0) throw FormatError("PBM: empty image");
  const std::size_t stride = (w + 7) / 8;
  std::vector<unsigned char> row(stride);
  std::vector<bool> bits(w * h);
  for (std::size_t r = 0; r < h; ++r) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(stride));
    if (!in) throw FormatError("PBM: truncated pixel data");
    for (std::size_t c = 0; c < w; ++c) bits[r * w + c] = (row[c / 8] >> (7 - c % 8)) & 1u;
  }
  if (width) *width = w;
  if (height) *height = h;
  return bits;
}

}  // namespace qp
