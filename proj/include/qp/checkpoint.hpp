#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "qp/autodiff.hpp"

// Flat binary model checkpoint:
//   "QPC1" | u32 count | count × (u32 name_len, name bytes, u32 rank,
//   rank × u32 dim, f64 data), all little-endian.
namespace qp::ad {

struct NamedTensor {
  std::string name;
  Tensor value;
};

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace qp::ad
