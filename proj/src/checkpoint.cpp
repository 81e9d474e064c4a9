#include "qp/checkpoint.hpp"

#include <fstream>
#include <limits>

#include "qp/binary_io.hpp"

namespace qp::ad {

namespace {
constexpr std::string_view kMagic = "QPC1";
constexpr std::uint32_t kMaxRank = 8;
}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  binio::write_magic(out, kMagic);
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : t.value.data()) binio::write<double>(out, v);
  }
  if (!out) throw IoError("failed writing checkpoint");
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  binio::expect_magic(in, kMagic);
  const auto count = binio::read<std::uint32_t>(in);
  std::vector<NamedTensor> tensors;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    const auto name_len = binio::read<std::uint32_t>(in);
    if (name_len > 4096) throw FormatError("checkpoint: implausible name length");
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    if (!in) throw FormatError("checkpoint: truncated name");
    const auto rank = binio::read<std::uint32_t>(in);
    if (rank == 0 || rank > kMaxRank) throw FormatError("checkpoint: bad rank");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto d = binio::read<std::uint32_t>(in);
      if (d == 0) throw FormatError("checkpoint: zero dimension");
      shape.push_back(d);
    }
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = binio::read<double>(in);
    t.value = Tensor(std::move(shape), std::move(data));
    tensors.push_back(std::move(t));
  }
  return tensors;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, tensors);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace qp::ad
