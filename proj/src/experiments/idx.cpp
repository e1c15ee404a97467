#include "pmm/experiments/idx.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include "pmm/numerics/error.hpp"

namespace pmm::experiments {
namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  if (b.size() < at + 4) throw Error(ErrorKind::length, "IDX header truncated");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void check_magic(std::uint32_t got, std::uint32_t want) {
  if (got != want) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad IDX magic 0x%08x (expected 0x%08x)", got, want);
    throw Error(ErrorKind::format, buf);
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

IdxDataset parse_idx_images(std::span<const std::uint8_t> bytes) {
  check_magic(read_be32(bytes, 0), kIdxImageMagic);
  IdxDataset ds;
  ds.count = read_be32(bytes, 4);
  ds.rows = read_be32(bytes, 8);
  ds.cols = read_be32(bytes, 12);
  const std::size_t pixels = ds.rows * ds.cols, have = bytes.size() - 16;
  if (pixels != 0 && ds.count > have / pixels)
    throw Error(ErrorKind::length, "IDX image data truncated: header promises " +
                                       std::to_string(ds.count) + " images of " +
                                       std::to_string(pixels) + " bytes, found " +
                                       std::to_string(have) + " bytes");
  const std::size_t need = ds.count * pixels;
  ds.images.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return ds;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  check_magic(read_be32(bytes, 0), kIdxLabelMagic);
  const std::size_t count = read_be32(bytes, 4);
  if (bytes.size() - 8 < count)
    throw Error(ErrorKind::length, "IDX label data truncated: expected " +
                                       std::to_string(count) + " bytes, found " +
                                       std::to_string(bytes.size() - 8));
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

IdxDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  IdxDataset ds = parse_idx_images(read_file(images));
  ds.labels = parse_idx_labels(read_file(labels));
  if (ds.labels.size() != ds.count)
    throw Error(ErrorKind::consistency, std::to_string(ds.count) + " images but " +
                                            std::to_string(ds.labels.size()) + " labels");
  return ds;
}

std::vector<std::uint8_t> encode_idx_images(const IdxDataset& ds) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(ds.count));
  put_be32(out, static_cast<std::uint32_t>(ds.rows));
  put_be32(out, static_cast<std::uint32_t>(ds.cols));
  out.insert(out.end(), ds.images.begin(), ds.images.end());
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const IdxDataset& ds) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(ds.labels.size()));
  out.insert(out.end(), ds.labels.begin(), ds.labels.end());
  return out;
}

}  // namespace pmm::experiments
