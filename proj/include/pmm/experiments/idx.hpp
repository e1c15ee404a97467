#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pmm::experiments {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxDataset {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> images;  // count·rows·cols bytes, image-major
  std::vector<std::uint8_t> labels;

  std::span<const std::uint8_t> image(std::size_t i) const {
    return {images.data() + i * rows * cols, rows * cols};
  }
};

/// Image file body: magic 0x803, then count, rows, cols (big-endian u32)
/// and the pixel bytes. Throws ErrorKind::format on a bad magic and
/// ErrorKind::length when the buffer is shorter than its header promises.
IdxDataset parse_idx_images(std::span<const std::uint8_t> bytes);
/// Label file body: magic 0x801, count, label bytes.
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

/// Reads both files; ErrorKind::consistency when the counts differ and
/// ErrorKind::io when a file cannot be read.
IdxDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Serialises back to the two IDX byte streams (used for fixtures).
std::vector<std::uint8_t> encode_idx_images(const IdxDataset& ds);
std::vector<std::uint8_t> encode_idx_labels(const IdxDataset& ds);

}  // namespace pmm::experiments
