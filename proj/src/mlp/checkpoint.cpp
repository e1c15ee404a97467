#include "pmm/mlp/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "pmm/numerics/error.hpp"

namespace pmm::mlp {
namespace {

constexpr std::array<char, 4> kMagic{'P', 'M', 'M', '1'};
constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 32;

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(sizeof(T) == 8);
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  out.write(reinterpret_cast<const char*>(&bits), 8);
}

template <typename T>
T get(std::istream& in) {
  std::uint64_t bits;
  if (!in.read(reinterpret_cast<char*>(&bits), 8))
    throw Error(ErrorKind::length, "checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  T v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const MlpNet& net) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint64_t>(out, net.depth());
  for (std::size_t d : net.widths()) put<std::uint64_t>(out, d);
  for (const auto& w : net.weights())
    for (double v : w.values()) put<double>(out, v);
  if (!out) throw Error(ErrorKind::io, "checkpoint write failed");
}

MlpNet read_checkpoint(std::istream& in, Nonlinearity phi) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()))
    throw Error(ErrorKind::length, "checkpoint truncated");
  if (magic != kMagic) throw Error(ErrorKind::format, "bad checkpoint magic");
  const auto depth = get<std::uint64_t>(in);
  if (depth == 0 || depth > 4096)
    throw Error(ErrorKind::format, "implausible checkpoint depth");
  std::vector<std::size_t> d(depth + 1);
  for (auto& v : d) {
    const auto x = get<std::uint64_t>(in);
    if (x == 0 || x > kMaxDim) throw Error(ErrorKind::format, "implausible width");
    v = static_cast<std::size_t>(x);
  }
  WeightTuple w;
  for (std::size_t l = 1; l <= depth; ++l) {
    std::vector<double> e(d[l] * d[l - 1]);
    for (double& v : e) v = get<double>(in);
    w.emplace_back(d[l], d[l - 1], std::move(e));
  }
  return MlpNet(std::move(w), phi);
}

void save_checkpoint(const std::filesystem::path& path, const MlpNet& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot open " + path.string());
  write_checkpoint(out, net);
}

MlpNet load_checkpoint(const std::filesystem::path& path, Nonlinearity phi) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return read_checkpoint(in, phi);
}

}  // namespace pmm::mlp
