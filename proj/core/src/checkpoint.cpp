#include "fedsg/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "fedsg/error.hpp"

namespace fedsg {

namespace {

void put_u64(std::ostream& out, std::uint64_t value) {
  std::array<char, 8> bytes{};
  for (std::size_t i = 0; i < 8; ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  out.write(bytes.data(), bytes.size());
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw Error(ErrorCode::kIoError, "truncated checkpoint");
  std::uint64_t value = 0;
  for (std::size_t i = 0; i < 8; ++i) value |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return value;
}

void put_matrix(std::ostream& out, const DataMatrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(m(i, j)));
}

DataMatrix get_matrix(std::istream& in, std::uint64_t rows, std::uint64_t cols) {
  DataMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = std::bit_cast<double>(get_u64(in));
  return m;
}

}  // namespace

std::uint64_t checkpoint_size(std::size_t d, std::size_t width, std::size_t k) {
  return kCheckpointHeaderBytes + static_cast<std::uint64_t>(k) * (d + width) * sizeof(double);
}

void write_checkpoint(std::ostream& out, const FactorPair& model, std::uint64_t round) {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u64(out, static_cast<std::uint64_t>(model.u.n()));
  put_u64(out, static_cast<std::uint64_t>(model.v.n()));
  put_u64(out, static_cast<std::uint64_t>(model.u.k()));
  put_u64(out, round);
  put_matrix(out, model.u.basis());
  put_matrix(out, model.v.basis());
  if (!out) throw Error(ErrorCode::kIoError, "failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw Error(ErrorCode::kParseError, "not a checkpoint (bad magic)");
  }
  const std::uint64_t d = get_u64(in);
  const std::uint64_t width = get_u64(in);
  const std::uint64_t k = get_u64(in);
  const std::uint64_t round = get_u64(in);
  constexpr std::uint64_t kLimit = 1u << 24;
  if (d == 0 || width == 0 || k == 0 || d > kLimit || width > kLimit || k > kLimit) {
    throw Error(ErrorCode::kParseError, "implausible checkpoint dimensions");
  }
  DataMatrix u = get_matrix(in, d, k);
  DataMatrix v = get_matrix(in, width, k);
  return Checkpoint{FactorPair(GrassmannPoint(std::move(u)), GrassmannPoint(std::move(v))), round};
}

void save_checkpoint(const std::filesystem::path& path, const FactorPair& model, std::uint64_t round) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  write_checkpoint(out, model, round);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace fedsg
