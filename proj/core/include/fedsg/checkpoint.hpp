#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "fedsg/objective.hpp"

namespace fedsg {

// Binary little-endian layout:
//   bytes  0..7   magic "FEDSGCK1"
//   bytes  8..39  uint64 d, B, k, round
//   then U (d x k) and V (B x k) as float64, column-major.
inline constexpr char kCheckpointMagic[8] = {'F', 'E', 'D', 'S', 'G', 'C', 'K', '1'};
inline constexpr std::uint64_t kCheckpointHeaderBytes = 8 + 4 * 8;

struct Checkpoint {
  FactorPair model;
  std::uint64_t round = 0;
};

void write_checkpoint(std::ostream& out, const FactorPair& model, std::uint64_t round);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const FactorPair& model, std::uint64_t round);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t checkpoint_size(std::size_t d, std::size_t width, std::size_t k);

}  // namespace fedsg
