#include "fedsg/text.hpp"

#include <array>
#include <charconv>

namespace fedsg {

std::string format_real(double value) {
  std::array<char, 32> buffer{};
  const auto result = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
  return std::string(buffer.data(), result.ptr);
}

}  // namespace fedsg
