#pragma once

#include <string>

namespace fedsg {

// Shortest round-trip decimal form of a double.
std::string format_real(double value);

}  // namespace fedsg
