#pragma once

#include <cstddef>

namespace capnet {

// Reserved vocabulary slots, fixed for every vocabulary file.
constexpr std::size_t kPadId = 0;
constexpr std::size_t kStartId = 1;
constexpr std::size_t kEndId = 2;
constexpr std::size_t kUnkId = 3;

}  // namespace capnet
