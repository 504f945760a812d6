#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace kwext {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

// Reserved vocabulary slots, present in every vocabulary.
inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kUnk = 2;
inline constexpr std::size_t kNumReserved = 3;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Raised on malformed input files, bad configs, broken invariants.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kwext
