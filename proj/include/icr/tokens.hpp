#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace icr {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;
using TokenSpan = std::span<const Token>;

inline TokenSeq concat(TokenSpan a, TokenSpan b) {
  TokenSeq out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace icr
