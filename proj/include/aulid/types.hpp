#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace aulid {

using Key = std::uint64_t;
using Payload = std::uint64_t;

/// Ordinal of a block inside an index file. Block 0 holds the file header.
using BlockId = std::uint64_t;
inline constexpr BlockId kHeaderBlock = 0;
inline constexpr BlockId kNoBlock = 0;

struct KeyPayload {
  Key key = 0;
  Payload payload = 0;
  friend bool operator==(const KeyPayload&, const KeyPayload&) = default;
};

/// (largest key of a leaf, address of that leaf) as stored in inner nodes.
struct KeyBlock {
  Key k_max = 0;
  BlockId block = kNoBlock;
  friend bool operator==(const KeyBlock&, const KeyBlock&) = default;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

}  // namespace aulid
