#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "fscn/train.hpp"

namespace fscn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout (all integers and floats little-endian):
///
///   "FSCNCKPT"              8-byte magic
///   u32 version
///   u64 config length, config JSON bytes
///   i64 step
///   u64 tensor count
///   per tensor: u64 length, f32[length] parameter values
///   per tensor: u64 length, f32[length] first moments
///   per tensor: u64 length, f32[length] second moments
///   f64 beta1, beta2, eps, weight_decay; i64 optimizer step
///   u64 rng length, rng state text (std::mt19937_64 stream form)
///   u64 order length, u64[length] epoch permutation; u64 cursor
///   "FSCNEND!"              8-byte trailer
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws CheckpointError on missing, truncated, corrupt or wrong-version files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fscn
