#pragma once

#include <array>
#include <cstdint>

namespace qlbe {

// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

// Counter-based stream: key = master seed, upper counter words = stream id,
// lower counter words = block index. Streams with different ids never overlap,
// so results do not depend on how streams are assigned to workers.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint32_t next_u32();
  // Uniform on the open interval (0, 1), 53 random bits.
  double uniform();
  // Standard normal (Box-Muller, both values used).
  double normal();

  std::uint64_t stream_id() const { return stream_; }

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace qlbe
