#ifndef MALAKIT_RNG_HPP
#define MALAKIT_RNG_HPP

#include <array>
#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Dense>

namespace malakit {

// Philox4x32-10 counter-based generator. The 64-bit key is the master seed;
// the upper half of the 128-bit counter is the stream id, the lower half
// counts blocks. Two streams with different ids never share a counter value,
// so per-chain streams are independent and reproducible regardless of the
// order in which chains are run.
class Philox4x32 {
 public:
  using result_type = std::uint64_t;

  Philox4x32(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == 2) {
      refill();
      pos_ = 0;
    }
    return out_[pos_++];
  }

  std::uint64_t seed() const {
    return static_cast<std::uint64_t>(key_[0]) | (static_cast<std::uint64_t>(key_[1]) << 32);
  }
  std::uint64_t stream() const { return stream_; }

  // The raw 10-round bijection on one counter block.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> c,
                                            std::array<std::uint32_t, 2> k) {
    for (int round = 0; round < 10; ++round) {
      std::uint32_t hi0, lo0, hi1, lo1;
      mulhilo(0xD2511F53u, c[0], hi0, lo0);
      mulhilo(0xCD9E8D57u, c[2], hi1, lo1);
      c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
      k[0] += 0x9E3779B9u;
      k[1] += 0xBB67AE85u;
    }
    return c;
  }

 private:
  static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
  }

  void refill() {
    const auto c = block({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                          static_cast<std::uint32_t>(stream_),
                          static_cast<std::uint32_t>(stream_ >> 32)},
                         key_);
    out_[0] = static_cast<std::uint64_t>(c[0]) | (static_cast<std::uint64_t>(c[1]) << 32);
    out_[1] = static_cast<std::uint64_t>(c[2]) | (static_cast<std::uint64_t>(c[3]) << 32);
    ++block_;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> out_{};
  int pos_ = 2;
};

// Stream ids reserved for internal use sit at the top of the id space so
// they never collide with replica indices.
namespace streams {
inline constexpr std::uint64_t kProbe = 0xFFFF'0000'0000'0000ull;
inline constexpr std::uint64_t kFloor = 0xFFFE'0000'0000'0000ull;
inline constexpr std::uint64_t kInit = 0xFFFD'0000'0000'0000ull;
inline constexpr std::uint64_t kData = 0xFFFC'0000'0000'0000ull;
inline constexpr std::uint64_t kMisc = 0xFFFB'0000'0000'0000ull;
}  // namespace streams

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : engine_(seed, stream) {}

  double normal() { return normal_(engine_); }

  // Uniform on the open interval (0, 1).
  double uniform() {
    double u;
    do {
      u = uniform_(engine_);
    } while (u <= 0.0);
    return u;
  }

  Eigen::VectorXd normal_vector(Eigen::Index d) {
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

  std::uint64_t next_u64() { return engine_(); }

  Philox4x32& engine() { return engine_; }

 private:
  Philox4x32 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace malakit

#endif
