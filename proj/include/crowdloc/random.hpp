#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>


namespace crowdloc {

  //! Philox4x32-10 counter-based generator (Salmon et al., Random123).
  //! Each (key, counter) pair maps to four independent 32-bit words, so any
  //! sub-stream can be addressed directly without replaying earlier draws.
  class Philox4x32
  {
  public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr std::string_view name = "philox4x32-10";

    static constexpr auto block(Counter counter, Key key) -> Counter
    {
      for (int round = 0; round < 10; ++round)
      {
        if (round > 0)
        {
          key[0] += 0x9E3779B9u;
          key[1] += 0xBB67AE85u;
        }
        const auto p0 = std::uint64_t{0xD2511F53u} * counter[0];
        const auto p1 = std::uint64_t{0xCD9E8D57u} * counter[2];
        counter = {std::uint32_t(p1 >> 32) ^ counter[1] ^ key[0],
                   std::uint32_t(p1),
                   std::uint32_t(p0 >> 32) ^ counter[3] ^ key[1],
                   std::uint32_t(p0)};
      }
      return counter;
    }
  };

  //! Sequential draws from one Philox stream: key = seed, counter words 2-3
  //! select the stream, words 0-1 count blocks.
  class RandomStream
  {
  public:
    RandomStream(std::uint64_t seed, std::uint64_t stream)
      : _key{std::uint32_t(seed), std::uint32_t(seed >> 32)}
      , _stream{stream}
    {
    }

    auto next_u32() -> std::uint32_t
    {
      if (_used == 4)
      {
        _buffer = Philox4x32::block({std::uint32_t(_block),
                                     std::uint32_t(_block >> 32),
                                     std::uint32_t(_stream),
                                     std::uint32_t(_stream >> 32)},
                                    _key);
        ++_block;
        _used = 0;
      }
      return _buffer[_used++];
    }

    //! Uniform in the open interval (0, 1) with 53 random bits.
    auto uniform() -> double
    {
      const auto hi = std::uint64_t{next_u32()};
      const auto lo = std::uint64_t{next_u32()};
      const auto bits = ((hi << 32) | lo) >> 11;
      return (double(bits) + 0.5) * 0x1p-53;
    }

    auto uniform(double lo, double hi) -> double
    {
      return lo + (hi - lo) * uniform();
    }

    //! Standard normal by the Box-Muller transform (one value per call).
    auto normal() -> double
    {
      const auto u1 = uniform();
      const auto u2 = uniform();
      return std::sqrt(-2 * std::log(u1)) *
             std::cos(2 * std::numbers::pi * u2);
    }

  private:
    Philox4x32::Key _key;
    std::uint64_t _stream;
    std::uint64_t _block = 0;
    Philox4x32::Counter _buffer{};
    int _used = 4;
  };

}  // namespace crowdloc
