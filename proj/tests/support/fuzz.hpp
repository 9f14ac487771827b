#pragma once

// Byte-level mutation fuzzing for the file parsers. A parser passes when every
// mutated input either parses or throws keyvote3d::Error; anything else
// (other exception types, crashes) is an escape.

#include <cstdint>
#include <cstring>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "keyvote3d/error.hpp"

namespace keyvote3d::testing {

struct FuzzStats {
  std::size_t cases = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::vector<std::string> escapes;
};

inline std::string mutate(const std::vector<std::string>& seeds, std::mt19937_64& rng) {
  auto pick = [&rng](std::size_t n) {
    return n == 0 ? std::size_t{0} : std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };
  std::string s = seeds[pick(seeds.size())];
  static const char* const kTokens[] = {"-1", "0", "4294967295", "18446744073709551616", "1e308",
                                        "nan", "inf", "-0", "99999999999", "\n", " ", "end_header",
                                        "binary_big_endian", "list", "uint", "{", "]", "\"N\":"};
  const int rounds = 1 + static_cast<int>(pick(4));
  for (int r = 0; r < rounds; ++r) {
    switch (pick(7)) {
      case 0:  // flip bits
        if (!s.empty()) s[pick(s.size())] ^= static_cast<char>(1u << pick(8));
        break;
      case 1:  // random byte
        if (!s.empty()) s[pick(s.size())] = static_cast<char>(pick(256));
        break;
      case 2:  // truncate
        s.resize(pick(s.size() + 1));
        break;
      case 3: {  // insert random bytes
        std::string junk(1 + pick(16), '\0');
        for (auto& c : junk) c = static_cast<char>(pick(256));
        s.insert(pick(s.size() + 1), junk);
        break;
      }
      case 4: {  // erase a span
        if (s.empty()) break;
        const std::size_t at = pick(s.size());
        s.erase(at, 1 + pick(32));
        break;
      }
      case 5:  // insert a suspicious token
        s.insert(pick(s.size() + 1), kTokens[pick(std::size(kTokens))]);
        break;
      default: {  // overwrite a 4-byte word with an extreme value
        if (s.size() < 4) break;
        const std::uint32_t vals[] = {0u, 0xFFFFFFFFu, 0x7FFFFFFFu, 0x7F800000u, 0x7FC00000u, 3u};
        const std::uint32_t v = vals[pick(std::size(vals))];
        std::memcpy(s.data() + pick(s.size() - 3), &v, 4);
        break;
      }
    }
  }
  return s;
}

template <typename Parse>
FuzzStats fuzz_parser(const std::vector<std::string>& seeds, std::size_t cases, std::uint64_t seed,
                      Parse parse) {
  std::mt19937_64 rng(seed);
  FuzzStats stats;
  for (std::size_t i = 0; i < cases; ++i) {
    const std::string input = mutate(seeds, rng);
    ++stats.cases;
    try {
      parse(input);
      ++stats.accepted;
    } catch (const Error&) {
      ++stats.rejected;
    } catch (const std::exception& e) {
      stats.escapes.push_back(std::string("case ") + std::to_string(i) + ": " + e.what());
    } catch (...) {
      stats.escapes.push_back("case " + std::to_string(i) + ": non-standard exception");
    }
  }
  return stats;
}

}  // namespace keyvote3d::testing
