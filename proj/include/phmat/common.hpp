#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace phmat {

using Index = std::int64_t;

#define PHMAT_CHECK(cond, msg)                                        \
  do {                                                                \
    if (!(cond)) throw std::logic_error(std::string("phmat: ") + msg); \
  } while (0)

// Deterministic RNG: mt19937_64 output mapped to doubles by hand so that
// sequences are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  std::uint64_t integer(std::uint64_t n) { return n ? gen_() % n : 0; }
  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

// splitmix64 step, used to derive per-block seeds from an experiment seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Max worker count: PHMAT_THREADS caps it, hardware concurrency otherwise.
int max_threads();

// Runs fn(i) for i in [0, n). Each index must write only its own outputs, so
// results do not depend on the schedule. threads <= 1 runs inline.
void parallel_for(Index n, const std::function<void(Index)>& fn, int threads = 0);

}  // namespace phmat
