#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace crl {

// Dense row-major |S| x |A| table. Flat index is s * num_actions + a, which is
// also the flattening order used by samplers and the simplex projection.
struct Table {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> data;

  Table() = default;
  Table(int s, int a, double fill = 0.0)
      : num_states(s), num_actions(a), data(static_cast<size_t>(s) * a, fill) {}

  double& operator()(int s, int a) { return data[static_cast<size_t>(s) * num_actions + a]; }
  double operator()(int s, int a) const { return data[static_cast<size_t>(s) * num_actions + a]; }

  size_t size() const { return data.size(); }
  bool same_shape(const Table& o) const {
    return num_states == o.num_states && num_actions == o.num_actions;
  }
};

inline double dot(const Table& a, const Table& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double sum(const Table& t) {
  double acc = 0.0;
  for (double x : t.data) acc += x;
  return acc;
}

inline double l1_norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += std::abs(x);
  return acc;
}

inline double linf_norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc = std::max(acc, std::abs(x));
  return acc;
}

inline double linf_norm(const Table& t) { return linf_norm(t.data); }

// splitmix64; used to derive child seeds so adding seeds never perturbs
// existing streams and to decorrelate small user seeds.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Child stream k of a master seed. Fixed-offset splitting: child(master, k)
// depends only on (master, k).
inline uint64_t child_seed(uint64_t master, uint64_t k) {
  return splitmix64(master + 0x9e3779b97f4a7c15ull * (k + 1));
}

// xoshiro256++, seeded via splitmix64. Self-contained so that streams are
// identical across platforms (uniform_real_distribution is not).
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) {
    uint64_t x = seed;
    for (auto& w : s_) {
      x = splitmix64(x);
      w = x;
    }
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  int next_index(int n) { return static_cast<int>(next_double() * n); }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

// Inverse-CDF draw from unnormalized weights. Returns the first index whose
// prefix sum exceeds u * total. Weights must be nonnegative with positive sum.
inline int sample_from_weights(const std::vector<double>& w, double total, double u) {
  double target = u * total;
  double acc = 0.0;
  int last = -1;
  for (size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    acc += w[i];
    last = static_cast<int>(i);
    if (acc > target) return last;
  }
  if (last < 0) throw std::runtime_error("sample_from_weights: all weights zero");
  return last;  // u landed in the rounding tail
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace crl
