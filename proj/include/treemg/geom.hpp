#pragma once

#include <array>
#include <cstdint>
#include <cassert>

namespace treemg {

// Lattice index for cells/vertices. Only the first d entries are used;
// the rest stay zero so packing and comparison work uniformly.
using IndexVec = std::array<int, 3>;

inline constexpr int ipow(int b, int e) {
  int r = 1;
  for (int k = 0; k < e; ++k) r *= b;
  return r;
}

inline constexpr int pow2(int d) { return 1 << d; }
inline constexpr int pow3(int d) { return ipow(3, d); }
inline constexpr int pow5(int d) { return ipow(5, d); }

// 21 bits per coordinate; levels up to 3^12 fit comfortably.
inline std::uint64_t packIndex(const IndexVec& v) {
  return (std::uint64_t(std::uint32_t(v[0])) & 0x1fffff) |
         ((std::uint64_t(std::uint32_t(v[1])) & 0x1fffff) << 21) |
         ((std::uint64_t(std::uint32_t(v[2])) & 0x1fffff) << 42);
}

inline IndexVec makeIndex(int x, int y = 0, int z = 0) { return IndexVec{x, y, z}; }

// Lexicographic enumeration of {0..n-1}^d, axis 0 fastest.
inline IndexVec unflatten(int k, int n, int d) {
  IndexVec v{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    v[a] = k % n;
    k /= n;
  }
  return v;
}

inline int flatten(const IndexVec& v, int n, int d) {
  int k = 0;
  for (int a = d - 1; a >= 0; --a) k = k * n + v[a];
  return k;
}

// Offset vectors in {-r..r}^d, enumerated lexicographically (axis 0 fastest).
inline IndexVec offsetFromEntry(int entry, int r, int d) {
  IndexVec o = unflatten(entry, 2 * r + 1, d);
  for (int a = 0; a < d; ++a) o[a] -= r;
  return o;
}

inline int entryFromOffset(const IndexVec& o, int r, int d) {
  IndexVec v{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    assert(o[a] >= -r && o[a] <= r);
    v[a] = o[a] + r;
  }
  return flatten(v, 2 * r + 1, d);
}

inline IndexVec addIndex(const IndexVec& a, const IndexVec& b) {
  return IndexVec{a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

inline IndexVec scaleIndex(const IndexVec& a, int s) {
  return IndexVec{a[0] * s, a[1] * s, a[2] * s};
}

inline bool indexInRange(const IndexVec& v, int lo, int hi, int d) {
  for (int a = 0; a < d; ++a)
    if (v[a] < lo || v[a] > hi) return false;
  return true;
}

}  // namespace treemg
