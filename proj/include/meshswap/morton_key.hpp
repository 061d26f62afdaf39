#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace meshswap {

/// Deepest refinement level supported per dimension. The first-descendant
/// index of any key fits into 64 bits with headroom (58 bits in 2D, 57 in 3D).
template <int Dim>
inline constexpr int max_level = Dim == 2 ? 29 : 19;

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;

/// Level plus integer coordinates of one quadrant (2D) or octant (3D) inside
/// a tree. Coordinates live on the grid of the key's own level.
template <int Dim>
struct MortonKey {
  static_assert(Dim == 2 || Dim == 3, "only quadtrees and octrees");
  static constexpr int dim = Dim;

  int level = 0;
  std::array<std::uint32_t, Dim> coords{};

  friend bool operator==(const MortonKey&, const MortonKey&) = default;
};

/// Half-open box [lo, hi) in the unit reference cube of a tree.
template <int Dim>
struct Box {
  Vec<Dim> lo;
  Vec<Dim> hi;

  double measure() const { return (hi - lo).prod(); }
};

namespace detail {

// Spreads the low 32 bits of v so that bit i lands at position i * Dim.
template <int Dim>
constexpr std::uint64_t spread_bits(std::uint32_t v) {
  std::uint64_t out = 0;
  for (int i = 0; i < 32; ++i) {
    out |= static_cast<std::uint64_t>((v >> i) & 1u) << (i * Dim);
  }
  return out;
}

template <int Dim>
constexpr std::uint32_t compact_bits(std::uint64_t v, int axis) {
  std::uint32_t out = 0;
  for (int i = 0; i < 32 && i * Dim + axis < 64; ++i) {
    out |= static_cast<std::uint32_t>((v >> (i * Dim + axis)) & 1u) << i;
  }
  return out;
}

}  // namespace detail

/// Interleaves coordinates x-fastest: bit i of axis a goes to bit i*Dim + a.
template <int Dim>
constexpr std::uint64_t interleave(const std::array<std::uint32_t, Dim>& coords) {
  std::uint64_t code = 0;
  for (int a = 0; a < Dim; ++a) {
    code |= detail::spread_bits<Dim>(coords[a]) << a;
  }
  return code;
}

template <int Dim>
constexpr std::array<std::uint32_t, Dim> deinterleave(std::uint64_t code) {
  std::array<std::uint32_t, Dim> coords{};
  for (int a = 0; a < Dim; ++a) {
    coords[a] = detail::compact_bits<Dim>(code, a);
  }
  return coords;
}

template <int Dim>
bool is_valid(const MortonKey<Dim>& k) {
  if (k.level < 0 || k.level > max_level<Dim>) return false;
  const std::uint64_t n = std::uint64_t{1} << k.level;
  for (auto c : k.coords) {
    if (c >= n) return false;
  }
  return true;
}

template <int Dim>
MortonKey<Dim> encode_key(int level, const std::array<std::uint32_t, Dim>& coords) {
  MortonKey<Dim> k{level, coords};
  if (!is_valid(k)) throw std::invalid_argument("invalid key");
  return k;
}

/// Index of the key's first descendant at max_level, i.e. its position on
/// the space-filling curve.
template <int Dim>
constexpr std::uint64_t first_descendant_index(const MortonKey<Dim>& k) {
  return interleave<Dim>(k.coords) << (Dim * (max_level<Dim> - k.level));
}

template <int Dim>
constexpr std::uint64_t last_descendant_index(const MortonKey<Dim>& k) {
  const int shift = Dim * (max_level<Dim> - k.level);
  return first_descendant_index(k) | ((std::uint64_t{1} << shift) - 1);
}

/// Number of max_level cells covered by the key; exact integer measure.
template <int Dim>
constexpr std::uint64_t descendant_count(const MortonKey<Dim>& k) {
  return std::uint64_t{1} << (Dim * (max_level<Dim> - k.level));
}

/// Space-filling-curve order: first descendants compared, ancestors first.
template <int Dim>
std::strong_ordering key_order(const MortonKey<Dim>& a, const MortonKey<Dim>& b) {
  if (auto c = first_descendant_index(a) <=> first_descendant_index(b); c != 0) return c;
  return a.level <=> b.level;
}

template <int Dim>
bool key_less(const MortonKey<Dim>& a, const MortonKey<Dim>& b) {
  return key_order(a, b) < 0;
}

template <int Dim>
MortonKey<Dim> parent(const MortonKey<Dim>& k) {
  if (k.level < 1) throw std::invalid_argument("root key has no parent");
  MortonKey<Dim> p{k.level - 1, {}};
  for (int a = 0; a < Dim; ++a) p.coords[a] = k.coords[a] >> 1;
  return p;
}

inline constexpr int children_per_key(int dim) { return 1 << dim; }

/// Child i carries bit a of i as the low bit of coordinate a, so child
/// indices follow curve order.
template <int Dim>
MortonKey<Dim> child(const MortonKey<Dim>& k, int i) {
  if (k.level >= max_level<Dim>) throw std::invalid_argument("key at maximum level");
  if (i < 0 || i >= (1 << Dim)) throw std::invalid_argument("child index out of range");
  MortonKey<Dim> c{k.level + 1, {}};
  for (int a = 0; a < Dim; ++a) {
    c.coords[a] = (k.coords[a] << 1) | static_cast<std::uint32_t>((i >> a) & 1);
  }
  return c;
}

/// True iff a's box contains b's box (a key is its own ancestor).
template <int Dim>
bool is_ancestor(const MortonKey<Dim>& a, const MortonKey<Dim>& b) {
  if (a.level > b.level) return false;
  const int shift = b.level - a.level;
  for (int d = 0; d < Dim; ++d) {
    if ((b.coords[d] >> shift) != a.coords[d]) return false;
  }
  return true;
}

template <int Dim>
Box<Dim> key_to_box(const MortonKey<Dim>& k) {
  // Dyadic values; exact in double for every supported level.
  const double h = std::ldexp(1.0, -k.level);
  Box<Dim> box;
  for (int a = 0; a < Dim; ++a) {
    box.lo[a] = static_cast<double>(k.coords[a]) * h;
    box.hi[a] = static_cast<double>(k.coords[a] + 1) * h;
  }
  return box;
}

template <int Dim>
std::string to_string(const MortonKey<Dim>& k) {
  std::string s = "L" + std::to_string(k.level) + "(";
  for (int a = 0; a < Dim; ++a) {
    if (a) s += ",";
    s += std::to_string(k.coords[a]);
  }
  return s + ")";
}

}  // namespace meshswap
