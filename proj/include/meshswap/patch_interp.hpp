#pragma once

#include "meshswap/coord_transforms.hpp"
#include "meshswap/forest.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshswap {

/// Fractional position in the cell-center index space of one patch:
/// frac[a] = k means the point sits on the center of cell k along axis a.
template <int Dim>
struct PatchLocalCoord {
  Vec<Dim> frac;
};

/// How queries between the patch boundary and the outermost cell centers
/// are treated.
enum class BoundaryStencil {
  clamp,        // constant extrapolation from the outermost centers
  extrapolate,  // linear extrapolation from the outermost cell pair
};

/// Reference-space center of cell idx in the patch box: (j + 0.5) / cells.
template <int Dim>
Vec<Dim> cell_center_reference(const Patch<Dim>& patch, const std::array<int, Dim>& idx) {
  const auto box = key_to_box(patch.key);
  Vec<Dim> ref;
  for (int a = 0; a < Dim; ++a) {
    ref[a] = box.lo[a] + (box.hi[a] - box.lo[a]) * ((idx[a] + 0.5) / patch.cells[a]);
  }
  return ref;
}

/// Physical cell centers in storage order (axis 0 fastest).
template <int Dim>
std::vector<Vec<Dim>> cell_centers(const Patch<Dim>& patch, const Tree<Dim>& tree) {
  std::vector<Vec<Dim>> out;
  out.reserve(patch.cell_count());
  for (std::size_t lin = 0; lin < patch.cell_count(); ++lin) {
    out.push_back(reference_to_physical<Dim>(cell_center_reference<Dim>(patch, patch.cell_multi_index(lin)), tree));
  }
  return out;
}

/// Locates a reference point inside its owning patch. The patch box is
/// treated as closed here; ownership itself is decided by the search.
template <int Dim>
PatchLocalCoord<Dim> locate_in_patch(const Vec<Dim>& point_ref, const Patch<Dim>& patch,
                                     BoundaryStencil stencil = BoundaryStencil::clamp) {
  const auto box = key_to_box(patch.key);
  PatchLocalCoord<Dim> c;
  for (int a = 0; a < Dim; ++a) {
    const double rel = (point_ref[a] - box.lo[a]) / (box.hi[a] - box.lo[a]);
    if (!(rel >= 0.0 && rel <= 1.0)) throw std::out_of_range("not owning patch");
    const double f = rel * patch.cells[a] - 0.5;
    const double top = static_cast<double>(patch.cells[a] - 1);
    c.frac[a] = stencil == BoundaryStencil::clamp || patch.cells[a] == 1 ? std::clamp(f, 0.0, top) : f;
  }
  return c;
}

/// Bilinear/trilinear combination of the 2^Dim cell values around frac.
/// Nested std::lerp keeps constants exact and, for frac inside the
/// center hull, each value bounded by its corner values.
template <int Dim>
double interpolate_multilinear(const std::vector<double>& values, const Patch<Dim>& patch,
                               const PatchLocalCoord<Dim>& c) {
  std::array<int, Dim> base{};
  std::array<double, Dim> t{};
  std::array<int, Dim> span{};
  for (int a = 0; a < Dim; ++a) {
    if (patch.cells[a] == 1) {
      base[a] = 0;
      t[a] = 0.0;
      span[a] = 0;
      continue;
    }
    const int b = std::clamp(static_cast<int>(std::floor(c.frac[a])), 0, patch.cells[a] - 2);
    base[a] = b;
    t[a] = c.frac[a] - b;
    span[a] = 1;
  }
  // Corner values ordered with axis 0 in the lowest bit, then collapse axis 0 first.
  std::array<double, 1 << Dim> corner{};
  for (int m = 0; m < (1 << Dim); ++m) {
    std::array<int, Dim> idx{};
    for (int a = 0; a < Dim; ++a) idx[a] = base[a] + (((m >> a) & 1) ? span[a] : 0);
    corner[m] = values[patch.cell_index(idx)];
  }
  int n = 1 << Dim;
  for (int a = 0; a < Dim; ++a) {
    n >>= 1;
    for (int m = 0; m < n; ++m) corner[m] = std::lerp(corner[2 * m], corner[2 * m + 1], t[a]);
  }
  return corner[0];
}

template <int Dim>
std::vector<double> interpolate_multilinear(const Patch<Dim>& patch, const PatchLocalCoord<Dim>& c,
                                            std::span<const std::string> field_names) {
  std::vector<double> out;
  out.reserve(field_names.size());
  for (const auto& name : field_names) {
    out.push_back(interpolate_multilinear<Dim>(patch.field(name), patch, c));
  }
  return out;
}

}  // namespace meshswap
