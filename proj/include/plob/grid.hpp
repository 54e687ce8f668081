#pragma once

#include <array>
#include <cstddef>

#include "plob/errors.hpp"

namespace plob {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Uniform periodic grid on [0, length)^dim with equal resolution per axis.
/// n must be even and >= 8 (mixed-radix transforms are fine, powers of two
/// are the common choice).
class Grid {
 public:
  Grid() = default;
  Grid(int dim, int n, double length = kTwoPi);

  int dim() const { return dim_; }
  int n() const { return n_; }
  double length() const { return length_; }

  std::size_t points() const;        // n^dim
  std::size_t modes() const;         // n^(dim-1) * (n/2 + 1), r2c layout
  double spacing() const { return length_ / n_; }
  double volume() const;
  double dk() const { return kTwoPi / length_; }  // wavenumber spacing

  /// Signed integer mode for a storage index along a non-last axis.
  int signed_mode(int idx) const { return idx <= n_ / 2 ? idx : idx - n_; }

  /// Largest retained |mode| under the 2/3 dealias rule.
  int dealias_cut() const { return n_ / 3; }

  /// Decompose a spectral storage index into per-axis signed modes.
  std::array<int, 3> mode_of(std::size_t s) const;

  /// Decompose a physical storage index into per-axis point indices.
  std::array<int, 3> point_of(std::size_t p) const;

  bool operator==(const Grid& o) const {
    return dim_ == o.dim_ && n_ == o.n_ && length_ == o.length_;
  }
  bool operator!=(const Grid& o) const { return !(*this == o); }

 private:
  int dim_ = 0;
  int n_ = 0;
  double length_ = 0.0;
};

}  // namespace plob
