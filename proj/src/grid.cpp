#include "plob/grid.hpp"

namespace plob {

Grid::Grid(int dim, int n, double length)
    : dim_(dim), n_(n), length_(length) {
  if (dim != 2 && dim != 3) throw DomainError("Grid: dim must be 2 or 3");
  if (n < 8 || n % 2 != 0) throw DomainError("Grid: n must be even and >= 8");
  if (!(length > 0.0)) throw DomainError("Grid: length must be positive");
}

std::size_t Grid::points() const {
  std::size_t p = 1;
  for (int d = 0; d < dim_; ++d) p *= static_cast<std::size_t>(n_);
  return p;
}

std::size_t Grid::modes() const {
  std::size_t p = static_cast<std::size_t>(n_ / 2 + 1);
  for (int d = 0; d < dim_ - 1; ++d) p *= static_cast<std::size_t>(n_);
  return p;
}

double Grid::volume() const {
  double v = 1.0;
  for (int d = 0; d < dim_; ++d) v *= length_;
  return v;
}

std::array<int, 3> Grid::mode_of(std::size_t s) const {
  const int nh = n_ / 2 + 1;
  std::array<int, 3> m{};
  if (dim_ == 2) {
    m[0] = signed_mode(static_cast<int>(s / nh));
    m[1] = static_cast<int>(s % nh);
  } else {
    m[2] = static_cast<int>(s % nh);
    const std::size_t rest = s / nh;
    m[1] = signed_mode(static_cast<int>(rest % n_));
    m[0] = signed_mode(static_cast<int>(rest / n_));
  }
  return m;
}

std::array<int, 3> Grid::point_of(std::size_t p) const {
  std::array<int, 3> x{};
  if (dim_ == 2) {
    x[0] = static_cast<int>(p / n_);
    x[1] = static_cast<int>(p % n_);
  } else {
    x[2] = static_cast<int>(p % n_);
    const std::size_t rest = p / n_;
    x[1] = static_cast<int>(rest % n_);
    x[0] = static_cast<int>(rest / n_);
  }
  return x;
}

}  // namespace plob
