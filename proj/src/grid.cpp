#include "pilotwave/grid.hpp"

#include <numbers>

namespace pilotwave {

void ModelParams::validate(int num_particles) const {
  if (hbar <= 0) throw ValidationError("model.hbar must be strictly positive");
  if (spin_dim < 1) throw ValidationError("model.spin_dim must be >= 1");
  if (static_cast<int>(masses.size()) != num_particles)
    throw ValidationError("model.masses must list one mass per particle");
  for (double m : masses)
    if (!(m > 0)) throw ValidationError("model.masses must be strictly positive");
}

namespace {

bool is_power_of_two(int m) { return m > 0 && (m & (m - 1)) == 0; }

}  // namespace

Grid::Grid(const GridSpec& spec, const ModelParams& params) : spec_(spec), params_(params) {
  num_axes_ = spec.num_particles * spec.space_dim;
  dx_ = (spec.x_max - spec.x_min) / spec.points_per_axis;
  num_cells_ = 1;
  for (int a = 0; a < num_axes_; ++a) num_cells_ *= static_cast<std::size_t>(spec.points_per_axis);
  cell_volume_ = std::pow(dx_, num_axes_);

  const int m = spec.points_per_axis;
  coords_.resize(m);
  wavenumbers_.resize(m);
  const double dk = 2.0 * std::numbers::pi / length();
  for (int j = 0; j < m; ++j) {
    coords_[j] = spec.x_min + j * dx_;
    int f = (j < m / 2) ? j : j - m;  // FFT frequency order
    wavenumbers_[j] = dk * f;
  }
}

std::shared_ptr<const Grid> Grid::build(const GridSpec& spec, const ModelParams& params) {
  if (spec.num_particles < 1) throw ValidationError("grid.num_particles must be >= 1");
  if (spec.space_dim < 1) throw ValidationError("grid.space_dim must be >= 1");
  if (!(spec.x_max > spec.x_min)) throw ValidationError("grid.box must satisfy x_min < x_max");
  if (!is_power_of_two(spec.points_per_axis))
    throw ValidationError("grid.points_per_axis must be a power of two");
  params.validate(spec.num_particles);

  const int axes = spec.num_particles * spec.space_dim;
  long double cells = 1.0L;
  for (int a = 0; a < axes; ++a) cells *= spec.points_per_axis;
  long double bytes = cells * params.spin_dim * sizeof(cxd);
  if (bytes > static_cast<long double>(spec.memory_budget_bytes))
    throw ResourceError("grid exceeds the configured memory budget");

  return std::shared_ptr<const Grid>(new Grid(spec, params));
}

bool Grid::inside_box(std::span<const double> pt) const {
  for (double x : pt)
    if (!inside_box(x)) return false;
  return true;
}

Lattice::Lattice(GridPtr grid, std::vector<int> particles)
    : grid_(std::move(grid)), particles_(std::move(particles)) {
  const int d = grid_->space_dim();
  num_axes_ = static_cast<int>(particles_.size()) * d;
  const int m = grid_->points_per_axis();
  num_cells_ = 1;
  for (int a = 0; a < num_axes_; ++a) num_cells_ *= static_cast<std::size_t>(m);
  cell_volume_ = std::pow(grid_->dx(), num_axes_);
  strides_.assign(num_axes_, 1);
  for (int a = num_axes_ - 2; a >= 0; --a) strides_[a] = strides_[a + 1] * m;
}

Lattice Lattice::full(GridPtr grid) {
  std::vector<int> all(grid->num_particles());
  for (int i = 0; i < grid->num_particles(); ++i) all[i] = i + 1;
  return Lattice(std::move(grid), std::move(all));
}

void Lattice::decode(std::size_t flat, std::span<int> idx) const {
  const int m = grid_->points_per_axis();
  for (int a = num_axes_ - 1; a >= 0; --a) {
    idx[a] = static_cast<int>(flat % m);
    flat /= m;
  }
}

std::size_t Lattice::encode(std::span<const int> idx) const {
  std::size_t flat = 0;
  for (int a = 0; a < num_axes_; ++a) flat += strides_[a] * static_cast<std::size_t>(idx[a]);
  return flat;
}

int Lattice::coord_offset_of(int particle) const {
  for (std::size_t i = 0; i < particles_.size(); ++i)
    if (particles_[i] == particle) return static_cast<int>(i) * grid_->space_dim();
  throw ValidationError("particle not on this lattice");
}

template <typename T>
T Field<T>::interpolate(std::span<const double> point) const {
  const int axes = lat_.num_axes();
  if (static_cast<int>(point.size()) != axes)
    throw ValidationError("interpolation point has wrong dimension");
  if (axes == 0) return data_[0];

  const Grid& g = *lat_.grid();
  const int m = g.points_per_axis();
  int base[16];
  double frac[16];
  if (axes > 16) throw ResourceError("interpolation supports at most 16 axes");
  for (int a = 0; a < axes; ++a) {
    const double x = point[a];
    if (!g.inside_box(x)) throw OutOfDomainError("point outside the box");
    double u = (x - g.x_min()) / g.dx();
    int i0 = static_cast<int>(u);
    if (i0 >= m) i0 = m - 1;  // guard against x just below x_max rounding up
    base[a] = i0;
    frac[a] = u - i0;
  }

  T acc{};
  const unsigned corners = 1u << axes;
  for (unsigned c = 0; c < corners; ++c) {
    double w = 1.0;
    std::size_t flat = 0;
    for (int a = 0; a < axes; ++a) {
      const bool hi = (c >> a) & 1u;
      w *= hi ? frac[a] : 1.0 - frac[a];
      int ia = base[a] + (hi ? 1 : 0);
      if (ia == m) ia = 0;  // periodic neighbor
      flat += lat_.stride(a) * static_cast<std::size_t>(ia);
    }
    if (w != 0.0) acc += data_[flat] * w;
  }
  return acc;
}

template class Field<double>;
template class Field<cxd>;

}  // namespace pilotwave
