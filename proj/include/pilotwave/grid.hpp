#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "pilotwave/common.hpp"

namespace pilotwave {

struct ModelParams {
  double hbar = 1.0;
  std::vector<double> masses;  // one per particle, strictly positive
  int spin_dim = 1;            // l >= 1

  void validate(int num_particles) const;
};

// One half-open interval [x_min, x_max) shared by every configuration axis.
struct GridSpec {
  int num_particles = 1;
  int space_dim = 1;
  double x_min = -20.0;
  double x_max = 20.0;
  int points_per_axis = 256;                              // power of two
  std::size_t memory_budget_bytes = std::size_t(2) << 30;  // 2 GiB
};

// Periodic configuration-space grid: N*d axes of M points each.
class Grid : public std::enable_shared_from_this<Grid> {
 public:
  // [build_grid] Validates the spec (M power of two, memory budget) and
  // precomputes axis coordinates and FFT-ordered wavenumbers.
  static std::shared_ptr<const Grid> build(const GridSpec& spec, const ModelParams& params);

  const GridSpec& spec() const { return spec_; }
  const ModelParams& params() const { return params_; }

  int num_particles() const { return spec_.num_particles; }
  int space_dim() const { return spec_.space_dim; }
  int num_axes() const { return num_axes_; }
  int points_per_axis() const { return spec_.points_per_axis; }
  std::size_t num_cells() const { return num_cells_; }

  double x_min() const { return spec_.x_min; }
  double x_max() const { return spec_.x_max; }
  double length() const { return spec_.x_max - spec_.x_min; }
  double dx() const { return dx_; }
  double cell_volume() const { return cell_volume_; }  // dx^(N*d)

  const std::vector<double>& axis_coords() const { return coords_; }
  const std::vector<double>& axis_wavenumbers() const { return wavenumbers_; }

  // axis index of (particle, component); particles are 1-based.
  int axis_of(int particle, int comp) const { return (particle - 1) * spec_.space_dim + comp; }
  int particle_of_axis(int axis) const { return axis / spec_.space_dim + 1; }
  double mass_for_axis(int axis) const { return params_.masses[axis / spec_.space_dim]; }

  bool inside_box(double x) const { return x >= spec_.x_min && x < spec_.x_max; }
  bool inside_box(std::span<const double> pt) const;

 private:
  Grid(const GridSpec& spec, const ModelParams& params);

  GridSpec spec_;
  ModelParams params_;
  int num_axes_ = 0;
  std::size_t num_cells_ = 0;
  double dx_ = 0;
  double cell_volume_ = 0;
  std::vector<double> coords_;
  std::vector<double> wavenumbers_;
};

using GridPtr = std::shared_ptr<const Grid>;

// Regular sublattice spanned by a subset of particles (all axes share the
// grid's coordinates). Zero retained particles is allowed: a single cell.
class Lattice {
 public:
  Lattice() = default;
  Lattice(GridPtr grid, std::vector<int> particles);  // particles sorted, 1-based
  static Lattice full(GridPtr grid);

  const GridPtr& grid() const { return grid_; }
  const std::vector<int>& particles() const { return particles_; }
  int num_axes() const { return num_axes_; }
  std::size_t num_cells() const { return num_cells_; }
  double cell_volume() const { return cell_volume_; }

  std::size_t stride(int axis) const { return strides_[axis]; }
  void decode(std::size_t flat, std::span<int> idx) const;
  std::size_t encode(std::span<const int> idx) const;

  // offset of a particle's first coordinate in a point vector on this lattice
  int coord_offset_of(int particle) const;

  bool operator==(const Lattice& o) const {
    return grid_ == o.grid_ && particles_ == o.particles_;
  }

 private:
  GridPtr grid_;
  std::vector<int> particles_;
  int num_axes_ = 0;
  std::size_t num_cells_ = 1;
  double cell_volume_ = 1.0;
  std::vector<std::size_t> strides_;
};

// Dense scalar field sampled at lattice nodes.
template <typename T>
class Field {
 public:
  Field() = default;
  Field(Lattice lat, T fill = T{}) : lat_(std::move(lat)), data_(lat_.num_cells(), fill) {}

  const Lattice& lattice() const { return lat_; }
  std::size_t size() const { return data_.size(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  // Riemann cell-sum integral.
  T integral() const {
    T acc{};
    for (const T& v : data_) acc += v;
    return acc * static_cast<decltype(std::abs(T{}))>(lat_.cell_volume());
  }

  // Multilinear interpolation over the 2^D surrounding nodes. Exact at grid
  // nodes; neighbor lookup wraps periodically (the field is periodic), but
  // the query point itself must lie inside the box.
  T interpolate(std::span<const double> point) const;

 private:
  Lattice lat_;
  std::vector<T> data_;
};

// [eval_field] Named per-operation entry point; throws OutOfDomainError for
// points outside the box.
template <typename T>
T eval_field(const Field<T>& field, std::span<const double> point) {
  return field.interpolate(point);
}

extern template class Field<double>;
extern template class Field<cxd>;

}  // namespace pilotwave
