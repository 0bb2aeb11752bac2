#pragma once

#include <random>

#include "pilotwave/grid.hpp"

namespace pilotwave {

// Categorical draw over cells by probability mass, then uniform jitter
// within the cell. The density need not be normalized; zero total mass is a
// validation error.
class CellSampler {
 public:
  explicit CellSampler(const Field<double>& density);

  std::vector<double> draw(std::mt19937_64& rng) const;

  const Lattice& lattice() const { return lat_; }

 private:
  Lattice lat_;
  std::vector<double> cumulative_;
};

// [sample_config] n draws from one stream.
std::vector<std::vector<double>> sample_config(const Field<double>& density, std::size_t n,
                                               std::mt19937_64& rng);

// Ensemble variant: draw i comes from substream (seed, tag, i), so tables
// are identical for any worker count or evaluation order.
std::vector<std::vector<double>> sample_config_streams(const Field<double>& density,
                                                       std::size_t n, uint64_t seed,
                                                       StreamTag tag);

}  // namespace pilotwave
