#include "pilotwave/sampling.hpp"

#include <algorithm>

namespace pilotwave {

CellSampler::CellSampler(const Field<double>& density) : lat_(density.lattice()) {
  cumulative_.resize(density.size());
  double acc = 0;
  for (std::size_t c = 0; c < density.size(); ++c) {
    const double v = density[c];
    if (v < -1e-12) throw ValidationError("sampling density has negative mass");
    acc += std::max(0.0, v);  // clip spectral rounding noise
    cumulative_[c] = acc;
  }
  if (!(acc > 0)) throw ValidationError("sampling density has zero total mass");
}

std::vector<double> CellSampler::draw(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double target = uni(rng) * cumulative_.back();
  const std::size_t cell =
      std::lower_bound(cumulative_.begin(), cumulative_.end(), target) - cumulative_.begin();
  const int axes = lat_.num_axes();
  std::vector<int> idx(axes);
  lat_.decode(std::min(cell, cumulative_.size() - 1), idx);
  const Grid& g = *lat_.grid();
  std::vector<double> point(axes);
  for (int a = 0; a < axes; ++a) {
    // node-centered cell, wrapped at the seam: jittering upward from the
    // node would bias every draw by dx/2 against the density it represents
    double x = g.x_min() + (idx[a] + uni(rng) - 0.5) * g.dx();
    if (x < g.x_min()) x += g.length();
    if (x >= g.x_max()) x -= g.length();
    point[a] = x;
  }
  return point;
}

std::vector<std::vector<double>> sample_config(const Field<double>& density, std::size_t n,
                                               std::mt19937_64& rng) {
  CellSampler sampler(density);
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sampler.draw(rng));
  return out;
}

std::vector<std::vector<double>> sample_config_streams(const Field<double>& density,
                                                       std::size_t n, uint64_t seed,
                                                       StreamTag tag) {
  CellSampler sampler(density);
  std::vector<std::vector<double>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng = make_rng(seed, tag, i);
    out[i] = sampler.draw(rng);
  }
  return out;
}

}  // namespace pilotwave
