#include "pilotwave/configspace.hpp"

#include <algorithm>
#include <bit>

namespace pilotwave {

IndexSet IndexSet::full(int n) {
  if (n < 0 || n > 32) throw ValidationError("index set supports up to 32 particles");
  IndexSet s;
  s.bits_ = (n == 32) ? ~0u : ((1u << n) - 1u);
  return s;
}

IndexSet IndexSet::from_members(std::span<const int> members, int n) {
  IndexSet s;
  for (int i : members) {
    if (i < 1 || i > n)
      throw ValidationError("index set member " + std::to_string(i) +
                            " outside {1,...," + std::to_string(n) + "}");
    s.bits_ |= 1u << (i - 1);
  }
  return s;
}

int IndexSet::count() const { return std::popcount(bits_); }

IndexSet IndexSet::complement(int n) const {
  IndexSet c = full(n);
  c.bits_ &= ~bits_;
  return c;
}

std::vector<int> IndexSet::members() const {
  std::vector<int> out;
  for (int i = 0; i < 32; ++i)
    if ((bits_ >> i) & 1u) out.push_back(i + 1);
  return out;
}

Permutation::Permutation(std::vector<int> image) : image_(std::move(image)) {
  std::vector<bool> seen(image_.size(), false);
  for (int v : image_) {
    if (v < 0 || v >= static_cast<int>(image_.size()) || seen[v])
      throw ValidationError("permutation image is not a bijection");
    seen[v] = true;
  }
}

Permutation Permutation::identity(int n) {
  std::vector<int> im(n);
  for (int i = 0; i < n; ++i) im[i] = i;
  return Permutation(std::move(im));
}

std::vector<Permutation> Permutation::enumerate(int n) {
  if (n > 5) throw ResourceError("permutation enumeration capped at N = 5");
  std::vector<int> im(n);
  for (int i = 0; i < n; ++i) im[i] = i;
  std::vector<Permutation> all;
  do {
    all.push_back(Permutation(im));
  } while (std::next_permutation(im.begin(), im.end()));
  return all;
}

Permutation Permutation::inverse() const {
  std::vector<int> inv(image_.size());
  for (int i = 0; i < static_cast<int>(image_.size()); ++i) inv[image_[i]] = i;
  return Permutation(std::move(inv));
}

Permutation Permutation::after(const Permutation& first) const {
  std::vector<int> im(image_.size());
  for (int i = 0; i < static_cast<int>(image_.size()); ++i) im[i] = image_[first(i)];
  return Permutation(std::move(im));
}

LabeledConfig apply_permutation(const Permutation& sigma, const LabeledConfig& q, int space_dim) {
  const int n = sigma.size();
  LabeledConfig out;
  out.time = q.time;
  out.q.resize(q.q.size());
  for (int j = 0; j < n; ++j)
    for (int a = 0; a < space_dim; ++a) out.q[sigma(j) * space_dim + a] = q.q[j * space_dim + a];
  return out;
}

std::size_t permute_cell(const Permutation& sigma, const Lattice& lat, std::size_t flat,
                         std::span<int> scratch_idx) {
  const int d = lat.grid()->space_dim();
  const int n = sigma.size();
  lat.decode(flat, scratch_idx);
  std::size_t out = 0;
  // block j of sigma(q) is block sigma^-1(j) of q; equivalently send block j
  // of q to slot sigma(j)
  for (int j = 0; j < n; ++j)
    for (int a = 0; a < d; ++a)
      out += lat.stride(sigma(j) * d + a) * static_cast<std::size_t>(scratch_idx[j * d + a]);
  return out;
}

bool lex_less(std::span<const double> a, std::span<const double> b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

void canonicalize_points(std::vector<double>& flat, int space_dim) {
  const int n = static_cast<int>(flat.size()) / space_dim;
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return lex_less(std::span(flat).subspan(i * space_dim, space_dim),
                    std::span(flat).subspan(j * space_dim, space_dim));
  });
  std::vector<double> sorted(flat.size());
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < space_dim; ++a) sorted[s * space_dim + a] = flat[order[s] * space_dim + a];
  for (int s = 0; s + 1 < n; ++s) {
    bool equal = true;
    for (int a = 0; a < space_dim; ++a)
      if (sorted[s * space_dim + a] != sorted[(s + 1) * space_dim + a]) {
        equal = false;
        break;
      }
    if (equal) throw CoincidenceError("coincident points in unordered configuration");
  }
  flat = std::move(sorted);
}

UnorderedConfig UnorderedConfig::from_labeled(const LabeledConfig& q, int space_dim) {
  return from_points(q.q, space_dim);
}

UnorderedConfig UnorderedConfig::from_points(std::vector<double> flat, int space_dim) {
  UnorderedConfig u;
  u.pts = std::move(flat);
  canonicalize_points(u.pts, space_dim);
  return u;
}

}  // namespace pilotwave
