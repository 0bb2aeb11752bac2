#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace pilotwave {

using cxd = std::complex<double>;

inline constexpr double kNodeFloor = 1e-12;

// Error taxonomy; the CLI maps these onto its exit-code contract
// (2 = parse, 3 = validation/resource, 1 = statistical fail).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ResourceError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// A particle position left the box. Positions are not wrapped periodically;
// leaving the domain is a modeling error, not a topology change.
class OutOfDomainError : public Error {
 public:
  using Error::Error;
};

// Symmetrization/antisymmetrization collapsed the state to (numerically) zero.
class ZeroStateError : public Error {
 public:
  using Error::Error;
};

// Unordered configurations require pairwise distinct points.
class CoincidenceError : public Error {
 public:
  using Error::Error;
};

// Velocity denominator below the node floor; carries where and when.
class NodeProximityError : public Error {
 public:
  NodeProximityError(const std::string& msg, std::vector<double> position, double time)
      : Error(msg), position_(std::move(position)), time_(time) {}
  const std::vector<double>& position() const { return position_; }
  double time() const { return time_; }

 private:
  std::vector<double> position_;
  double time_;
};

enum class AbortReason : int {
  None = 0,
  NodeProximity = 1,  // denominator under the floor at minimum substep
  LeftBox = 2,        // trajectory left the domain
  RateBound = 3,      // thinning bound violated at minimum substep
};

const char* to_string(AbortReason r);

// --- deterministic RNG streams ------------------------------------------

uint64_t splitmix64(uint64_t x);

// Tags keep independent sampling purposes on disjoint streams.
enum class StreamTag : uint64_t {
  InitialDraw = 0x1001,
  FreshDraw = 0x2002,
  JumpPath = 0x3003,
  Calibration = 0x4004,
  Generic = 0x5005,
};

uint64_t substream_seed(uint64_t seed, StreamTag tag, uint64_t index);
std::mt19937_64 make_rng(uint64_t seed, StreamTag tag, uint64_t index);

// --- deterministic parallel execution ------------------------------------

// Worker count: PILOTWAVE_WORKERS if set, else hardware concurrency.
int default_worker_count();

// Static contiguous partition of [0, n) over `workers` threads. Chunk
// boundaries depend only on (n, workers), so per-index work that writes to
// its own slot is bitwise reproducible for any worker count.
void parallel_for_chunks(std::size_t n, int workers,
                         const std::function<void(std::size_t, std::size_t)>& chunk);

// FNV-1a, used for config hashes in manifests.
uint64_t fnv1a64(const std::string& bytes);

std::string version_string();

}  // namespace pilotwave
