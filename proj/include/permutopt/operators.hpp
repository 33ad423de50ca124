#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "permutopt/numkit.hpp"
#include "permutopt/rng.hpp"

namespace permutopt {

/// A bijection on {0, ..., D-1}. Applied to a vector v it yields
/// out[i] = v[indices[i]].
class PermutationMap {
 public:
  PermutationMap() = default;

  static PermutationMap identity(std::size_t d);

  /// Validates that `indices` is a bijection; throws ParameterError otherwise.
  static PermutationMap from_indices(std::vector<std::size_t> indices);

  std::size_t size() const { return indices_.size(); }
  std::span<const std::size_t> indices() const { return indices_; }
  std::size_t operator[](std::size_t i) const { return indices_[i]; }
  bool is_identity() const;

  friend bool operator==(const PermutationMap&, const PermutationMap&) = default;

 private:
  explicit PermutationMap(std::vector<std::size_t> indices) : indices_(std::move(indices)) {}
  std::vector<std::size_t> indices_;
};

/// Contiguous run of coordinates in a flattened parameter vector (one matrix block).
struct Segment {
  Index offset = 0;
  Index size = 0;
  std::string name;

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Which coordinates a permutation event may mix.
enum class PermutationScope {
  kJoint,    ///< all coordinates of the flattened parameter vector
  kPerBlock  ///< each Segment is permuted independently
};

std::string to_string(PermutationScope scope);
PermutationScope permutation_scope_from_string(const std::string& s);

/// Uniform permutation of size d by Fisher-Yates with unbiased index draws.
PermutationMap sample_permutation(SeededRng& rng, std::size_t d);

/// Uniform over permutations that map every segment onto itself. Segments must
/// tile [0, d) in order.
PermutationMap sample_block_permutation(SeededRng& rng, std::span<const Segment> segments);

template <typename Derived>
Vector apply_permutation(const PermutationMap& map, const Eigen::MatrixBase<Derived>& v) {
  if (static_cast<std::size_t>(v.size()) != map.size()) {
    throw ShapeError("apply_permutation: vector of length " + std::to_string(v.size()) +
                     " vs map of size " + std::to_string(map.size()));
  }
  Vector out(v.size());
  for (std::size_t i = 0; i < map.size(); ++i) out[static_cast<Index>(i)] = v[static_cast<Index>(map[i])];
  return out;
}

PermutationMap inverse_permutation(const PermutationMap& map);

/// Stagnation trigger: fires when ||g_now - g_prev||_2 < threshold.
struct TriggerPolicy {
  double threshold = 1.0e-2;

  TriggerPolicy() = default;
  explicit TriggerPolicy(double threshold);
};

bool should_trigger(const Vector& g_now, const Vector& g_prev, const TriggerPolicy& policy);

/// max over `trials` of ||R v|| / ||v|| for random nonzero v and random maps R.
double estimate_operator_norm(std::size_t d, std::size_t trials, SeededRng& rng);

struct PermutationEvent {
  std::size_t iteration = 0;
  PermutationMap map;
  double pre_norm = 0.0;
  double post_norm = 0.0;

  friend bool operator==(const PermutationEvent&, const PermutationEvent&) = default;
};

nlohmann::ordered_json to_json(const PermutationEvent& event);
PermutationEvent permutation_event_from_json(const nlohmann::ordered_json& j);

}  // namespace permutopt
