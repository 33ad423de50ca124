#include "permutopt/operators.hpp"

#include <algorithm>
#include <numeric>

namespace permutopt {

PermutationMap PermutationMap::identity(std::size_t d) {
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return PermutationMap(std::move(idx));
}

PermutationMap PermutationMap::from_indices(std::vector<std::size_t> indices) {
  std::vector<bool> seen(indices.size(), false);
  for (std::size_t i : indices) {
    if (i >= indices.size() || seen[i]) {
      throw ParameterError("PermutationMap: indices are not a bijection on 0.." +
                           std::to_string(indices.size()) + "-1");
    }
    seen[i] = true;
  }
  return PermutationMap(std::move(indices));
}

bool PermutationMap::is_identity() const {
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] != i) return false;
  }
  return true;
}

std::string to_string(PermutationScope scope) {
  return scope == PermutationScope::kJoint ? "joint" : "per_block";
}

PermutationScope permutation_scope_from_string(const std::string& s) {
  if (s == "joint") return PermutationScope::kJoint;
  if (s == "per_block") return PermutationScope::kPerBlock;
  throw ParameterError("unknown permutation scope '" + s + "' (expected joint or per_block)");
}

namespace {

void shuffle_range(SeededRng& rng, std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
  for (std::size_t i = end - begin; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(idx[begin + i - 1], idx[begin + j]);
  }
}

}  // namespace

PermutationMap sample_permutation(SeededRng& rng, std::size_t d) {
  if (d == 0) throw ParameterError("sample_permutation: dimension must be >= 1");
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  shuffle_range(rng, idx, 0, d);
  return PermutationMap::from_indices(std::move(idx));
}

PermutationMap sample_block_permutation(SeededRng& rng, std::span<const Segment> segments) {
  Index d = 0;
  for (const auto& s : segments) {
    if (s.offset != d || s.size < 0) throw ParameterError("sample_block_permutation: segments must tile the vector");
    d += s.size;
  }
  if (d == 0) throw ParameterError("sample_block_permutation: dimension must be >= 1");
  std::vector<std::size_t> idx(static_cast<std::size_t>(d));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (const auto& s : segments) {
    shuffle_range(rng, idx, static_cast<std::size_t>(s.offset), static_cast<std::size_t>(s.offset + s.size));
  }
  return PermutationMap::from_indices(std::move(idx));
}

PermutationMap inverse_permutation(const PermutationMap& map) {
  std::vector<std::size_t> inv(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) inv[map[i]] = i;
  return PermutationMap::from_indices(std::move(inv));
}

TriggerPolicy::TriggerPolicy(double t) : threshold(t) {
  if (!(t >= 0.0)) throw ParameterError("TriggerPolicy: threshold must be >= 0");
}

bool should_trigger(const Vector& g_now, const Vector& g_prev, const TriggerPolicy& policy) {
  if (g_now.size() != g_prev.size()) {
    throw ShapeError("should_trigger: gradients of length " + std::to_string(g_now.size()) + " and " +
                     std::to_string(g_prev.size()));
  }
  return (g_now - g_prev).norm() < policy.threshold;
}

double estimate_operator_norm(std::size_t d, std::size_t trials, SeededRng& rng) {
  if (d == 0 || trials == 0) throw ParameterError("estimate_operator_norm: d and trials must be >= 1");
  double best = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    Vector v(static_cast<Index>(d));
    do {
      for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
    } while (order_invariant_norm(v) == 0.0);
    const PermutationMap map = sample_permutation(rng, d);
    best = std::max(best, order_invariant_norm(apply_permutation(map, v)) / order_invariant_norm(v));
  }
  return best;
}

nlohmann::ordered_json to_json(const PermutationEvent& event) {
  nlohmann::ordered_json j;
  j["iteration"] = event.iteration;
  j["indices"] = std::vector<std::size_t>(event.map.indices().begin(), event.map.indices().end());
  j["pre_norm"] = event.pre_norm;
  j["post_norm"] = event.post_norm;
  return j;
}

PermutationEvent permutation_event_from_json(const nlohmann::ordered_json& j) {
  PermutationEvent e;
  e.iteration = j.at("iteration").get<std::size_t>();
  e.map = PermutationMap::from_indices(j.at("indices").get<std::vector<std::size_t>>());
  e.pre_norm = j.at("pre_norm").get<double>();
  e.post_norm = j.at("post_norm").get<double>();
  return e;
}

}  // namespace permutopt
