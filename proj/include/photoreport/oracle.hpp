#pragma once

// Exact reference for the photo-selection problem on small streams: the
// largest set of mutually dissimilar submissions is a maximum independent set
// of the similarity graph.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "photoreport/atree.hpp"

namespace photoreport {

class SimilarityGraph {
 public:
  explicit SimilarityGraph(std::size_t n = 0) : adjacency_(n) {}

  std::size_t size() const noexcept { return adjacency_.size(); }

  void add_edge(std::size_t i, std::size_t j) {
    if (i == j) throw std::invalid_argument("similarity graph has no self-loops");
    if (i >= size() || j >= size()) throw std::out_of_range("edge endpoint out of range");
    if (has_edge(i, j)) return;
    adjacency_[i].push_back(j);
    adjacency_[j].push_back(i);
    ++edges_;
  }

  bool has_edge(std::size_t i, std::size_t j) const {
    for (auto k : adjacency_[i])
      if (k == j) return true;
    return false;
  }

  std::size_t edge_count() const noexcept { return edges_; }
  const std::vector<std::size_t>& neighbours(std::size_t i) const { return adjacency_[i]; }

  std::vector<std::pair<std::size_t, std::size_t>> edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < size(); ++i)
      for (auto j : adjacency_[i])
        if (i < j) out.emplace_back(i, j);
    std::sort(out.begin(), out.end());
    return out;
  }

  bool is_independent(std::span<const std::size_t> vertices) const {
    for (std::size_t a = 0; a < vertices.size(); ++a)
      for (std::size_t b = a + 1; b < vertices.size(); ++b)
        if (has_edge(vertices[a], vertices[b])) return false;
    return true;
  }

 private:
  std::vector<std::vector<std::size_t>> adjacency_;
  std::size_t edges_ = 0;
};

/// Edge (i, j) iff the two submissions are similar under every layer.
inline SimilarityGraph build_graph(std::span<const Submission> subs, std::span<const LayerSpec> layers,
                                   const MatchParams& params = {}) {
  SimilarityGraph g(subs.size());
  for (std::size_t i = 0; i < subs.size(); ++i)
    for (std::size_t j = i + 1; j < subs.size(); ++j) {
      bool all = true;
      for (const auto& layer : layers)
        if (!similar_under(layer, subs[i], subs[j], params)) {
          all = false;
          break;
        }
      if (all) g.add_edge(i, j);
    }
  return g;
}

inline constexpr std::size_t kMaxOracleVertices = 24;

struct IndependentSet {
  std::size_t size = 0;
  std::vector<std::size_t> witness;  // ascending vertex indices
};

/// Exact maximum independent set by include-first branch and bound. The
/// include-first order visits candidate sets lexicographically, and only a
/// strictly larger set replaces the incumbent, so the witness is the
/// lexicographically smallest maximum set.
inline IndependentSet max_independent_set(const SimilarityGraph& g) {
  const std::size_t n = g.size();
  if (n > kMaxOracleVertices)
    throw std::invalid_argument("oracle refuses graphs above " + std::to_string(kMaxOracleVertices) + " vertices");

  std::vector<std::uint32_t> closed(n);  // vertex plus neighbours
  for (std::size_t v = 0; v < n; ++v) {
    closed[v] = std::uint32_t{1} << v;
    for (auto u : g.neighbours(v)) closed[v] |= std::uint32_t{1} << u;
  }

  std::uint32_t best = 0;
  int best_size = 0;

  auto search = [&](auto&& self, std::uint32_t candidates, std::uint32_t chosen, int chosen_size) -> void {
    if (candidates == 0) {
      if (chosen_size > best_size) {
        best_size = chosen_size;
        best = chosen;
      }
      return;
    }
    if (chosen_size + std::popcount(candidates) <= best_size) return;
    const int v = std::countr_zero(candidates);
    const std::uint32_t bit = std::uint32_t{1} << v;
    self(self, candidates & ~closed[static_cast<std::size_t>(v)], chosen | bit, chosen_size + 1);
    self(self, candidates & ~bit, chosen, chosen_size);
  };
  const std::uint32_t all = n == 0 ? 0 : (n == 32 ? ~std::uint32_t{0} : (std::uint32_t{1} << n) - 1);
  search(search, all, 0, 0);

  IndependentSet out;
  out.size = static_cast<std::size_t>(best_size);
  for (std::size_t v = 0; v < n; ++v)
    if (best & (std::uint32_t{1} << v)) out.witness.push_back(v);
  return out;
}

/// Leaf-group count over the exact optimum. Not clamped: a greedy tree under
/// non-transitive similarity can exceed the optimum when D > 1.
inline double coverage_ratio(std::size_t tree_groups, std::size_t oracle_size) {
  if (oracle_size == 0) throw std::invalid_argument("coverage_ratio needs a non-empty optimum");
  return static_cast<double>(tree_groups) / static_cast<double>(oracle_size);
}

}  // namespace photoreport
