#pragma once

// Nearest-neighbour ratio-test matching of local feature descriptor sets.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

#include "photoreport/domain.hpp"

namespace photoreport {

inline constexpr double kDefaultRatio = 0.75;

inline double euclidean(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

/// Counts descriptors of `query` whose nearest neighbour in `train` passes the
/// ratio test d1 <= ratio * d2. A train set with fewer than two descriptors
/// has no second neighbour and matches nothing. Not symmetric in its inputs.
inline std::size_t match_keypoints(const KeypointSet& query, const KeypointSet& train,
                                   double ratio = kDefaultRatio) {
  if (query.empty() || train.empty()) return 0;
  if (query.dim() != train.dim()) throw std::invalid_argument("keypoint dimension mismatch");
  if (train.count() < 2) return 0;

  std::size_t matches = 0;
  for (std::size_t i = 0; i < query.count(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    double second = best;
    for (std::size_t j = 0; j < train.count(); ++j) {
      const double d = euclidean(query[i], train[j]);
      if (d < best) {
        second = best;
        best = d;
      } else if (d < second) {
        second = d;
      }
    }
    if (best <= ratio * second) ++matches;
  }
  return matches;
}

inline bool similar_visual(const KeypointSet& a, const KeypointSet& b, std::size_t min_matches,
                           double ratio = kDefaultRatio) {
  return match_keypoints(a, b, ratio) >= min_matches;
}

}  // namespace photoreport
