#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "mhsim/error.hpp"
#include "mhsim/rng.hpp"

namespace mhsim {

using Point = std::vector<double>;

inline double squared_distance(const Point& a, const Point& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

struct KMeansResult {
  std::vector<Point> centroids;
  std::vector<std::size_t> assignment;
  // Sum of squared distances to the assigned centroid, recorded after every
  // assignment step. Lloyd's algorithm keeps this non-increasing.
  std::vector<double> objective_history;
  int iterations = 0;
};

// Greedy farthest-point seeding: the first centre is a seeded uniform pick,
// each further centre is the point farthest from all chosen centres (lowest
// index on ties).
inline std::vector<Point> farthest_point_seeds(const std::vector<Point>& points, std::size_t k,
                                               std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<Point> centres;
  centres.reserve(k);
  centres.push_back(points[rng.uniform_below(points.size())]);
  std::vector<double> nearest(points.size(), std::numeric_limits<double>::infinity());
  while (centres.size() < k) {
    std::size_t best = 0;
    double best_distance = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double d = squared_distance(points[i], centres.back());
      if (d < nearest[i]) nearest[i] = d;
      if (nearest[i] > best_distance) {
        best_distance = nearest[i];
        best = i;
      }
    }
    centres.push_back(points[best]);
  }
  return centres;
}

// Lloyd's k-means. Empty clusters keep their previous centroid.
inline KMeansResult kmeans(const std::vector<Point>& points, std::size_t k, std::uint64_t seed,
                           int max_iterations = 100) {
  if (points.empty()) throw InsufficientDataError("kmeans: no points");
  if (k == 0 || k > points.size()) throw ConfigError("kmeans: k must be in [1, number of points]");
  const std::size_t dims = points.front().size();

  KMeansResult result;
  result.centroids = farthest_point_seeds(points, k, seed);
  result.assignment.assign(points.size(), k);

  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::size_t best = 0;
      double best_distance = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(points[i], result.centroids[c]);
        if (d < best_distance) {
          best_distance = d;
          best = c;
        }
      }
      if (result.assignment[i] != best) {
        result.assignment[i] = best;
        changed = true;
      }
      objective += best_distance;
    }
    result.objective_history.push_back(objective);
    result.iterations = iter + 1;
    if (!changed) break;

    std::vector<Point> sums(k, Point(dims, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t c = result.assignment[i];
      ++counts[c];
      for (std::size_t d = 0; d < dims; ++d) sums[c][d] += points[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t d = 0; d < dims; ++d) {
        result.centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
      }
    }
  }
  return result;
}

// Largest-remainder apportionment of `total` slots over groups of the given
// sizes. Ties in the fractional part go to the lower group index.
inline std::vector<std::size_t> largest_remainder(const std::vector<std::size_t>& sizes, std::size_t total) {
  std::size_t population = 0;
  for (std::size_t s : sizes) population += s;
  std::vector<std::size_t> quota(sizes.size(), 0);
  if (population == 0) return quota;

  std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (numerator remainder, index)
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const std::size_t numerator = sizes[i] * total;
    quota[i] = numerator / population;
    assigned += quota[i];
    remainders.emplace_back(numerator % population, i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < total && r < remainders.size(); ++r) {
    ++quota[remainders[r].second];
    ++assigned;
  }
  return quota;
}

}  // namespace mhsim
