#pragma once

#include <vector>

#include "gblab/types.hpp"

namespace gblab {

struct KMeansResult {
  Mat centroids;                // k x dim
  std::vector<int> assignment;  // point -> cluster
  double sse = 0.0;             // sum of squared distances to assigned centroids
};

struct KMeansConfig {
  int restarts = 10;
  int max_iters = 300;
  double tol = 1e-6;  // stop when no centroid moves more than this
};

// Lloyd iterations with k-means++ seeding; the best of `restarts` runs (by
// SSE, ties to the earliest run) is returned. Deterministic under seed. An
// emptied cluster is reseeded to the point farthest from its centroid.
// k == 2 with at most 16 points is solved exactly by scanning every
// bipartition, since Lloyd restarts can miss the optimum at that size.
KMeansResult kmeans(const Mat& points, int k, Seed seed, KMeansConfig config = {});

// Index of the point nearest to each centroid (ties to the lowest index).
std::vector<int> nearest_points(const Mat& points, const KMeansResult& result);

}  // namespace gblab
