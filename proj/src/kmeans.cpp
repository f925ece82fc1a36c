#include "gblab/kmeans.hpp"

#include <limits>
#include <random>
#include <stdexcept>

namespace gblab {

namespace {

double sq_dist(const Mat& points, int i, const Mat& centroids, int c) {
  return (points.row(i) - centroids.row(c)).squaredNorm();
}

Mat seed_plus_plus(const Mat& points, int k, std::mt19937_64& rng) {
  const int n = static_cast<int>(points.rows());
  Mat centroids(k, points.cols());
  std::uniform_int_distribution<int> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  Vec d2 = Vec::Constant(n, std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    for (int i = 0; i < n; ++i)
      d2(i) = std::min(d2(i), (points.row(i) - centroids.row(c - 1)).squaredNorm());
    double total = d2.sum();
    int pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      double r = unit(rng) * total;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    }
    // total == 0: every point already coincides with a center; row 0 is fine.
    centroids.row(c) = points.row(pick);
  }
  return centroids;
}

KMeansResult lloyd(const Mat& points, int k, std::mt19937_64& rng,
                   const KMeansConfig& config) {
  const int n = static_cast<int>(points.rows());
  KMeansResult res;
  res.centroids = seed_plus_plus(points, k, rng);
  res.assignment.assign(n, 0);

  for (int iter = 0; iter < config.max_iters; ++iter) {
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        double d = sq_dist(points, i, res.centroids, c);
        if (d < best) {
          best = d;
          res.assignment[i] = c;
        }
      }
    }
    Mat next = Mat::Zero(k, points.cols());
    std::vector<int> count(k, 0);
    for (int i = 0; i < n; ++i) {
      next.row(res.assignment[i]) += points.row(i);
      ++count[res.assignment[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (count[c] > 0) {
        next.row(c) /= static_cast<double>(count[c]);
      } else {
        // Reseed an emptied cluster to the point farthest from its centroid.
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          double d = sq_dist(points, i, res.centroids, res.assignment[i]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        next.row(c) = points.row(far);
      }
    }
    double shift = (next - res.centroids).rowwise().norm().maxCoeff();
    res.centroids = next;
    if (shift <= config.tol) break;
  }

  res.sse = 0.0;
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      double d = sq_dist(points, i, res.centroids, c);
      if (d < best) {
        best = d;
        res.assignment[i] = c;
      }
    }
    res.sse += best;
  }
  return res;
}

// Exact 2-means by bipartition enumeration. Lloyd restarts cannot guarantee
// the optimum here: in high dimension every bipartition is linearly separable,
// so no seeding heuristic covers them all. At this size scanning them is free.
KMeansResult exact_two_means(const Mat& points) {
  const int n = static_cast<int>(points.rows());
  KMeansResult best;
  best.sse = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
    Mat sums = Mat::Zero(2, points.cols());
    int count[2] = {0, 0};
    for (int i = 0; i < n; ++i) {
      int side = (mask >> i) & 1u;
      sums.row(side) += points.row(i);
      ++count[side];
    }
    sums.row(0) /= count[0];
    sums.row(1) /= count[1];
    double sse = 0.0;
    for (int i = 0; i < n; ++i)
      sse += (points.row(i) - sums.row((mask >> i) & 1u)).squaredNorm();
    if (sse < best.sse) {
      best.sse = sse;
      best.centroids = sums;
      best.assignment.resize(n);
      for (int i = 0; i < n; ++i) best.assignment[i] = (mask >> i) & 1;
    }
  }
  // Canonical labels: point 0 belongs to cluster 0.
  if (best.assignment[0] == 1) {
    for (int& a : best.assignment) a ^= 1;
    best.centroids.row(0).swap(best.centroids.row(1));
  }
  return best;
}

}  // namespace

KMeansResult kmeans(const Mat& points, int k, Seed seed, KMeansConfig config) {
  if (k < 1) throw std::runtime_error("kmeans: k must be >= 1");
  if (points.rows() < k) throw std::runtime_error("kmeans: more clusters than points");
  if (k == 2 && points.rows() >= 2 && points.rows() <= 16)
    return exact_two_means(points);
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.sse = std::numeric_limits<double>::infinity();
  for (int r = 0; r < config.restarts; ++r) {
    KMeansResult run = lloyd(points, k, rng, config);
    if (run.sse < best.sse) best = std::move(run);
  }
  return best;
}

std::vector<int> nearest_points(const Mat& points, const KMeansResult& result) {
  const int k = static_cast<int>(result.centroids.rows());
  std::vector<int> out(k, 0);
  for (int c = 0; c < k; ++c) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < points.rows(); ++i) {
      double d = (points.row(i) - result.centroids.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        out[c] = static_cast<int>(i);
      }
    }
  }
  return out;
}

}  // namespace gblab
