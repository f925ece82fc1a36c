#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "gblab/graph.hpp"

using namespace gblab;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(static_cast<bool>(f));
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const std::string& text, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  f << text;
}

// 0-1-2-3-4 path with distinct one-hot-ish features.
Graph path_graph(int n, int dim = 3) {
  Mat x = Mat::Zero(n, dim);
  for (int v = 0; v < n; ++v) x(v, v % dim) = 1.0 + v;
  std::vector<std::pair<int, int>> edges;
  for (int v = 0; v + 1 < n; ++v) edges.emplace_back(v, v + 1);
  return make_graph(n, std::move(x), std::vector<int>(n, 0), 1, edges);
}

// Independent breadth-first reference: ascending-id neighbor visits, stop at
// `size` dequeued nodes.
std::vector<int> reference_bfs(const std::vector<std::set<int>>& adj, int center,
                               int size) {
  std::vector<int> order;
  std::vector<char> seen(adj.size(), 0);
  std::vector<int> queue{center};
  seen[center] = 1;
  size_t head = 0;
  while (head < queue.size() && static_cast<int>(order.size()) < size) {
    int v = queue[head++];
    order.push_back(v);
    for (int w : adj[v])  // std::set iterates ascending
      if (!seen[w]) {
        seen[w] = 1;
        queue.push_back(w);
      }
  }
  return order;
}

Graph graph_from_adj(const std::vector<std::set<int>>& adj) {
  int n = static_cast<int>(adj.size());
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < n; ++u)
    for (int v : adj[u])
      if (v > u) edges.emplace_back(u, v);
  Mat x = Mat::Zero(n, 2);
  for (int v = 0; v < n; ++v) x(v, 0) = v;
  return make_graph(n, std::move(x), std::vector<int>(n, 0), 1, edges);
}

void check_bfs_against_reference(const std::vector<std::set<int>>& adj) {
  Graph g = graph_from_adj(adj);
  int n = g.num_nodes;
  for (int center = 0; center < n; ++center)
    for (int size : {1, 2, n}) {
      Subgraph sub = bfs_subgraph(g, center, size);
      std::vector<int> want = reference_bfs(adj, center, size);
      REQUIRE(sub.parent_ids == want);
      REQUIRE(sub.short_sample == (static_cast<int>(want.size()) < size));
      // Induced edges recomputed independently from the adjacency sets.
      std::vector<std::pair<int, int>> want_edges;
      for (int i = 0; i < static_cast<int>(want.size()); ++i)
        for (int j = i + 1; j < static_cast<int>(want.size()); ++j)
          if (adj[want[i]].count(want[j])) want_edges.emplace_back(i, j);
      std::sort(want_edges.begin(), want_edges.end());
      REQUIRE(sub.edges == want_edges);
      for (int i = 0; i < sub.size(); ++i)
        REQUIRE(sub.features.row(i) == g.features.row(want[i]));
    }
}

}  // namespace

TEST_CASE("make_graph validates and canonicalizes") {
  Mat x = Mat::Zero(3, 2);
  std::vector<int> labels{0, 1, 0};

  CHECK_THROWS_AS(make_graph(3, x, labels, 2, {{0, 0}}), std::runtime_error);
  CHECK_THROWS_AS(make_graph(3, x, std::vector<int>{0, 1}, 2, {}),
                  std::runtime_error);
  CHECK_THROWS_AS(make_graph(3, x, labels, 2, {{0, 3}}), std::runtime_error);

  // Duplicates and swapped orientations collapse to one undirected edge.
  Graph g = make_graph(3, x, labels, 2, {{1, 0}, {0, 1}, {0, 1}, {1, 2}});
  CHECK(g.num_edges == 2);
  CHECK(g.has_edge(0, 1));
  CHECK(g.has_edge(1, 0));
  CHECK(g.has_edge(1, 2));
  CHECK_FALSE(g.has_edge(0, 2));
  auto nb = g.neighbors(1);
  CHECK(std::vector<int>(nb.begin(), nb.end()) == std::vector<int>{0, 2});
  CHECK(g.degree(1) == 2);
  CHECK(g.degree(0) == 1);
}

TEST_CASE("graph text round trip is byte stable") {
  Mat x(4, 2);
  x << 1.0 / 3.0, -0.25, 1e-17, 123456.789, -1.0, 0.0, 2.5e-8, -7.125;
  std::vector<int> labels{0, 1, -1, 2};
  Graph g = make_graph(4, x, labels, 3, {{0, 1}, {1, 2}, {0, 3}});

  std::string p1 = temp_path("gblab_rt1.gtf");
  std::string p2 = temp_path("gblab_rt2.gtf");
  write_graph(g, p1);
  Graph back = load_graph(p1);
  CHECK(back.num_nodes == 4);
  CHECK(back.num_classes == 3);
  CHECK(back.labels == labels);
  CHECK(back.features == g.features);  // exact: shortest-round-trip decimals
  CHECK(back.num_edges == 3);
  CHECK(back.has_edge(0, 3));

  write_graph(back, p2);
  CHECK(slurp_file(p1) == slurp_file(p2));
}

TEST_CASE("loader reports malformed files with the path") {
  std::string p = temp_path("gblab_bad.gtf");

  spit("abc\n", p);
  CHECK_THROWS_AS(load_graph(p), std::runtime_error);

  spit("2 1 2 1\n0 1.0 2.0\n", p);  // truncated: missing node 1 onward
  CHECK_THROWS_AS(load_graph(p), std::runtime_error);

  spit("2 1 1 1\n0 1.0\n1 2.0\n0 0\n1 0\n0 5\n", p);  // edge endpoint 5 of 2
  CHECK_THROWS_AS(load_graph(p), std::runtime_error);

  spit("abc\n", p);
  try {
    load_graph(p);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(p) != std::string::npos);
  }

  CHECK_THROWS_AS(load_graph(temp_path("gblab_no_such_file.gtf")),
                  std::runtime_error);
}

TEST_CASE("loader skips comment lines") {
  std::string p = temp_path("gblab_comments.gtf");
  spit("# header\n2 1 1 2\n# features\n0 1.5\n1 -2.5\n0 0\n1 1\n# edges\n0 1\n",
       p);
  Graph g = load_graph(p);
  CHECK(g.num_nodes == 2);
  CHECK(g.features(1, 0) == -2.5);
  CHECK(g.labels == std::vector<int>{0, 1});
  CHECK(g.has_edge(0, 1));
}

TEST_CASE("role files round trip and reject junk") {
  SbmParams p;
  p.blocks = {{20, 0}, {20, 1}};
  p.feature_dim = 4;
  p.seed = 3;
  Graph g = split_dataset(gen_sbm(p), 9);

  std::string path = temp_path("gblab_roles.txt");
  write_roles(g, path);
  Graph fresh = gen_sbm(p);
  load_roles(fresh, path);
  CHECK(fresh.roles == g.roles);

  spit("0 nonsense-role\n", path);
  CHECK_THROWS_AS(load_roles(fresh, path), std::runtime_error);
  spit("99 train-labeled\n", path);
  CHECK_THROWS_AS(load_roles(fresh, path), std::runtime_error);
}

TEST_CASE("degenerate SBM probabilities give two cliques") {
  SbmParams p;
  p.blocks = {{3, 0}, {3, 1}};
  p.p_in = 1.0;
  p.p_out = 0.0;
  p.feature_dim = 2;
  p.seed = 1;
  Graph g = gen_sbm(p);
  CHECK(g.num_nodes == 6);
  CHECK(g.num_classes == 2);
  CHECK(g.num_edges == 6);  // two triangles
  for (int u = 0; u < 3; ++u)
    for (int v = u + 1; v < 3; ++v) {
      CHECK(g.has_edge(u, v));
      CHECK(g.has_edge(u + 3, v + 3));
      CHECK_FALSE(g.has_edge(u, v + 3));
    }
  CHECK(g.labels == std::vector<int>{0, 0, 0, 1, 1, 1});
}

TEST_CASE("SBM edge counts match their probabilities") {
  // Mean intra-block edge count over 30 seeds vs the binomial expectation,
  // within 3 sigma of the sample-mean deviation.
  const int trials = 30;
  const double p_in = 0.2, p_out = 0.05;
  const int b = 40;
  double intra_pairs = 2.0 * (b * (b - 1) / 2);  // two blocks
  double inter_pairs = static_cast<double>(b) * b;

  double intra_sum = 0, inter_sum = 0;
  for (int t = 0; t < trials; ++t) {
    SbmParams p;
    p.blocks = {{b, 0}, {b, 1}};
    p.p_in = p_in;
    p.p_out = p_out;
    p.feature_dim = 2;
    p.seed = 1000 + t;
    Graph g = gen_sbm(p);
    for (auto [u, v] : g.edge_list()) {
      bool intra = (u < b) == (v < b);
      (intra ? intra_sum : inter_sum) += 1.0;
    }
  }
  double intra_mean = intra_sum / trials, inter_mean = inter_sum / trials;
  double intra_sigma = std::sqrt(intra_pairs * p_in * (1 - p_in) / trials);
  double inter_sigma = std::sqrt(inter_pairs * p_out * (1 - p_out) / trials);
  CHECK(std::abs(intra_mean - intra_pairs * p_in) <= 3 * intra_sigma);
  CHECK(std::abs(inter_mean - inter_pairs * p_out) <= 3 * inter_sigma);
}

TEST_CASE("SBM features concentrate on the class axis") {
  SbmParams p;
  p.blocks = {{50, 0}, {50, 1}};
  p.feature_dim = 4;
  p.mean_separation = 2.0;
  p.noise = 0.1;
  p.seed = 5;
  Graph g = gen_sbm(p);
  Vec mean0 = g.features.topRows(50).colwise().mean();
  Vec mean1 = g.features.bottomRows(50).colwise().mean();
  CHECK(mean0[0] == doctest::Approx(2.0).epsilon(0.05));
  CHECK(mean1[1] == doctest::Approx(2.0).epsilon(0.05));
  CHECK(std::abs(mean0[1]) < 0.1);
  CHECK(std::abs(mean1[0]) < 0.1);
  CHECK(gen_sbm(p).features == g.features);  // same seed, same graph
}

TEST_CASE("bfs_subgraph on a path matches the hand trace") {
  Graph g = path_graph(5);
  Subgraph sub = bfs_subgraph(g, 2, 3);
  CHECK(sub.parent_ids == std::vector<int>{2, 1, 3});
  CHECK_FALSE(sub.short_sample);
  // Parent edges 1-2 and 2-3 map to local (0,1) and (0,2); 1-3 is absent.
  CHECK(sub.edges == std::vector<std::pair<int, int>>{{0, 1}, {0, 2}});
  CHECK(sub.features.row(0) == g.features.row(2));
  CHECK(sub.features.row(1) == g.features.row(1));

  Subgraph all = bfs_subgraph(g, 0, 10);
  CHECK(all.parent_ids == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(all.short_sample);

  CHECK_THROWS_AS(bfs_subgraph(g, -1, 2), std::runtime_error);
  CHECK_THROWS_AS(bfs_subgraph(g, 0, 0), std::runtime_error);
}

TEST_CASE("bfs_subgraph equals the reference on every graph up to 6 nodes") {
  for (int n = 1; n <= 6; ++n) {
    int pairs = n * (n - 1) / 2;
    for (unsigned mask = 0; mask < (1u << pairs); ++mask) {
      std::vector<std::set<int>> adj(n);
      int bit = 0;
      for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v, ++bit)
          if (mask & (1u << bit)) {
            adj[u].insert(v);
            adj[v].insert(u);
          }
      check_bfs_against_reference(adj);
    }
  }
}

TEST_CASE("bfs_subgraph equals the reference on random 7 and 8 node graphs") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0, 1);
  for (int trial = 0; trial < 1500; ++trial) {
    int n = 7 + static_cast<int>(trial % 2);
    double density = unit(rng);
    std::vector<std::set<int>> adj(n);
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v)
        if (unit(rng) < density) {
          adj[u].insert(v);
          adj[v].insert(u);
        }
    check_bfs_against_reference(adj);
  }
}

TEST_CASE("attach_subgraph appends nodes without touching the host") {
  Graph g = path_graph(4);
  Graph before = g;
  Subgraph sub = bfs_subgraph(g, 1, 2);  // nodes {1, 0}, edge (0,1)

  Graph out = attach_subgraph(g, sub, 3);
  CHECK(out.num_nodes == 6);
  CHECK(out.num_edges == g.num_edges + 1 + 1);  // link + one internal edge
  CHECK(out.has_edge(3, 4));                    // link goes to local node 0
  CHECK(out.has_edge(4, 5));
  CHECK_FALSE(out.has_edge(3, 5));
  CHECK(out.features.row(4) == g.features.row(1));
  CHECK(out.features.row(5) == g.features.row(0));
  CHECK(out.labels[4] == -1);
  CHECK(out.roles[4] == Role::Unassigned);
  for (int v = 0; v < 4; ++v) CHECK(out.features.row(v) == g.features.row(v));

  // Host graph untouched.
  CHECK(g.num_nodes == before.num_nodes);
  CHECK(g.num_edges == before.num_edges);
  CHECK(g.features == before.features);

  CHECK_THROWS_AS(attach_subgraph(g, sub, 9), std::runtime_error);
}

TEST_CASE("attach_many equals sequential attachment") {
  Graph g = path_graph(5);
  Subgraph s1 = bfs_subgraph(g, 0, 2);
  Subgraph s2 = bfs_subgraph(g, 3, 3);

  Graph chained = attach_subgraph(attach_subgraph(g, s1, 4), s2, 2);
  Graph batch = attach_many(g, {{&s1, 4}, {&s2, 2}});
  CHECK(batch.num_nodes == chained.num_nodes);
  CHECK(batch.num_edges == chained.num_edges);
  CHECK(batch.features == chained.features);
  CHECK(batch.edge_list() == chained.edge_list());
  CHECK(batch.labels == chained.labels);
}

TEST_CASE("split_dataset fills every role with the documented fractions") {
  SbmParams p;
  p.blocks = {{90, 0}, {90, 1}};
  p.feature_dim = 4;
  p.seed = 2;
  Graph g = gen_sbm(p);

  Graph s = split_dataset(g, 77);
  auto count = [&](Role r) { return static_cast<int>(s.nodes_with_role(r).size()); };
  // 180 nodes: 36 test (18 target + 18 clean), 144 train (28 labeled).
  CHECK(count(Role::TestTarget) == 18);
  CHECK(count(Role::TestClean) == 18);
  CHECK(count(Role::TrainLabeled) == 28);
  CHECK(count(Role::TrainUnlabeled) == 116);
  CHECK(count(Role::Unassigned) == 0);

  Graph again = split_dataset(g, 77);
  CHECK(again.roles == s.roles);
  Graph other = split_dataset(g, 78);
  CHECK(other.roles != s.roles);

  // Unlabeled nodes never get the train-labeled role.
  Graph h = g;
  std::vector<int> labels = h.labels;
  for (int v = 0; v < h.num_nodes; v += 2) labels[v] = -1;
  Graph masked = make_graph(h.num_nodes, h.features, labels, h.num_classes,
                            h.edge_list());
  Graph ms = split_dataset(masked, 5);
  for (int v : ms.nodes_with_role(Role::TrainLabeled)) CHECK(labels[v] >= 0);

  CHECK_THROWS_AS(split_dataset(path_graph(5), 1), std::runtime_error);
}

TEST_CASE("edge cosines and their percentile use nearest rank") {
  Mat x(4, 2);
  x << 1, 0,  // node 0
      2, 0,   // cos(0,1) = 1
      0, 3,   // cos(0,2) = 0
      5, 5;   // cos(0,3) = 1/sqrt(2)
  Graph g = make_graph(4, x, std::vector<int>(4, 0), 1, {{0, 1}, {0, 2}, {0, 3}});

  CHECK(edge_cosine(g, 0, 1) == doctest::Approx(1.0));
  CHECK(edge_cosine(g, 0, 2) == doctest::Approx(0.0));
  CHECK(edge_cosine(g, 0, 3) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(edge_cosine(g, 0, 3) == edge_cosine(g, 3, 0));

  // Sorted cosines {0, 0.7071, 1}: nearest-rank percentile indexes.
  CHECK(edge_cosine_percentile(g, 10.0) == doctest::Approx(0.0));
  CHECK(edge_cosine_percentile(g, 50.0) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(edge_cosine_percentile(g, 100.0) == doctest::Approx(1.0));
  CHECK(edge_cosine_percentile(g, 0.0) == doctest::Approx(0.0));

  Mat z = Mat::Zero(2, 2);
  z(1, 0) = 1;
  Graph zg = make_graph(2, z, std::vector<int>(2, 0), 1, {{0, 1}});
  CHECK(edge_cosine(zg, 0, 1) == 0.0);  // zero-norm endpoint

  Graph lonely = make_graph(2, Mat::Zero(2, 1), std::vector<int>(2, 0), 1, {});
  CHECK_THROWS_AS(edge_cosine_percentile(lonely, 50.0), std::runtime_error);
}

TEST_CASE("induced_subgraph keeps node data and internal edges") {
  Graph g = split_dataset(gen_sbm([] {
                            SbmParams p;
                            p.blocks = {{10, 0}, {10, 1}};
                            p.feature_dim = 3;
                            p.p_in = 0.6;
                            p.p_out = 0.2;
                            p.seed = 4;
                            return p;
                          }()),
                          1);
  std::vector<int> keep{0, 3, 4, 7, 11, 15};
  auto [sub, ids] = induced_subgraph(g, keep);
  CHECK(ids == keep);
  CHECK(sub.num_nodes == 6);
  CHECK(sub.num_classes == g.num_classes);
  for (int i = 0; i < 6; ++i) {
    CHECK(sub.features.row(i) == g.features.row(keep[i]));
    CHECK(sub.labels[i] == g.labels[keep[i]]);
    CHECK(sub.roles[i] == g.roles[keep[i]]);
  }
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j)
      CHECK(sub.has_edge(i, j) == g.has_edge(keep[i], keep[j]));

  CHECK_THROWS_AS(induced_subgraph(g, {3, 0}), std::runtime_error);
  CHECK_THROWS_AS(induced_subgraph(g, {0, 0}), std::runtime_error);
  CHECK_THROWS_AS(induced_subgraph(g, {0, 99}), std::runtime_error);
}
