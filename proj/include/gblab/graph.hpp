#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gblab/types.hpp"

namespace gblab {

// Node roles used by the training/evaluation protocol. Roles are not part of
// the graph text format; they live in a companion file or come from
// split_dataset.
enum class Role {
  Unassigned,
  TrainLabeled,
  TrainUnlabeled,
  Validation,
  TestTarget,
  TestClean,
};

const char* role_tag(Role r);
Role parse_role_tag(const std::string& tag);

// Undirected attributed graph. Adjacency is a symmetric 0/1 structure held in
// compressed row form, no self-loops, neighbor lists sorted ascending.
// Operations treat graphs as immutable values and return new ones.
struct Graph {
  int num_nodes = 0;
  int num_edges = 0;  // number of undirected pairs
  std::vector<int> row_ptr;
  std::vector<int> col_idx;
  Mat features;             // num_nodes x dim
  std::vector<int> labels;  // -1 = absent
  int num_classes = 0;
  std::vector<Role> roles;

  int dim() const { return static_cast<int>(features.cols()); }
  std::span<const int> neighbors(int v) const;
  int degree(int v) const { return row_ptr[v + 1] - row_ptr[v]; }
  bool has_edge(int u, int v) const;
  std::vector<int> nodes_with_role(Role r) const;
  // Undirected pairs (u, v) with u < v, lexicographic order.
  std::vector<std::pair<int, int>> edge_list() const;
};

// Builds a graph from an edge list: self-loops are rejected, duplicates and
// reversed copies collapse to one undirected pair.
Graph make_graph(int num_nodes, Mat features, std::vector<int> labels,
                 int num_classes, const std::vector<std::pair<int, int>>& edges);

// A small sampled/condensed subgraph that can be re-attached elsewhere.
// Local node order is the BFS discovery order of the sample.
struct Subgraph {
  std::vector<int> parent_ids;             // original ids, one per local node
  std::vector<std::pair<int, int>> edges;  // local undirected pairs, u < v
  Mat features;                            // size x dim
  bool short_sample = false;  // BFS ran out of reachable nodes early
  int size() const { return static_cast<int>(parent_ids.size()); }
};

// Stochastic block model: one block per entry, Bernoulli(p_in) edges inside a
// block, Bernoulli(p_out) across blocks. Features are the class-mean vector
// (means separated on distinct axes) plus isotropic Gaussian noise.
struct SbmBlock {
  int size = 0;
  int label = 0;
};

struct SbmParams {
  std::vector<SbmBlock> blocks;
  double p_in = 0.1;
  double p_out = 0.01;
  int feature_dim = 16;
  double mean_separation = 1.0;
  double noise = 0.1;
  Seed seed = 0;
};

Graph gen_sbm(const SbmParams& params);

// Graph text format:
//   header "N M d C", then N feature lines "id f_1 .. f_d", then N label
//   lines "id label" (-1 = absent), then M edge lines "u v". Lines whose
//   first non-blank character is '#' are ignored. Errors name the line.
Graph load_graph(const std::string& path);
void write_graph(const Graph& g, const std::string& path);

// Companion role file: one "node_id role_tag" line per node.
void load_roles(Graph& g, const std::string& path);
void write_roles(const Graph& g, const std::string& path);

// Breadth-first sample of `size` nodes around `center`, neighbors visited in
// ascending id order. Marks the sample short if fewer nodes are reachable.
Subgraph bfs_subgraph(const Graph& g, int center, int size);

// Returns a copy of g with sub's nodes appended (labels absent, roles
// unassigned) and one link edge between sub's local node 0 and `node`.
Graph attach_subgraph(const Graph& g, const Subgraph& sub, int node);

// One-pass equivalent of attaching every (subgraph, node) pair in order.
Graph attach_many(const Graph& g,
                  const std::vector<std::pair<const Subgraph*, int>>& attachments);

// Seeded role assignment: 20% test (half test-target, half test-clean), the
// rest training with 20% train-labeled and 80% train-unlabeled. Train-labeled
// slots are only given to nodes that have a label.
Graph split_dataset(const Graph& g, Seed seed);

// Induced subgraph on `keep` (ascending ids); second result maps new id ->
// old id.
std::pair<Graph, std::vector<int>> induced_subgraph(const Graph& g,
                                                    const std::vector<int>& keep);

// Cosine similarity of the endpoint features of one edge (0 if either
// endpoint is all-zero), and its nearest-rank percentile (pct in [0, 100])
// over every edge of the graph.
double edge_cosine(const Graph& g, int u, int v);
double edge_cosine_percentile(const Graph& g, double pct);

}  // namespace gblab
