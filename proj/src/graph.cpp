#include "gblab/graph.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <queue>
#include <random>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace gblab {

namespace {

[[noreturn]] void fail(const std::string& path, int line, const std::string& msg) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

// Cursor over a whole file kept in memory; tracks line numbers and skips
// '#' comments so parse errors can name their line.
struct Scanner {
  std::string path;
  std::string text;
  size_t pos = 0;
  int line = 1;

  void skip_blank() {
    while (pos < text.size()) {
      char c = text[pos];
      if (c == '\n') {
        ++line;
        ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r') {
        ++pos;
      } else if (c == '#') {
        while (pos < text.size() && text[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  }

  bool at_end() {
    skip_blank();
    return pos >= text.size();
  }

  std::string_view token(const char* what) {
    skip_blank();
    size_t start = pos;
    while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos])) &&
           text[pos] != '#')
      ++pos;
    if (pos == start) fail(path, line, std::string("expected ") + what);
    return std::string_view(text).substr(start, pos - start);
  }

  int next_int(const char* what) {
    std::string_view t = token(what);
    int value = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || p != t.data() + t.size())
      fail(path, line, std::string("bad integer for ") + what + ": '" + std::string(t) + "'");
    return value;
  }

  double next_double(const char* what) {
    std::string_view t = token(what);
    double value = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || p != t.data() + t.size())
      fail(path, line, std::string("bad number for ") + what + ": '" + std::string(t) + "'");
    return value;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void append_number(std::string& out, double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  out.append(buf, p);
}

void append_number(std::string& out, long long v) {
  char buf[24];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  out.append(buf, p);
}

std::vector<std::pair<int, int>> normalize_edges(
    const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::pair<int, int>> out;
  out.reserve(edges.size());
  for (auto [u, v] : edges) out.emplace_back(std::min(u, v), std::max(u, v));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void build_csr(Graph& g, const std::vector<std::pair<int, int>>& unique_edges) {
  g.num_edges = static_cast<int>(unique_edges.size());
  std::vector<int> deg(g.num_nodes, 0);
  for (auto [u, v] : unique_edges) {
    ++deg[u];
    ++deg[v];
  }
  g.row_ptr.assign(g.num_nodes + 1, 0);
  for (int v = 0; v < g.num_nodes; ++v) g.row_ptr[v + 1] = g.row_ptr[v] + deg[v];
  g.col_idx.assign(g.row_ptr.back(), 0);
  std::vector<int> cursor(g.row_ptr.begin(), g.row_ptr.end() - 1);
  for (auto [u, v] : unique_edges) {
    g.col_idx[cursor[u]++] = v;
    g.col_idx[cursor[v]++] = u;
  }
  for (int v = 0; v < g.num_nodes; ++v)
    std::sort(g.col_idx.begin() + g.row_ptr[v], g.col_idx.begin() + g.row_ptr[v + 1]);
}

}  // namespace

const char* role_tag(Role r) {
  switch (r) {
    case Role::TrainLabeled: return "train-labeled";
    case Role::TrainUnlabeled: return "train-unlabeled";
    case Role::Validation: return "validation";
    case Role::TestTarget: return "test-target";
    case Role::TestClean: return "test-clean";
    default: return "unassigned";
  }
}

Role parse_role_tag(const std::string& tag) {
  if (tag == "train-labeled") return Role::TrainLabeled;
  if (tag == "train-unlabeled") return Role::TrainUnlabeled;
  if (tag == "validation") return Role::Validation;
  if (tag == "test-target") return Role::TestTarget;
  if (tag == "test-clean") return Role::TestClean;
  if (tag == "unassigned") return Role::Unassigned;
  throw std::runtime_error("unknown role tag '" + tag + "'");
}

std::span<const int> Graph::neighbors(int v) const {
  return std::span<const int>(col_idx.data() + row_ptr[v], col_idx.data() + row_ptr[v + 1]);
}

bool Graph::has_edge(int u, int v) const {
  auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

std::vector<int> Graph::nodes_with_role(Role r) const {
  std::vector<int> out;
  for (int v = 0; v < num_nodes; ++v)
    if (roles[v] == r) out.push_back(v);
  return out;
}

std::vector<std::pair<int, int>> Graph::edge_list() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(num_edges);
  for (int u = 0; u < num_nodes; ++u)
    for (int v : neighbors(u))
      if (u < v) out.emplace_back(u, v);
  return out;
}

Graph make_graph(int num_nodes, Mat features, std::vector<int> labels,
                 int num_classes, const std::vector<std::pair<int, int>>& edges) {
  if (features.rows() != num_nodes)
    throw std::runtime_error("make_graph: feature rows != num_nodes");
  if (static_cast<int>(labels.size()) != num_nodes)
    throw std::runtime_error("make_graph: label count != num_nodes");
  for (auto [u, v] : edges) {
    if (u < 0 || u >= num_nodes || v < 0 || v >= num_nodes)
      throw std::runtime_error("make_graph: edge endpoint out of range");
    if (u == v) throw std::runtime_error("make_graph: self-loop rejected");
  }
  Graph g;
  g.num_nodes = num_nodes;
  g.features = std::move(features);
  g.labels = std::move(labels);
  g.num_classes = num_classes;
  g.roles.assign(num_nodes, Role::Unassigned);
  build_csr(g, normalize_edges(edges));
  return g;
}

Graph gen_sbm(const SbmParams& params) {
  if (params.blocks.empty()) throw std::runtime_error("gen_sbm: no blocks");
  int n = 0;
  int num_classes = 0;
  for (const auto& b : params.blocks) {
    if (b.size <= 0) throw std::runtime_error("gen_sbm: block size must be positive");
    if (b.label < 0) throw std::runtime_error("gen_sbm: block label must be >= 0");
    n += b.size;
    num_classes = std::max(num_classes, b.label + 1);
  }
  if (params.feature_dim <= 0) throw std::runtime_error("gen_sbm: feature_dim must be positive");

  std::vector<int> block_of(n), labels(n);
  {
    int v = 0;
    for (int b = 0; b < static_cast<int>(params.blocks.size()); ++b)
      for (int i = 0; i < params.blocks[b].size; ++i, ++v) {
        block_of[v] = b;
        labels[v] = params.blocks[b].label;
      }
  }

  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat features = Mat::Zero(n, params.feature_dim);
  for (int v = 0; v < n; ++v) {
    int axis = labels[v] % params.feature_dim;
    for (int j = 0; j < params.feature_dim; ++j)
      features(v, j) = params.noise * gauss(rng);
    features(v, axis) += params.mean_separation;
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) {
      double p = block_of[u] == block_of[v] ? params.p_in : params.p_out;
      if (unit(rng) < p) edges.emplace_back(u, v);
    }
  return make_graph(n, std::move(features), std::move(labels), num_classes, edges);
}

Graph load_graph(const std::string& path) {
  Scanner sc{path, slurp(path)};
  int n = sc.next_int("node count");
  int m = sc.next_int("edge count");
  int d = sc.next_int("feature dim");
  int c = sc.next_int("class count");
  if (n < 0 || m < 0 || d < 0 || c < 1) fail(path, sc.line, "malformed header");

  Mat features = Mat::Zero(n, d);
  std::vector<char> seen(n, 0);
  for (int i = 0; i < n; ++i) {
    int id = sc.next_int("node id");
    if (id < 0 || id >= n) fail(path, sc.line, "feature node id out of range");
    if (seen[id]) fail(path, sc.line, "duplicate feature row for node " + std::to_string(id));
    seen[id] = 1;
    for (int j = 0; j < d; ++j) features(id, j) = sc.next_double("feature value");
  }

  std::vector<int> labels(n, -1);
  std::fill(seen.begin(), seen.end(), 0);
  for (int i = 0; i < n; ++i) {
    int id = sc.next_int("node id");
    if (id < 0 || id >= n) fail(path, sc.line, "label node id out of range");
    if (seen[id]) fail(path, sc.line, "duplicate label row for node " + std::to_string(id));
    seen[id] = 1;
    int label = sc.next_int("label");
    if (label < -1 || label >= c)
      fail(path, sc.line, "label " + std::to_string(label) + " outside [-1, " + std::to_string(c) + ")");
    labels[id] = label;
  }

  std::vector<std::pair<int, int>> edges;
  edges.reserve(m);
  for (int i = 0; i < m; ++i) {
    int u = sc.next_int("edge endpoint");
    int v = sc.next_int("edge endpoint");
    if (u < 0 || u >= n || v < 0 || v >= n) fail(path, sc.line, "edge endpoint out of range");
    if (u == v) fail(path, sc.line, "self-loop not allowed");
    edges.emplace_back(u, v);
  }
  if (!sc.at_end()) fail(path, sc.line, "unexpected trailing content");
  return make_graph(n, std::move(features), std::move(labels), c, edges);
}

void write_graph(const Graph& g, const std::string& path) {
  std::string out;
  out.reserve(static_cast<size_t>(g.num_nodes) * (g.dim() * 10 + 16));
  append_number(out, static_cast<long long>(g.num_nodes));
  out += ' ';
  append_number(out, static_cast<long long>(g.num_edges));
  out += ' ';
  append_number(out, static_cast<long long>(g.dim()));
  out += ' ';
  append_number(out, static_cast<long long>(g.num_classes));
  out += '\n';
  for (int v = 0; v < g.num_nodes; ++v) {
    append_number(out, static_cast<long long>(v));
    for (int j = 0; j < g.dim(); ++j) {
      out += ' ';
      append_number(out, g.features(v, j));
    }
    out += '\n';
  }
  for (int v = 0; v < g.num_nodes; ++v) {
    append_number(out, static_cast<long long>(v));
    out += ' ';
    append_number(out, static_cast<long long>(g.labels[v]));
    out += '\n';
  }
  for (auto [u, v] : g.edge_list()) {
    append_number(out, static_cast<long long>(u));
    out += ' ';
    append_number(out, static_cast<long long>(v));
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

void load_roles(Graph& g, const std::string& path) {
  Scanner sc{path, slurp(path)};
  std::vector<Role> roles(g.num_nodes, Role::Unassigned);
  std::vector<char> seen(g.num_nodes, 0);
  while (!sc.at_end()) {
    int id = sc.next_int("node id");
    if (id < 0 || id >= g.num_nodes) fail(path, sc.line, "role node id out of range");
    if (seen[id]) fail(path, sc.line, "duplicate role for node " + std::to_string(id));
    seen[id] = 1;
    std::string tag(sc.token("role tag"));
    try {
      roles[id] = parse_role_tag(tag);
    } catch (const std::exception& e) {
      fail(path, sc.line, e.what());
    }
  }
  g.roles = std::move(roles);
}

void write_roles(const Graph& g, const std::string& path) {
  std::string out;
  for (int v = 0; v < g.num_nodes; ++v) {
    append_number(out, static_cast<long long>(v));
    out += ' ';
    out += role_tag(g.roles[v]);
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Subgraph bfs_subgraph(const Graph& g, int center, int size) {
  if (center < 0 || center >= g.num_nodes)
    throw std::runtime_error("bfs_subgraph: center out of range");
  if (size < 1) throw std::runtime_error("bfs_subgraph: size must be >= 1");

  std::vector<int> order;
  order.reserve(size);
  std::vector<char> visited(g.num_nodes, 0);
  std::queue<int> q;
  q.push(center);
  visited[center] = 1;
  while (!q.empty() && static_cast<int>(order.size()) < size) {
    int v = q.front();
    q.pop();
    order.push_back(v);
    for (int w : g.neighbors(v))
      if (!visited[w]) {
        visited[w] = 1;
        q.push(w);
      }
  }

  Subgraph sub;
  sub.parent_ids = order;
  sub.short_sample = static_cast<int>(order.size()) < size;
  sub.features = Mat::Zero(sub.size(), g.dim());
  std::vector<int> local(g.num_nodes, -1);
  for (int i = 0; i < sub.size(); ++i) {
    local[order[i]] = i;
    sub.features.row(i) = g.features.row(order[i]);
  }
  for (int i = 0; i < sub.size(); ++i)
    for (int w : g.neighbors(order[i]))
      if (local[w] > i) sub.edges.emplace_back(i, local[w]);
  std::sort(sub.edges.begin(), sub.edges.end());
  return sub;
}

Graph attach_many(const Graph& g,
                  const std::vector<std::pair<const Subgraph*, int>>& attachments) {
  int extra = 0;
  for (const auto& [sub, node] : attachments) {
    if (node < 0 || node >= g.num_nodes)
      throw std::runtime_error("attach_subgraph: node out of range");
    if (sub->features.cols() != g.features.cols())
      throw std::runtime_error("attach_subgraph: feature dim mismatch");
    if (sub->size() == 0) throw std::runtime_error("attach_subgraph: empty subgraph");
    extra += sub->size();
  }
  Graph out;
  out.num_nodes = g.num_nodes + extra;
  out.num_classes = g.num_classes;
  out.features = Mat::Zero(out.num_nodes, g.dim());
  out.features.topRows(g.num_nodes) = g.features;
  out.labels = g.labels;
  out.labels.resize(out.num_nodes, -1);
  out.roles = g.roles;
  out.roles.resize(out.num_nodes, Role::Unassigned);

  std::vector<std::pair<int, int>> edges = g.edge_list();
  int base = g.num_nodes;
  for (const auto& [sub, node] : attachments) {
    out.features.middleRows(base, sub->size()) = sub->features;
    edges.emplace_back(node, base);  // link edge to local node 0
    for (auto [a, b] : sub->edges) edges.emplace_back(base + a, base + b);
    base += sub->size();
  }
  build_csr(out, normalize_edges(edges));
  return out;
}

Graph attach_subgraph(const Graph& g, const Subgraph& sub, int node) {
  return attach_many(g, {{&sub, node}});
}

Graph split_dataset(const Graph& g, Seed seed) {
  if (g.num_nodes < 10)
    throw std::runtime_error("split_dataset: need at least 10 nodes to populate every role");
  int n_test = g.num_nodes / 5;
  int n_target = n_test / 2;
  int n_clean = n_test - n_target;
  int n_train = g.num_nodes - n_test;
  int n_labeled = n_train / 5;

  std::vector<int> order(g.num_nodes);
  for (int v = 0; v < g.num_nodes; ++v) order[v] = v;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Graph out = g;
  out.roles.assign(g.num_nodes, Role::Unassigned);
  int idx = 0;
  for (int i = 0; i < n_target; ++i) out.roles[order[idx++]] = Role::TestTarget;
  for (int i = 0; i < n_clean; ++i) out.roles[order[idx++]] = Role::TestClean;
  // Hand train-labeled slots to labeled nodes only, in shuffled order.
  int granted = 0;
  for (int i = idx; i < g.num_nodes; ++i) {
    int v = order[i];
    if (granted < n_labeled && g.labels[v] >= 0) {
      out.roles[v] = Role::TrainLabeled;
      ++granted;
    } else {
      out.roles[v] = Role::TrainUnlabeled;
    }
  }
  if (granted < n_labeled)
    throw std::runtime_error("split_dataset: not enough labeled nodes for the train-labeled role");
  return out;
}

std::pair<Graph, std::vector<int>> induced_subgraph(const Graph& g,
                                                    const std::vector<int>& keep) {
  std::vector<int> local(g.num_nodes, -1);
  for (int i = 0; i < static_cast<int>(keep.size()); ++i) {
    int v = keep[i];
    if (v < 0 || v >= g.num_nodes)
      throw std::runtime_error("induced_subgraph: node out of range");
    if (local[v] != -1) throw std::runtime_error("induced_subgraph: duplicate node");
    if (i > 0 && keep[i - 1] >= v)
      throw std::runtime_error("induced_subgraph: nodes must be ascending");
    local[v] = i;
  }
  Graph out;
  out.num_nodes = static_cast<int>(keep.size());
  out.num_classes = g.num_classes;
  out.features = Mat::Zero(out.num_nodes, g.dim());
  out.labels.resize(out.num_nodes);
  out.roles.resize(out.num_nodes);
  for (int i = 0; i < out.num_nodes; ++i) {
    out.features.row(i) = g.features.row(keep[i]);
    out.labels[i] = g.labels[keep[i]];
    out.roles[i] = g.roles[keep[i]];
  }
  std::vector<std::pair<int, int>> edges;
  for (int u : keep)
    for (int w : g.neighbors(u))
      if (local[w] > local[u]) edges.emplace_back(local[u], local[w]);
  build_csr(out, normalize_edges(edges));
  return {std::move(out), keep};
}

double edge_cosine(const Graph& g, int u, int v) {
  double nu = g.features.row(u).norm();
  double nv = g.features.row(v).norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return g.features.row(u).dot(g.features.row(v)) / (nu * nv);
}

double edge_cosine_percentile(const Graph& g, double pct) {
  if (g.num_edges == 0)
    throw std::runtime_error("edge_cosine_percentile: graph has no edges");
  std::vector<double> cosines;
  cosines.reserve(g.num_edges);
  for (auto [u, v] : g.edge_list()) cosines.push_back(edge_cosine(g, u, v));
  std::sort(cosines.begin(), cosines.end());
  int m = static_cast<int>(cosines.size());
  int rank = static_cast<int>(std::ceil(pct / 100.0 * m)) - 1;
  return cosines[std::clamp(rank, 0, m - 1)];
}

}  // namespace gblab
