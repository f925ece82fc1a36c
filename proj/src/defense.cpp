#include "gblab/defense.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "gblab/adam.hpp"
#include "gblab/gnn.hpp"
#include "gblab/paradigms.hpp"
#include "gblab/tape.hpp"
#include "gblab/train_util.hpp"

namespace gblab {

const char* defense_tag(DefenseKind k) {
  switch (k) {
    case DefenseKind::None: return "none";
    case DefenseKind::Prune: return "prune";
    case DefenseKind::OutlierFilter: return "od";
    case DefenseKind::RobustScreen: return "rigbd";
  }
  throw std::logic_error("defense_tag: unknown kind");
}

DefenseKind parse_defense_tag(const std::string& tag) {
  if (tag == "none") return DefenseKind::None;
  if (tag == "prune") return DefenseKind::Prune;
  if (tag == "od") return DefenseKind::OutlierFilter;
  if (tag == "rigbd") return DefenseKind::RobustScreen;
  throw std::runtime_error("unknown defense: " + tag);
}

void write_defense_report(const DefenseReport& report, const std::string& path) {
  if (report.score.size() != report.flagged.size())
    throw std::invalid_argument("write_defense_report: ragged report");
  std::string out = "node_id,score,flagged\n";
  char buf[32];
  for (size_t v = 0; v < report.score.size(); ++v) {
    out += std::to_string(v);
    out += ',';
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), report.score[v]);
    (void)ec;
    out.append(buf, p);
    out += ',';
    out += report.flagged[v] ? '1' : '0';
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

namespace {

Graph with_edges(const Graph& g, const std::vector<std::pair<int, int>>& kept) {
  Graph out = make_graph(g.num_nodes, g.features, g.labels, g.num_classes, kept);
  out.roles = g.roles;
  return out;
}

Graph remove_nodes(const Graph& g, const std::vector<char>& remove) {
  std::vector<int> keep;
  keep.reserve(g.num_nodes);
  for (int v = 0; v < g.num_nodes; ++v)
    if (!remove[v]) keep.push_back(v);
  if (static_cast<int>(keep.size()) == g.num_nodes) return g;
  return induced_subgraph(g, keep).first;
}

}  // namespace

Graph prune_edges(const Graph& g, const PruneConfig& cfg, DefenseReport* report) {
  double thr = cfg.threshold;
  if (std::isnan(thr))
    thr = g.num_edges > 0 ? edge_cosine_percentile(g, 5.0) : 0.0;
  std::vector<double> worst(g.num_nodes, 1.0);
  std::vector<char> touched(g.num_nodes, 0);
  std::vector<std::pair<int, int>> kept;
  kept.reserve(g.num_edges);
  for (auto [u, v] : g.edge_list()) {
    double c = edge_cosine(g, u, v);
    worst[u] = std::min(worst[u], c);
    worst[v] = std::min(worst[v], c);
    if (c < thr) {
      touched[u] = 1;
      touched[v] = 1;
    } else {
      kept.emplace_back(u, v);
    }
  }
  if (report) {
    report->score.resize(g.num_nodes);
    for (int v = 0; v < g.num_nodes; ++v) report->score[v] = -worst[v];
    report->flagged = std::move(touched);
  }
  return with_edges(g, kept);
}

Graph od_filter(const Graph& g, const OdConfig& cfg, DefenseReport* report) {
  if (g.num_nodes == 0) throw std::invalid_argument("od_filter: empty graph");
  if (cfg.hidden <= 0 || cfg.embed <= 0)
    throw std::invalid_argument("od_filter: bad layer sizes");
  const int n = g.num_nodes;
  const int d = g.dim();
  PropMats prop = build_prop(g);
  EncoderParams enc =
      make_encoder(Arch::GCN, {d, cfg.hidden, cfg.embed}, mix_seed(cfg.seed, 1));
  HeadParams dec = make_head({cfg.embed, d}, mix_seed(cfg.seed, 2));

  // Structure targets: every edge plus an equal number of random non-edge
  // pairs (collisions with true edges are rare enough to ignore).
  std::vector<int> us, vs;
  for (auto [u, v] : g.edge_list()) {
    us.push_back(u);
    vs.push_back(v);
  }
  const int n_pos = static_cast<int>(us.size());
  if (n > 1) {
    std::mt19937_64 rng(mix_seed(cfg.seed, 3));
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int i = 0; i < n_pos; ++i) {
      int u = pick(rng), v = pick(rng);
      while (u == v) v = pick(rng);
      us.push_back(u);
      vs.push_back(v);
    }
  }
  Mat target = Mat::Zero(static_cast<int>(us.size()), 1);
  target.topRows(n_pos).setOnes();

  AdamConfig ac;
  ac.lr = cfg.lr;
  AdamState opt(ac);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ad::Tape t;
    EncoderVars ev = encoder_vars(t, enc, true);
    HeadVars dv = head_vars(t, dec, true);
    ad::Var x = t.constant(g.features);
    ad::Var h = encode(t, Arch::GCN, prop, x, ev);
    ad::Var dx = ad::sub(classify(t, h, dv), x);
    ad::Var loss = ad::affine(ad::sum_all(ad::mul(dx, dx)),
                              cfg.alpha / (static_cast<double>(n) * d), 0.0);
    if (!us.empty()) {
      ad::Var s = ad::sigmoid(ad::row_dot(ad::gather_rows(h, us),
                                          ad::gather_rows(h, vs)));
      ad::Var da = ad::sub(s, t.constant(target));
      loss = ad::add(loss, ad::affine(ad::sum_all(ad::mul(da, da)),
                                      (1.0 - cfg.alpha) / target.rows(), 0.0));
    }
    t.backward(loss);
    std::vector<ParamBinding> bind;
    for (int l = 0; l < enc.layers(); ++l) {
      bind.push_back({&enc.weights[l], ev.weights[l]});
      bind.push_back({&enc.biases[l], ev.biases[l]});
    }
    bind.push_back({&dec.weights[0], dv.weights[0]});
    bind.push_back({&dec.biases[0], dv.biases[0]});
    step_params(opt, t, bind);
  }

  // Per-node reconstruction errors. The adjacency row error against the
  // dense sigmoid scores is accumulated blockwise: for a 0/1 row,
  // sum_j (a_j - s_j)^2 = sum_j s_j^2 + sum_{j in N(v)} (1 - 2 s_j).
  Mat h = encode(enc, prop, g.features);
  Mat xhat = classify(dec, h);
  std::vector<double> score(n);
  const int block = 256;
  for (int b0 = 0; b0 < n; b0 += block) {
    int len = std::min(block, n - b0);
    Mat s = 1.0 / (1.0 + (-(h.middleRows(b0, len) * h.transpose())).array().exp());
    for (int i = 0; i < len; ++i) {
      int v = b0 + i;
      double err2 = s.row(i).squaredNorm();
      for (int w : g.neighbors(v)) err2 += 1.0 - 2.0 * s(i, w);
      double feat_err = (xhat.row(v) - g.features.row(v)).norm();
      score[v] = cfg.alpha * feat_err + (1.0 - cfg.alpha) * std::sqrt(std::max(err2, 0.0));
    }
  }

  int n_remove = static_cast<int>(std::ceil(cfg.remove_frac * n));
  n_remove = std::clamp(n_remove, 0, n);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return score[a] != score[b] ? score[a] > score[b] : a < b;
  });
  std::vector<char> remove(n, 0);
  for (int i = 0; i < n_remove; ++i) remove[order[i]] = 1;
  if (report) {
    report->score = std::move(score);
    report->flagged = remove;
  }
  return remove_nodes(g, remove);
}

Graph rigbd_screen(const Graph& g, const RigbdConfig& cfg, DefenseReport* report) {
  if (cfg.rounds <= 0)
    throw std::invalid_argument("rigbd_screen: rounds must be positive");
  TrainHyper hp;
  hp.epochs = cfg.epochs;
  hp.lr = cfg.lr;
  hp.hidden = cfg.hidden;
  hp.seed = mix_seed(cfg.seed, 1);
  ModelBundle m = train_gsl(g, Arch::GCN, hp);

  PropMats prop = build_prop(g);
  Mat xw0 = g.features * m.encoder.weights[0];
  std::vector<int> base =
      predict(classify(m.head, encode_precomputed_first(m.encoder, prop, xw0)));

  const int c = g.num_classes;
  std::vector<int> flips(g.num_nodes, 0);
  Mat tally = Mat::Zero(c, c);  // (stable prediction, flipped-to) counts
  for (int r = 0; r < cfg.rounds; ++r) {
    Graph view = augment_view(g, cfg.p_drop, 0.0, mix_seed(cfg.seed, 100 + r));
    PropMats pr = build_prop(view);
    std::vector<int> pred =
        predict(classify(m.head, encode_precomputed_first(m.encoder, pr, xw0)));
    for (int v = 0; v < g.num_nodes; ++v)
      if (pred[v] != base[v]) {
        ++flips[v];
        tally(base[v], pred[v]) += 1.0;
      }
  }

  int dst = 0;
  for (int j = 1; j < c; ++j)
    if (tally.col(j).sum() > tally.col(dst).sum()) dst = j;
  int src = 0;
  for (int i = 1; i < c; ++i)
    if (tally(i, dst) > tally(src, dst)) src = i;

  std::vector<char> flagged(g.num_nodes, 0);
  for (int v = 0; v < g.num_nodes; ++v) {
    double rate = static_cast<double>(flips[v]) / cfg.rounds;
    if (rate >= cfg.kappa && base[v] == src && g.labels[v] == src) flagged[v] = 1;
  }
  std::vector<char> remove = flagged;
  for (int v = 0; v < g.num_nodes; ++v)
    if (flagged[v])
      for (int w : g.neighbors(v))
        if (g.degree(w) == 1) remove[w] = 1;

  if (report) {
    report->score.resize(g.num_nodes);
    for (int v = 0; v < g.num_nodes; ++v)
      report->score[v] = static_cast<double>(flips[v]) / cfg.rounds;
    report->flagged = remove;
  }
  return remove_nodes(g, remove);
}

Graph apply_defense(const Graph& g, DefenseKind kind, Seed seed,
                    DefenseReport* report) {
  switch (kind) {
    case DefenseKind::None:
      if (report) {
        report->score.assign(g.num_nodes, 0.0);
        report->flagged.assign(g.num_nodes, 0);
      }
      return g;
    case DefenseKind::Prune:
      return prune_edges(g, PruneConfig{}, report);
    case DefenseKind::OutlierFilter: {
      OdConfig cfg;
      cfg.seed = seed;
      return od_filter(g, cfg, report);
    }
    case DefenseKind::RobustScreen: {
      RigbdConfig cfg;
      cfg.seed = seed;
      return rigbd_screen(g, cfg, report);
    }
  }
  throw std::logic_error("apply_defense: unknown kind");
}

}  // namespace gblab
