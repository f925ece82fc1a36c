#include "gblab/paradigms.hpp"

#include <random>
#include <stdexcept>

#include "gblab/train_util.hpp"

namespace gblab {

namespace {

std::vector<int> labeled_nodes_checked(const Graph& g, const char* who) {
  std::vector<int> nodes = g.nodes_with_role(Role::TrainLabeled);
  if (nodes.empty())
    throw std::runtime_error(std::string(who) + ": no train-labeled nodes");
  for (int v : nodes)
    if (g.labels[v] < 0)
      throw std::runtime_error(std::string(who) + ": train-labeled node without label");
  return nodes;
}

std::vector<int> labels_of(const Graph& g, const std::vector<int>& nodes) {
  std::vector<int> ys;
  ys.reserve(nodes.size());
  for (int v : nodes) ys.push_back(g.labels[v]);
  return ys;
}

// Structural batch: one private copy of the prompt nodes per owner, every
// prompt node linked to its owner. Copy i occupies rows N + i*k .. N + i*k +
// k - 1.
Graph attach_prompt_copies(const Graph& g, const PromptSpec& prompt,
                           const std::vector<int>& owners) {
  const int k = prompt.size();
  Graph out;
  out.num_nodes = g.num_nodes + k * static_cast<int>(owners.size());
  out.num_classes = g.num_classes;
  out.features = Mat::Zero(out.num_nodes, g.dim());
  out.features.topRows(g.num_nodes) = g.features;
  out.labels = g.labels;
  out.labels.resize(out.num_nodes, -1);
  out.roles = g.roles;
  out.roles.resize(out.num_nodes, Role::Unassigned);

  std::vector<std::pair<int, int>> edges = g.edge_list();
  int base = g.num_nodes;
  for (int owner : owners) {
    if (owner < 0 || owner >= g.num_nodes)
      throw std::runtime_error("prompt: owner out of range");
    out.features.middleRows(base, k) = prompt.features;
    for (int j = 0; j < k; ++j) edges.emplace_back(owner, base + j);
    for (auto [a, b] : prompt.internal_edges) edges.emplace_back(base + a, base + b);
    base += k;
  }
  Mat feats = std::move(out.features);
  std::vector<int> labels = std::move(out.labels);
  std::vector<Role> roles = std::move(out.roles);
  Graph built = make_graph(out.num_nodes, std::move(feats), std::move(labels),
                           out.num_classes, edges);
  built.roles = std::move(roles);
  return built;
}

Graph augment_view_rng(const Graph& g, double p_e, double p_f,
                       std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<int, int>> kept;
  for (auto e : g.edge_list())
    if (unit(rng) >= p_e) kept.push_back(e);
  Mat feats = g.features;
  for (int j = 0; j < g.dim(); ++j)
    if (unit(rng) < p_f) feats.col(j).setZero();
  Graph out = make_graph(g.num_nodes, std::move(feats), g.labels, g.num_classes, kept);
  out.roles = g.roles;
  return out;
}

}  // namespace

PromptSpec make_token_prompt(int dim) {
  PromptSpec p;
  p.kind = PromptSpec::Kind::Token;
  p.token = Mat::Zero(1, dim);
  return p;
}

PromptSpec make_subgraph_prompt(const Graph& g, int k, Seed seed) {
  if (k < 1) throw std::runtime_error("make_subgraph_prompt: k must be >= 1");
  PromptSpec p;
  p.kind = PromptSpec::Kind::Subgraph;
  Mat mean = g.features.colwise().mean();
  p.features = Mat::Zero(k, g.dim());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 0.01);
  for (int i = 0; i < k; ++i) {
    p.features.row(i) = mean.row(0);
    for (int j = 0; j < g.dim(); ++j) p.features(i, j) += gauss(rng);
  }
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) p.internal_edges.emplace_back(a, b);
  return p;
}

Graph apply_prompt_token(const Graph& g, const Mat& p) {
  if (p.rows() != 1 || p.cols() != g.features.cols())
    throw std::runtime_error("apply_prompt_token: prompt must be 1 x dim");
  Graph out = g;
  out.features.rowwise() += p.row(0);
  return out;
}

Graph apply_prompt_subgraph(const Graph& g, const PromptSpec& prompt, int target) {
  if (prompt.kind != PromptSpec::Kind::Subgraph)
    throw std::runtime_error("apply_prompt_subgraph: prompt is not subgraph-shaped");
  return attach_prompt_copies(g, prompt, {target});
}

ModelBundle train_gsl(const Graph& g, Arch arch, const TrainHyper& hp) {
  std::vector<int> labeled = labeled_nodes_checked(g, "train_gsl");
  std::vector<int> ys = labels_of(g, labeled);
  PropMats prop = build_prop(g);

  ModelBundle model;
  model.paradigm = "gsl";
  model.seed = hp.seed;
  model.encoder = make_encoder(arch, {g.dim(), hp.hidden, hp.hidden}, mix_seed(hp.seed, 1));
  model.head = make_head({hp.hidden, g.num_classes}, mix_seed(hp.seed, 2));

  AdamState opt({.lr = hp.lr});
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    ad::Tape t;
    ad::Var x = t.constant(g.features);
    EncoderVars ev = encoder_vars(t, model.encoder, true);
    HeadVars hv = head_vars(t, model.head, true);
    ad::Var h = encode(t, arch, prop, x, ev);
    ad::Var logits = classify(t, ad::gather_rows(h, labeled), hv);
    ad::Var loss = ad::cross_entropy(logits, ys);
    t.backward(loss);
    std::vector<ParamBinding> bind;
    for (int l = 0; l < model.encoder.layers(); ++l) {
      bind.push_back({&model.encoder.weights[l], ev.weights[l]});
      bind.push_back({&model.encoder.biases[l], ev.biases[l]});
    }
    for (int l = 0; l < model.head.layers(); ++l) {
      bind.push_back({&model.head.weights[l], hv.weights[l]});
      bind.push_back({&model.head.biases[l], hv.biases[l]});
    }
    step_params(opt, t, bind);
  }
  return model;
}

Graph augment_view(const Graph& g, double p_e, double p_f, Seed seed) {
  std::mt19937_64 rng(seed);
  return augment_view_rng(g, p_e, p_f, rng);
}

double info_nce(const Mat& h1, const Mat& h2, double tau) {
  ad::Tape t;
  ad::Var u = ad::l2_normalize_rows(t.constant(h1));
  ad::Var v = ad::l2_normalize_rows(t.constant(h2));
  return t.value(ad::info_nce_normalized(u, v, tau))(0, 0);
}

EncoderParams train_gcl(const Graph& g, Arch arch, int layers, const TrainHyper& hp) {
  if (layers < 1) throw std::runtime_error("train_gcl: layers must be >= 1");
  std::vector<int> dims(layers + 1, hp.hidden);
  dims[0] = g.dim();
  EncoderParams enc = make_encoder(arch, dims, mix_seed(hp.seed, 3));

  AdamState opt({.lr = hp.lr});
  std::mt19937_64 view_rng(mix_seed(hp.seed, 4));
  for (int epoch = 0; epoch < hp.contrastive_epochs; ++epoch) {
    Graph v1 = augment_view_rng(g, hp.edge_drop, hp.feat_mask, view_rng);
    Graph v2 = augment_view_rng(g, hp.edge_drop, hp.feat_mask, view_rng);
    PropMats p1 = build_prop(v1);
    PropMats p2 = build_prop(v2);
    ad::Tape t;
    EncoderVars ev = encoder_vars(t, enc, true);
    ad::Var h1 = encode(t, arch, p1, t.constant(v1.features), ev);
    ad::Var h2 = encode(t, arch, p2, t.constant(v2.features), ev);
    ad::Var loss = ad::info_nce_normalized(ad::l2_normalize_rows(h1),
                                           ad::l2_normalize_rows(h2), hp.tau_c);
    t.backward(loss);
    std::vector<ParamBinding> bind;
    for (int l = 0; l < enc.layers(); ++l) {
      bind.push_back({&enc.weights[l], ev.weights[l]});
      bind.push_back({&enc.biases[l], ev.biases[l]});
    }
    step_params(opt, t, bind);
  }
  enc.frozen = true;
  return enc;
}

HeadParams train_probe(const EncoderParams& enc, const Graph& g, const TrainHyper& hp) {
  std::vector<int> labeled = labeled_nodes_checked(g, "train_probe");
  std::vector<int> ys = labels_of(g, labeled);
  // Probes see post-activation embeddings.
  Mat emb = encode_graph(enc, g).cwiseMax(0.0);
  Mat rows(labeled.size(), emb.cols());
  for (size_t i = 0; i < labeled.size(); ++i) rows.row(i) = emb.row(labeled[i]);

  HeadParams head = make_head({static_cast<int>(emb.cols()), hp.hidden, g.num_classes},
                              mix_seed(hp.seed, 5));
  AdamState opt({.lr = hp.lr});
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    ad::Tape t;
    HeadVars hv = head_vars(t, head, true);
    ad::Var logits = classify(t, t.constant(rows), hv);
    ad::Var loss = ad::cross_entropy(logits, ys);
    t.backward(loss);
    std::vector<ParamBinding> bind;
    for (int l = 0; l < head.layers(); ++l) {
      bind.push_back({&head.weights[l], hv.weights[l]});
      bind.push_back({&head.biases[l], hv.biases[l]});
    }
    step_params(opt, t, bind);
  }
  return head;
}

ModelBundle train_gpl(const Graph& g, const EncoderParams& enc,
                      PromptSpec::Kind kind, const TrainHyper& hp) {
  if (!enc.frozen) throw std::runtime_error("train_gpl: encoder must be frozen");
  std::vector<int> labeled = labeled_nodes_checked(g, "train_gpl");
  std::vector<int> ys = labels_of(g, labeled);

  ModelBundle model;
  model.paradigm = "gpl";
  model.seed = hp.seed;
  model.encoder = enc;
  model.head = make_head({enc.out_dim(), hp.hidden, g.num_classes}, mix_seed(hp.seed, 6));
  model.prompt = kind == PromptSpec::Kind::Token
                     ? make_token_prompt(g.dim())
                     : make_subgraph_prompt(g, hp.prompt_nodes, mix_seed(hp.seed, 7));
  PromptSpec& prompt = *model.prompt;

  const bool fast = enc.arch == Arch::GCN;
  AdamState opt({.lr = hp.lr});

  if (kind == PromptSpec::Kind::Token) {
    PropMats prop = build_prop(g);
    Mat xw0 = fast ? Mat(g.features * enc.weights[0]) : Mat();
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
      ad::Tape t;
      ad::Var p = t.param(prompt.token);
      EncoderVars ev = encoder_vars(t, enc, false);
      HeadVars hv = head_vars(t, model.head, true);
      ad::Var h;
      if (fast) {
        ad::Var z0 = ad::add_rowvec(t.constant(xw0), ad::matmul(p, ev.weights[0]));
        h = encode_precomputed_first(t, enc, prop, z0, ev);
      } else {
        ad::Var x = ad::add_rowvec(t.constant(g.features), p);
        h = encode(t, enc.arch, prop, x, ev);
      }
      ad::Var logits = classify(t, ad::gather_rows(h, labeled), hv);
      ad::Var loss = ad::cross_entropy(logits, ys);
      t.backward(loss);
      std::vector<ParamBinding> bind{{&prompt.token, p}};
      for (int l = 0; l < model.head.layers(); ++l) {
        bind.push_back({&model.head.weights[l], hv.weights[l]});
        bind.push_back({&model.head.biases[l], hv.biases[l]});
      }
      step_params(opt, t, bind);
    }
  } else {
    Graph aug = attach_prompt_copies(g, prompt, labeled);
    PropMats prop = build_prop(aug);
    const int k = prompt.size();
    std::vector<int> tile;
    tile.reserve(labeled.size() * k);
    for (size_t i = 0; i < labeled.size(); ++i)
      for (int j = 0; j < k; ++j) tile.push_back(j);
    Mat xw0 = fast ? Mat(g.features * enc.weights[0]) : Mat();
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
      ad::Tape t;
      ad::Var pf = t.param(prompt.features);
      EncoderVars ev = encoder_vars(t, enc, false);
      HeadVars hv = head_vars(t, model.head, true);
      ad::Var h;
      if (fast) {
        ad::Var pw = ad::matmul(pf, ev.weights[0]);
        ad::Var z0 = ad::concat_rows({t.constant(xw0), ad::gather_rows(pw, tile)});
        h = encode_precomputed_first(t, enc, prop, z0, ev);
      } else {
        ad::Var x = ad::concat_rows({t.constant(g.features), ad::gather_rows(pf, tile)});
        h = encode(t, enc.arch, prop, x, ev);
      }
      ad::Var logits = classify(t, ad::gather_rows(h, labeled), hv);
      ad::Var loss = ad::cross_entropy(logits, ys);
      t.backward(loss);
      std::vector<ParamBinding> bind{{&prompt.features, pf}};
      for (int l = 0; l < model.head.layers(); ++l) {
        bind.push_back({&model.head.weights[l], hv.weights[l]});
        bind.push_back({&model.head.biases[l], hv.biases[l]});
      }
      step_params(opt, t, bind);
    }
  }
  return model;
}

Mat model_logits(const ModelBundle& model, const Graph& g,
                 const std::vector<int>& score_nodes) {
  for (int v : score_nodes)
    if (v < 0 || v >= g.num_nodes)
      throw std::runtime_error("model_logits: score node out of range");
  Mat full;
  if (model.paradigm == "gsl") {
    full = classify(model.head, encode_graph(model.encoder, g));
  } else if (model.paradigm == "gcl") {
    full = classify(model.head, encode_graph(model.encoder, g).cwiseMax(0.0));
  } else if (model.paradigm == "gpl") {
    if (!model.prompt) throw std::runtime_error("model_logits: gpl model without prompt");
    if (model.prompt->kind == PromptSpec::Kind::Token) {
      full = classify(model.head,
                      encode_graph(model.encoder, apply_prompt_token(g, model.prompt->token)));
    } else {
      Graph aug = attach_prompt_copies(g, *model.prompt, score_nodes);
      full = classify(model.head, encode_graph(model.encoder, aug));
    }
  } else {
    throw std::runtime_error("model_logits: unknown paradigm '" + model.paradigm + "'");
  }
  Mat out(score_nodes.size(), full.cols());
  for (size_t i = 0; i < score_nodes.size(); ++i) out.row(i) = full.row(score_nodes[i]);
  return out;
}

}  // namespace gblab
