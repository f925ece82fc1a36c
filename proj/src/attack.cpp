#include "gblab/attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gblab/adam.hpp"
#include "gblab/train_util.hpp"

namespace gblab {

TriggerVars make_trigger_vars(ad::Tape& t, const TriggerRepository& repo,
                              bool trainable) {
  if (repo.count() == 0)
    throw std::invalid_argument("make_trigger_vars: empty repository");
  TriggerVars tv;
  tv.features.reserve(repo.count());
  for (const auto& tr : repo.triggers) {
    if (tr.size() != repo.trigger_size)
      throw std::invalid_argument("make_trigger_vars: trigger size mismatch");
    tv.features.push_back(trainable ? t.param(tr.features)
                                    : t.constant(tr.features));
  }
  tv.stacked = ad::concat_rows(tv.features);
  return tv;
}

namespace {

// Attacked-graph layout: base rows 0..N-1 keep their ids, attachment i sits
// at rows [N + i*n, N + (i+1)*n) with its local node 0 linked to the owner,
// and (for subgraph prompts) one prompt copy per scored node follows after
// all attachments.
Graph attack_structure(const Graph& g, const TriggerRepository& repo,
                       const AttachSelection& sel, const PromptSpec* sub_prompt,
                       const std::vector<int>& prompt_owners) {
  const int n = repo.trigger_size;
  const int m = static_cast<int>(sel.nodes.size());
  const int k = sub_prompt ? sub_prompt->size() : 0;
  const int n_aug =
      g.num_nodes + m * n + static_cast<int>(prompt_owners.size()) * k;
  std::vector<std::pair<int, int>> edges = g.edge_list();
  for (int i = 0; i < m; ++i) {
    const int base = g.num_nodes + i * n;
    edges.emplace_back(sel.nodes[i], base);
    for (auto [a, b] : repo.triggers[sel.trigger_ids[i]].edges)
      edges.emplace_back(base + a, base + b);
  }
  for (int j = 0; j < static_cast<int>(prompt_owners.size()); ++j) {
    const int base = g.num_nodes + m * n + j * k;
    for (int q = 0; q < k; ++q) edges.emplace_back(prompt_owners[j], base + q);
    for (auto [a, b] : sub_prompt->internal_edges)
      edges.emplace_back(base + a, base + b);
  }
  return make_graph(n_aug, Mat::Zero(n_aug, 0), std::vector<int>(n_aug, -1), 0,
                    edges);
}

// Stacked-matrix row of attachment i's local node j, in selection order.
std::vector<int> stacked_rows(const AttachSelection& sel, int n) {
  std::vector<int> rows;
  rows.reserve(sel.nodes.size() * n);
  for (int id : sel.trigger_ids)
    for (int j = 0; j < n; ++j) rows.push_back(id * n + j);
  return rows;
}

// Index list [0..k) repeated once per copy.
std::vector<int> tiled_rows(int copies, int k) {
  std::vector<int> rows;
  rows.reserve(static_cast<size_t>(copies) * k);
  for (int j = 0; j < copies; ++j)
    for (int q = 0; q < k; ++q) rows.push_back(q);
  return rows;
}

void check_selection(const AttachSelection& sel, const TriggerRepository& repo) {
  if (sel.nodes.size() != sel.trigger_ids.size())
    throw std::invalid_argument("attack: selection arity mismatch");
  for (int id : sel.trigger_ids)
    if (id < 0 || id >= repo.count())
      throw std::invalid_argument("attack: selected trigger id out of range");
}

}  // namespace

ad::Var attacked_logits(ad::Tape& t, const Graph& g, const EncoderParams& enc,
                        const TriggerRepository& repo, const TriggerVars& tv,
                        const AttachSelection& sel, ad::Var prompt_var,
                        const PromptSpec& prompt, bool prompt_after_attach,
                        const std::vector<int>& score_nodes, const HeadVars& head,
                        const Mat* xw0_base) {
  check_selection(sel, repo);
  const bool token = prompt.kind == PromptSpec::Kind::Token;
  const std::vector<int> owners = token ? std::vector<int>{} : score_nodes;
  Graph structure = attack_structure(g, repo, sel,
                                     token ? nullptr : &prompt, owners);
  PropMats prop = build_prop(structure);
  const int n = repo.trigger_size;
  EncoderVars ev = encoder_vars(t, enc, false);

  ad::Var h;
  if (enc.arch == Arch::GCN) {
    // First-layer products are assembled per block: (X + 1p^T) W0 =
    // X W0 + 1 (p W0)^T, and the trigger blocks are rows of the stacked
    // trigger matrix times W0. The encoder picks up from there.
    ad::Var w0 = ev.weights[0];
    ad::Var z_base =
        t.constant(xw0_base ? *xw0_base : Mat(g.features * enc.weights[0]));
    ad::Var pw;
    if (token) pw = ad::matmul(prompt_var, w0);
    if (token && !prompt_after_attach) z_base = ad::add_rowvec(z_base, pw);
    ad::Var tw = ad::matmul(tv.stacked, w0);
    std::vector<ad::Var> blocks{z_base, ad::gather_rows(tw, stacked_rows(sel, n))};
    if (!token)
      blocks.push_back(ad::gather_rows(
          ad::matmul(prompt_var, w0),
          tiled_rows(static_cast<int>(owners.size()), prompt.size())));
    ad::Var z0 = ad::concat_rows(blocks);
    if (token && prompt_after_attach) z0 = ad::add_rowvec(z0, pw);
    h = encode_precomputed_first(t, enc, prop, z0, ev);
  } else {
    ad::Var x_base = t.constant(g.features);
    if (token && !prompt_after_attach)
      x_base = ad::add_rowvec(x_base, prompt_var);
    std::vector<ad::Var> blocks{x_base,
                                ad::gather_rows(tv.stacked, stacked_rows(sel, n))};
    if (!token)
      blocks.push_back(ad::gather_rows(
          prompt_var, tiled_rows(static_cast<int>(owners.size()), prompt.size())));
    ad::Var x = ad::concat_rows(blocks);
    if (token && prompt_after_attach) x = ad::add_rowvec(x, prompt_var);
    h = encode(t, enc.arch, prop, x, ev);
  }
  return classify(t, ad::gather_rows(h, score_nodes), head);
}

ad::Var poison_loss(ad::Tape& t, const Graph& g, const EncoderParams& enc,
                    const TriggerRepository& repo, const TriggerVars& tv,
                    const AttachSelection& sel_p, ad::Var prompt_var,
                    const PromptSpec& prompt, bool prompt_after_attach,
                    const HeadVars& head, const Mat* xw0_base) {
  std::vector<int> labeled = g.nodes_with_role(Role::TrainLabeled);
  const int nl = static_cast<int>(labeled.size());
  const int np = static_cast<int>(sel_p.nodes.size());
  if (nl == 0 && np == 0)
    throw std::invalid_argument("poison_loss: no labeled and no poisoned nodes");
  std::vector<int> score = labeled;
  score.insert(score.end(), sel_p.nodes.begin(), sel_p.nodes.end());
  ad::Var logits = attacked_logits(t, g, enc, repo, tv, sel_p, prompt_var, prompt,
                                   prompt_after_attach, score, head, xw0_base);
  std::vector<int> idx_clean(nl), idx_pois(np);
  for (int i = 0; i < nl; ++i) idx_clean[i] = i;
  for (int i = 0; i < np; ++i) idx_pois[i] = nl + i;
  std::vector<int> y_clean(nl);
  for (int i = 0; i < nl; ++i) y_clean[i] = g.labels[labeled[i]];
  std::vector<int> y_pois(np, repo.target_label);
  if (np == 0)
    return ad::cross_entropy(ad::gather_rows(logits, idx_clean), y_clean);
  if (nl == 0)
    return ad::cross_entropy(ad::gather_rows(logits, idx_pois), y_pois);
  return ad::add(ad::cross_entropy(ad::gather_rows(logits, idx_clean), y_clean),
                 ad::cross_entropy(ad::gather_rows(logits, idx_pois), y_pois));
}

ad::Var transfer_loss(ad::Tape& t, const Graph& g, const EncoderParams& enc,
                      const TriggerRepository& repo, const TriggerVars& tv,
                      const AttachSelection& sel_u, ad::Var prompt_var,
                      const PromptSpec& prompt, bool prompt_after_attach,
                      const HeadVars& head, const Mat* xw0_base) {
  if (sel_u.nodes.empty())
    throw std::invalid_argument("transfer_loss: empty selection");
  ad::Var logits =
      attacked_logits(t, g, enc, repo, tv, sel_u, prompt_var, prompt,
                      prompt_after_attach, sel_u.nodes, head, xw0_base);
  return ad::cross_entropy(logits,
                           std::vector<int>(sel_u.nodes.size(), repo.target_label));
}

ad::Var stealth_loss(ad::Tape& t, const Graph& g, const TriggerRepository& repo,
                     const TriggerVars& tv, const AttachSelection& sel_p,
                     double tau_sim) {
  check_selection(sel_p, repo);
  const int m = static_cast<int>(sel_p.nodes.size());
  if (m == 0) return t.constant(Mat::Zero(1, 1));
  const int n = repo.trigger_size;
  // Edge pairs in order: each attachment's link edge first, then every
  // internal edge. Side A holds the first endpoint, side B the second.
  Mat x_link(m, g.dim());
  std::vector<int> b_rows, a_int, b_int;
  for (int i = 0; i < m; ++i) {
    x_link.row(i) = g.features.row(sel_p.nodes[i]);
    b_rows.push_back(sel_p.trigger_ids[i] * n);
  }
  for (int i = 0; i < m; ++i)
    for (auto [a, b] : repo.triggers[sel_p.trigger_ids[i]].edges) {
      a_int.push_back(sel_p.trigger_ids[i] * n + a);
      b_int.push_back(sel_p.trigger_ids[i] * n + b);
    }
  b_rows.insert(b_rows.end(), b_int.begin(), b_int.end());
  ad::Var side_a = ad::concat_rows(
      {t.constant(x_link), ad::gather_rows(tv.stacked, a_int)});
  ad::Var side_b = ad::gather_rows(tv.stacked, b_rows);
  ad::Var cos = ad::row_dot(ad::l2_normalize_rows(side_a),
                            ad::l2_normalize_rows(side_b));
  return ad::sum_all(ad::relu(ad::affine(cos, -1.0, tau_sim)));
}

namespace {

// Selection entries of the plan's nodes, looked up inside sel_u.
AttachSelection plan_selection(const PoisonPlan& plan, const AttachSelection& sel_u) {
  AttachSelection sel_p;
  sel_p.nodes = plan.nodes;
  sel_p.trigger_ids.reserve(plan.nodes.size());
  for (int v : plan.nodes) {
    auto it = std::find(sel_u.nodes.begin(), sel_u.nodes.end(), v);
    if (it == sel_u.nodes.end())
      throw std::invalid_argument("attack: plan node missing from selection");
    sel_p.trigger_ids.push_back(sel_u.trigger_ids[it - sel_u.nodes.begin()]);
  }
  return sel_p;
}

ad::Var prompt_tape_var(ad::Tape& t, const PromptSpec& prompt, bool trainable) {
  const Mat& value =
      prompt.kind == PromptSpec::Kind::Token ? prompt.token : prompt.features;
  return trainable ? t.param(value) : t.constant(value);
}

}  // namespace

AttackLossValues attack_loss_values(const Graph& g, const EncoderParams& enc,
                                    const TriggerRepository& repo,
                                    const PoisonPlan& plan,
                                    const AttachSelection& sel_u,
                                    const PromptSpec& prompt, const HeadParams& head,
                                    double tau_sim, bool prompt_after_attach) {
  AttachSelection sel_p = plan_selection(plan, sel_u);
  ad::Tape t;
  TriggerVars tv = make_trigger_vars(t, repo, false);
  ad::Var pv = prompt_tape_var(t, prompt, false);
  HeadVars hv = head_vars(t, head, false);
  AttackLossValues out;
  out.l_p = t.value(poison_loss(t, g, enc, repo, tv, sel_p, pv, prompt,
                                prompt_after_attach, hv, nullptr))(0, 0);
  out.l_trans = t.value(transfer_loss(t, g, enc, repo, tv, sel_u, pv, prompt,
                                      prompt_after_attach, hv, nullptr))(0, 0);
  out.l_ste = t.value(stealth_loss(t, g, repo, tv, sel_p, tau_sim))(0, 0);
  out.l_total = out.l_trans + repo.lambda * out.l_ste;
  return out;
}

AttackResult run_cpgba(const Graph& g, const EncoderParams& upstream,
                       const ModelBundle& surrogate, const TriggerRepository& repo,
                       const PoisonPlan& plan, const AttackHyper& hp) {
  if (repo.count() == 0)
    throw std::invalid_argument("run_cpgba: empty trigger repository");
  if (g.num_classes < 2)
    throw std::invalid_argument("run_cpgba: graph needs class labels");
  for (int v : plan.nodes)
    if (g.roles[v] != Role::TrainUnlabeled)
      throw std::invalid_argument("run_cpgba: plan node is not train-unlabeled");

  AttackResult out;
  out.repo = repo;
  out.prompt = hp.prompt_kind == PromptSpec::Kind::Token
                   ? make_token_prompt(g.dim())
                   : make_subgraph_prompt(g, hp.prompt_nodes, mix_seed(hp.seed, 21));
  out.head = make_head({upstream.out_dim(), hp.head_hidden, g.num_classes},
                       mix_seed(hp.seed, 22));
  if (hp.max_epochs == 0) return out;

  const double tau =
      std::isnan(hp.tau_sim) ? edge_cosine_percentile(g, hp.tau_pct) : hp.tau_sim;
  out.repo.lambda = hp.lambda;
  out.repo.tau_sim = tau;

  std::vector<int> v_u = g.nodes_with_role(Role::TrainUnlabeled);
  if (v_u.empty())
    throw std::invalid_argument("run_cpgba: no train-unlabeled nodes");

  // Fixed per run: the surrogate's clean embeddings drive trigger selection,
  // and the clean first-layer product feeds every attacked forward pass.
  Mat node_emb = encode_graph(surrogate.encoder, g);
  Mat emb_u(v_u.size(), node_emb.cols());
  for (size_t i = 0; i < v_u.size(); ++i) emb_u.row(i) = node_emb.row(v_u[i]);
  Mat xw0_base;
  const Mat* xw0 = nullptr;
  if (upstream.arch == Arch::GCN) {
    xw0_base = g.features * upstream.weights[0];
    xw0 = &xw0_base;
  }

  AdamConfig inner_cfg;
  inner_cfg.lr = hp.lr_inner;
  AdamConfig outer_cfg;
  outer_cfg.lr = hp.lr_outer;
  AdamState opt_inner(inner_cfg), opt_outer(outer_cfg);
  Mat& prompt_host = out.prompt.kind == PromptSpec::Kind::Token
                         ? out.prompt.token
                         : out.prompt.features;

  double prev_total = 0.0;
  int quiet = 0;
  for (int epoch = 0; epoch < hp.max_epochs; ++epoch) {
    rebuild_cache(out.repo, surrogate.encoder);
    AttachSelection sel_u{v_u, batch_select(out.repo, emb_u)};
    AttachSelection sel_p = plan_selection(plan, sel_u);

    // Inner phase: classifier head and prompt chase the current triggers.
    double l_p_last = 0.0;
    for (int s = 0; s < hp.inner_steps; ++s) {
      ad::Tape t;
      TriggerVars tv = make_trigger_vars(t, out.repo, false);
      ad::Var pv = prompt_tape_var(t, out.prompt, true);
      HeadVars hv = head_vars(t, out.head, true);
      ad::Var lp = poison_loss(t, g, upstream, out.repo, tv, sel_p, pv,
                               out.prompt, hp.prompt_after_attach, hv, xw0);
      l_p_last = t.value(lp)(0, 0);
      t.backward(lp);
      std::vector<ParamBinding> bind{{&prompt_host, pv}};
      for (int l = 0; l < out.head.layers(); ++l) {
        bind.push_back({&out.head.weights[l], hv.weights[l]});
        bind.push_back({&out.head.biases[l], hv.biases[l]});
      }
      step_params(opt_inner, t, bind);
    }

    // Outer phase: one trigger update on transfer + lambda * stealth.
    ad::Tape t;
    TriggerVars tv = make_trigger_vars(t, out.repo, true);
    ad::Var pv = prompt_tape_var(t, out.prompt, false);
    HeadVars hv = head_vars(t, out.head, false);
    ad::Var l_trans = transfer_loss(t, g, upstream, out.repo, tv, sel_u, pv,
                                    out.prompt, hp.prompt_after_attach, hv, xw0);
    ad::Var l_ste = stealth_loss(t, g, out.repo, tv, sel_p, tau);
    ad::Var l_total = ad::add(l_trans, ad::affine(l_ste, hp.lambda, 0.0));
    double v_trans = t.value(l_trans)(0, 0);
    double v_ste = t.value(l_ste)(0, 0);
    double v_total = t.value(l_total)(0, 0);
    t.backward(l_total);
    std::vector<ParamBinding> bind;
    for (int k = 0; k < out.repo.count(); ++k)
      bind.push_back({&out.repo.triggers[k].features, tv.features[k]});
    step_params(opt_outer, t, bind);

    out.repo.log.push_back({epoch, l_p_last, v_trans, v_ste, v_total});
    out.epochs_run = epoch + 1;
    if (epoch > 0) {
      double rel = std::abs(v_total - prev_total) /
                   std::max(std::abs(prev_total), 1e-12);
      quiet = rel < hp.conv_tol ? quiet + 1 : 0;
    }
    prev_total = v_total;
    if (quiet >= hp.conv_patience) break;
  }
  rebuild_cache(out.repo, surrogate.encoder);
  return out;
}

}  // namespace gblab
