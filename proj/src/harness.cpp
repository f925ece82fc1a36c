#include "gblab/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "gblab/train_util.hpp"

namespace gblab {

namespace {

using nlohmann::json;

void append_double(std::string& out, double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  out.append(buf, p);
}

void write_text(const std::string& text, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

struct StopWatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double lap() {
    auto t1 = std::chrono::steady_clock::now();
    double s = std::chrono::duration<double>(t1 - t0).count();
    t0 = t1;
    return s;
  }
};

void check(bool ok, const char* what) {
  if (!ok) throw std::runtime_error(std::string("config: ") + what);
}

}  // namespace

void validate_config(const ExperimentConfig& cfg) {
  check(cfg.target_label >= 0, "target_label must be >= 0");
  check(cfg.samples >= 1, "samples must be >= 1");
  check(cfg.trigger_size >= 1, "trigger_size must be >= 1");
  check(cfg.k >= 1, "k must be >= 1");
  check(cfg.budget >= 0, "budget must be >= 0");
  check(cfg.upstream_layers >= 1, "upstream_layers must be >= 1");
  check(!cfg.paradigms.empty(), "paradigms must not be empty");
  for (const auto& p : cfg.paradigms)
    check(p == "gsl" || p == "gcl" || p == "gpl", "unknown paradigm");
  check(!cfg.defenses.empty(), "defenses must not be empty");
  if (cfg.graph_path.empty())
    check(!cfg.sbm.blocks.empty(), "sbm.blocks must not be empty");
  check(cfg.attack.inner_steps >= 0, "attack.inner_steps must be >= 0");
  check(cfg.attack.max_epochs >= 0, "attack.max_epochs must be >= 0");
  check(cfg.attack.conv_patience >= 1, "attack.conv_patience must be >= 1");
  check(cfg.attack.lr_inner > 0 && cfg.attack.lr_outer > 0,
        "attack learning rates must be positive");
  check(cfg.attack.lambda >= 0, "attack.lambda must be >= 0");
  check(cfg.attack.head_hidden >= 1, "attack.head_hidden must be >= 1");
  check(cfg.attack.prompt_nodes >= 1, "attack.prompt_nodes must be >= 1");
  check(cfg.train.epochs >= 0, "train.epochs must be >= 0");
  check(cfg.train.contrastive_epochs >= 0, "train.contrastive_epochs must be >= 0");
  check(cfg.train.lr > 0, "train.lr must be positive");
  check(cfg.train.hidden >= 1, "train.hidden must be >= 1");
  check(cfg.train.edge_drop >= 0 && cfg.train.edge_drop < 1, "train.edge_drop in [0,1)");
  check(cfg.train.feat_mask >= 0 && cfg.train.feat_mask < 1, "train.feat_mask in [0,1)");
  check(cfg.train.tau_c > 0, "train.tau_c must be positive");
  check(cfg.train.prompt_nodes >= 1, "train.prompt_nodes must be >= 1");
}

namespace {

json sbm_to_json(const SbmParams& p) {
  json blocks = json::array();
  for (const auto& b : p.blocks)
    blocks.push_back({{"size", b.size}, {"label", b.label}});
  return {{"blocks", std::move(blocks)}, {"p_in", p.p_in},   {"p_out", p.p_out},
          {"dim", p.feature_dim},        {"sep", p.mean_separation},
          {"noise", p.noise},            {"seed", p.seed}};
}

SbmParams sbm_from_json(const json& j, SbmParams p) {
  if (j.contains("blocks")) {
    p.blocks.clear();
    for (const json& b : j.at("blocks"))
      p.blocks.push_back({b.at("size").get<int>(), b.at("label").get<int>()});
  }
  p.p_in = j.value("p_in", p.p_in);
  p.p_out = j.value("p_out", p.p_out);
  p.feature_dim = j.value("dim", p.feature_dim);
  p.mean_separation = j.value("sep", p.mean_separation);
  p.noise = j.value("noise", p.noise);
  p.seed = j.value("seed", p.seed);
  return p;
}

json attack_to_json(const AttackHyper& a) {
  json out{{"inner_steps", a.inner_steps},
           {"lr_inner", a.lr_inner},
           {"lr_outer", a.lr_outer},
           {"max_epochs", a.max_epochs},
           {"conv_tol", a.conv_tol},
           {"conv_patience", a.conv_patience},
           {"lambda", a.lambda},
           {"prompt_kind",
            a.prompt_kind == PromptSpec::Kind::Token ? "token" : "subgraph"},
           {"prompt_after_attach", a.prompt_after_attach},
           {"head_hidden", a.head_hidden},
           {"prompt_nodes", a.prompt_nodes}};
  if (std::isnan(a.tau_sim)) {
    std::string pct = "pctl:";
    append_double(pct, a.tau_pct);
    out["tau_sim"] = pct;
  } else {
    out["tau_sim"] = a.tau_sim;
  }
  return out;
}

AttackHyper attack_from_json(const json& j, AttackHyper a) {
  a.inner_steps = j.value("inner_steps", a.inner_steps);
  a.lr_inner = j.value("lr_inner", a.lr_inner);
  a.lr_outer = j.value("lr_outer", a.lr_outer);
  a.max_epochs = j.value("max_epochs", a.max_epochs);
  a.conv_tol = j.value("conv_tol", a.conv_tol);
  a.conv_patience = j.value("conv_patience", a.conv_patience);
  a.lambda = j.value("lambda", a.lambda);
  if (j.contains("tau_sim")) {
    const json& t = j.at("tau_sim");
    if (t.is_string()) {
      std::string s = t.get<std::string>();
      if (s.rfind("pctl:", 0) != 0)
        throw std::runtime_error("config: tau_sim string must be pctl:<pct>");
      a.tau_sim = std::nan("");
      a.tau_pct = std::stod(s.substr(5));
    } else {
      a.tau_sim = t.get<double>();
    }
  }
  if (j.contains("prompt_kind")) {
    std::string k = j.at("prompt_kind").get<std::string>();
    if (k == "token") a.prompt_kind = PromptSpec::Kind::Token;
    else if (k == "subgraph") a.prompt_kind = PromptSpec::Kind::Subgraph;
    else throw std::runtime_error("config: unknown prompt_kind " + k);
  }
  a.prompt_after_attach = j.value("prompt_after_attach", a.prompt_after_attach);
  a.head_hidden = j.value("head_hidden", a.head_hidden);
  a.prompt_nodes = j.value("prompt_nodes", a.prompt_nodes);
  return a;
}

json train_to_json(const TrainHyper& t) {
  return {{"epochs", t.epochs},
          {"lr", t.lr},
          {"hidden", t.hidden},
          {"contrastive_epochs", t.contrastive_epochs},
          {"edge_drop", t.edge_drop},
          {"feat_mask", t.feat_mask},
          {"tau_c", t.tau_c},
          {"prompt_nodes", t.prompt_nodes}};
}

TrainHyper train_from_json(const json& j, TrainHyper t) {
  t.epochs = j.value("epochs", t.epochs);
  t.lr = j.value("lr", t.lr);
  t.hidden = j.value("hidden", t.hidden);
  t.contrastive_epochs = j.value("contrastive_epochs", t.contrastive_epochs);
  t.edge_drop = j.value("edge_drop", t.edge_drop);
  t.feat_mask = j.value("feat_mask", t.feat_mask);
  t.tau_c = j.value("tau_c", t.tau_c);
  t.prompt_nodes = j.value("prompt_nodes", t.prompt_nodes);
  return t;
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  try {
    ExperimentConfig cfg;
    cfg.graph_path = j.value("graph", cfg.graph_path);
    if (j.contains("sbm")) cfg.sbm = sbm_from_json(j.at("sbm"), cfg.sbm);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.target_label = j.value("target_label", cfg.target_label);
    cfg.samples = j.value("samples", cfg.samples);
    cfg.trigger_size = j.value("trigger_size", cfg.trigger_size);
    cfg.k = j.value("k", cfg.k);
    cfg.budget = j.value("budget", cfg.budget);
    cfg.upstream_layers = j.value("upstream_layers", cfg.upstream_layers);
    if (j.contains("arch")) cfg.arch = parse_arch_tag(j.at("arch").get<std::string>());
    if (j.contains("paradigms"))
      cfg.paradigms = j.at("paradigms").get<std::vector<std::string>>();
    if (j.contains("defenses")) {
      cfg.defenses.clear();
      for (const json& d : j.at("defenses"))
        cfg.defenses.push_back(parse_defense_tag(d.get<std::string>()));
    }
    if (j.contains("attack")) cfg.attack = attack_from_json(j.at("attack"), cfg.attack);
    if (j.contains("train")) cfg.train = train_from_json(j.at("train"), cfg.train);
    validate_config(cfg);
    return cfg;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  json j;
  j["graph"] = cfg.graph_path;
  j["sbm"] = sbm_to_json(cfg.sbm);
  j["seed"] = cfg.seed;
  j["target_label"] = cfg.target_label;
  j["samples"] = cfg.samples;
  j["trigger_size"] = cfg.trigger_size;
  j["k"] = cfg.k;
  j["budget"] = cfg.budget;
  j["upstream_layers"] = cfg.upstream_layers;
  j["arch"] = arch_tag(cfg.arch);
  j["paradigms"] = cfg.paradigms;
  json defs = json::array();
  for (DefenseKind d : cfg.defenses) defs.push_back(defense_tag(d));
  j["defenses"] = std::move(defs);
  j["attack"] = attack_to_json(cfg.attack);
  j["train"] = train_to_json(cfg.train);
  write_text(j.dump(2) + "\n", path);
}

Graph poison_graph(const Graph& g, TriggerRepository& repo,
                   const ModelBundle& surrogate, PoisonPlan& plan) {
  if (plan.budget >= 0 && static_cast<int>(plan.nodes.size()) > plan.budget)
    throw std::invalid_argument("poison_graph: plan exceeds its budget");
  if (plan.nodes.empty()) {
    plan.trigger_ids.clear();
    return g;
  }
  for (int v : plan.nodes)
    if (v < 0 || v >= g.num_nodes)
      throw std::invalid_argument("poison_graph: plan node out of range");
  rebuild_cache(repo, surrogate.encoder);
  Mat emb = encode_graph(surrogate.encoder, g);
  Mat ep(plan.nodes.size(), emb.cols());
  for (size_t i = 0; i < plan.nodes.size(); ++i) ep.row(i) = emb.row(plan.nodes[i]);
  plan.trigger_ids = batch_select(repo, ep);

  std::vector<Subgraph> subs;
  subs.reserve(repo.count());
  for (const auto& t : repo.triggers) subs.push_back(trigger_subgraph(t));
  std::vector<std::pair<const Subgraph*, int>> attachments;
  attachments.reserve(plan.nodes.size());
  for (size_t i = 0; i < plan.nodes.size(); ++i)
    attachments.emplace_back(&subs[plan.trigger_ids[i]], plan.nodes[i]);
  Graph out = attach_many(g, attachments);
  for (int v : plan.nodes) {
    out.labels[v] = repo.target_label;
    out.roles[v] = Role::TrainLabeled;
  }
  return out;
}

ModelBundle train_downstream(const Graph& g, const std::string& paradigm,
                             Arch arch, const EncoderParams& frozen2,
                             const TrainHyper& hp) {
  if (paradigm == "gsl") return train_gsl(g, arch, hp);
  if (paradigm == "gcl") {
    ModelBundle m;
    m.paradigm = "gcl";
    m.encoder = train_gcl(g, arch, 2, hp);
    m.head = train_probe(m.encoder, g, hp);
    m.seed = hp.seed;
    return m;
  }
  if (paradigm == "gpl")
    return train_gpl(g, frozen2, PromptSpec::Kind::Subgraph, hp);
  throw std::runtime_error("unknown paradigm: " + paradigm);
}

EvalOutcome evaluate_model(const ModelBundle& victim, TriggerRepository& repo,
                           const ModelBundle& surrogate, const Graph& g) {
  EvalOutcome out;
  rebuild_cache(repo, surrogate.encoder);
  std::vector<int> targets = g.nodes_with_role(Role::TestTarget);
  std::vector<int> clean = g.nodes_with_role(Role::TestClean);
  if (!targets.empty()) {
    Mat emb = encode_graph(surrogate.encoder, g);
    Mat et(targets.size(), emb.cols());
    for (size_t i = 0; i < targets.size(); ++i) et.row(i) = emb.row(targets[i]);
    std::vector<int> sel = batch_select(repo, et);
    std::vector<Subgraph> subs;
    subs.reserve(repo.count());
    for (const auto& t : repo.triggers) subs.push_back(trigger_subgraph(t));
    std::vector<std::pair<const Subgraph*, int>> attachments;
    attachments.reserve(targets.size());
    for (size_t i = 0; i < targets.size(); ++i)
      attachments.emplace_back(&subs[sel[i]], targets[i]);
    Graph hit = attach_many(g, attachments);
    std::vector<int> pred = predict(model_logits(victim, hit, targets));
    int hits = 0;
    for (int p : pred) hits += p == repo.target_label;
    out.asr = static_cast<double>(hits) / static_cast<double>(targets.size());
  }
  if (!clean.empty()) {
    std::vector<int> pred = predict(model_logits(victim, g, clean));
    int ok = 0, total = 0;
    for (size_t i = 0; i < clean.size(); ++i) {
      if (g.labels[clean[i]] < 0) continue;
      ++total;
      ok += pred[i] == g.labels[clean[i]];
    }
    if (total > 0) out.acc = static_cast<double>(ok) / total;
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  ExperimentResult res;
  res.config = cfg;
  StopWatch total, sw;

  Graph g;
  if (cfg.graph_path.empty()) {
    g = gen_sbm(cfg.sbm);
  } else {
    g = load_graph(cfg.graph_path);
    std::string roles = cfg.graph_path + ".roles";
    if (std::filesystem::exists(roles)) load_roles(g, roles);
  }
  bool has_roles = std::any_of(g.roles.begin(), g.roles.end(),
                               [](Role r) { return r != Role::Unassigned; });
  if (!has_roles) g = split_dataset(g, mix_seed(cfg.seed, 1));
  if (cfg.target_label >= g.num_classes)
    throw std::runtime_error("config: target_label out of range for this graph");
  res.timings.push_back({"load", sw.lap()});

  TrainHyper hp_s = cfg.train;
  hp_s.seed = mix_seed(cfg.seed, 2);
  res.surrogate = train_clean_encoder(g, hp_s);
  res.timings.push_back({"surrogate", sw.lap()});

  TrainHyper hp_u = cfg.train;
  hp_u.seed = mix_seed(cfg.seed, 3);
  res.upstream.paradigm = "gcl";
  res.upstream.encoder = train_gcl(g, cfg.arch, cfg.upstream_layers, hp_u);
  res.upstream.head = train_probe(res.upstream.encoder, g, hp_u);
  res.upstream.seed = hp_u.seed;
  res.timings.push_back({"upstream", sw.lap()});

  bool need_gpl = std::find(cfg.paradigms.begin(), cfg.paradigms.end(), "gpl") !=
                  cfg.paradigms.end();
  if (need_gpl) {
    TrainHyper hp_f = cfg.train;
    hp_f.seed = mix_seed(cfg.seed, 4);
    res.frozen2 = train_gcl(g, cfg.arch, 2, hp_f);
    res.timings.push_back({"gpl_encoder", sw.lap()});
  }

  std::vector<Subgraph> candidates =
      sample_candidates(g, cfg.target_label, cfg.trigger_size, cfg.samples);
  Mat emb = encode_graph(res.surrogate.encoder, g);
  TriggerRepository forged = condense(candidates, emb, res.surrogate.encoder,
                                      cfg.k, cfg.target_label, mix_seed(cfg.seed, 5));
  res.plan = select_poisoned_nodes(g, emb, cfg.budget, mix_seed(cfg.seed, 6));
  res.timings.push_back({"forge", sw.lap()});

  AttackHyper ah = cfg.attack;
  ah.seed = mix_seed(cfg.seed, 7);
  AttackResult attack =
      run_cpgba(g, res.upstream.encoder, res.surrogate, forged, res.plan, ah);
  res.repo = std::move(attack.repo);
  res.attack_epochs = attack.epochs_run;
  res.repo_rank = rank_diagnostic(res.repo);
  res.timings.push_back({"attack", sw.lap()});

  res.clean = g;
  res.poisoned = poison_graph(g, res.repo, res.surrogate, res.plan);
  res.timings.push_back({"poison", sw.lap()});

  int cell_index = 0;
  for (DefenseKind defense : cfg.defenses) {
    DefenseReport rep_poisoned, rep_clean;
    Seed defense_seed = mix_seed(cfg.seed, 8);
    Graph defended_poisoned =
        apply_defense(res.poisoned, defense, defense_seed, &rep_poisoned);
    Graph defended_clean = apply_defense(g, defense, defense_seed, &rep_clean);
    std::string tag = defense_tag(defense);
    res.defense_reports.emplace_back(tag + "_poisoned", std::move(rep_poisoned));
    res.defense_reports.emplace_back(tag + "_clean", std::move(rep_clean));
    res.timings.push_back({"defense_" + tag, sw.lap()});

    for (const std::string& paradigm : cfg.paradigms) {
      TrainHyper hp = cfg.train;
      hp.seed = mix_seed(cfg.seed, 100 + cell_index);  // pairs share the seed
      ModelBundle victim =
          train_downstream(defended_poisoned, paradigm, cfg.arch, res.frozen2, hp);
      ModelBundle baseline =
          train_downstream(defended_clean, paradigm, cfg.arch, res.frozen2, hp);
      res.timings.push_back({"train_" + paradigm + "_" + tag, sw.lap()});

      EvalOutcome poisoned_eval =
          evaluate_model(victim, res.repo, res.surrogate, res.poisoned);
      EvalOutcome clean_eval = evaluate_model(baseline, res.repo, res.surrogate, g);
      res.cells.push_back({paradigm, defense, poisoned_eval.asr, poisoned_eval.acc,
                           clean_eval.acc, clean_eval.acc - poisoned_eval.acc});
      res.timings.push_back({"eval_" + paradigm + "_" + tag, sw.lap()});
      ++cell_index;
    }
  }
  res.timings.push_back({"total", total.lap()});
  return res;
}

void emit_report(const ExperimentResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_config(result.config, dir + "/config.json");
  save_repository(result.repo, &result.surrogate, dir + "/repo.json");
  save_model(result.surrogate, dir + "/surrogate.json");
  save_model(result.upstream, dir + "/upstream.json");

  std::string plan = "node_id,trigger_id\n";
  for (size_t i = 0; i < result.plan.nodes.size(); ++i) {
    plan += std::to_string(result.plan.nodes[i]);
    plan += ',';
    plan += std::to_string(i < result.plan.trigger_ids.size()
                               ? result.plan.trigger_ids[i]
                               : -1);
    plan += '\n';
  }
  write_text(plan, dir + "/plan.csv");

  for (const auto& [key, report] : result.defense_reports)
    write_defense_report(report, dir + "/defense_" + key + ".csv");

  std::string csv = "paradigm,defense,asr,acc,ca,ad\n";
  for (const auto& c : result.cells) {
    csv += c.paradigm;
    csv += ',';
    csv += defense_tag(c.defense);
    csv += ',';
    append_double(csv, c.asr);
    csv += ',';
    append_double(csv, c.acc);
    csv += ',';
    append_double(csv, c.ca);
    csv += ',';
    append_double(csv, c.ad);
    csv += '\n';
  }
  write_text(csv, dir + "/report.csv");

  char line[256];
  std::string md = "# Attack report\n\n";
  std::snprintf(line, sizeof(line),
                "- nodes: %d clean, %d poisoned (|V_P| = %d, budget %d)\n",
                result.clean.num_nodes, result.poisoned.num_nodes,
                static_cast<int>(result.plan.nodes.size()), result.plan.budget);
  md += line;
  std::snprintf(line, sizeof(line),
                "- repository: K=%d triggers of n=%d nodes, target label %d, "
                "lambda=%.3g, tau_sim=%.4g, rank %d\n",
                result.repo.count(), result.repo.trigger_size,
                result.repo.target_label, result.repo.lambda, result.repo.tau_sim,
                result.repo_rank);
  md += line;
  std::snprintf(line, sizeof(line), "- attack epochs: %d\n", result.attack_epochs);
  md += line;
  if (!result.repo.log.empty()) {
    const auto& e = result.repo.log.back();
    std::snprintf(line, sizeof(line),
                  "- final losses: L_p=%.4f L_Trans=%.4f L_Ste=%.4f L_t=%.4f\n",
                  e.l_p, e.l_trans, e.l_ste, e.l_total);
    md += line;
  }
  md += "\n| paradigm | defense | ASR | ACC | CA | AD |\n";
  md += "|---|---|---|---|---|---|\n";
  for (const auto& c : result.cells) {
    std::snprintf(line, sizeof(line), "| %s | %s | %.4f | %.4f | %.4f | %+.4f |\n",
                  c.paradigm.c_str(), defense_tag(c.defense), c.asr, c.acc, c.ca,
                  c.ad);
    md += line;
  }
  write_text(md, dir + "/report.md");

  Mat emb = encode_graph(result.surrogate.encoder, result.poisoned);
  Mat coords = export_pca(emb);
  std::vector<char> poisoned_flag(result.poisoned.num_nodes, 0);
  for (int v : result.plan.nodes) poisoned_flag[v] = 1;
  write_pca_csv(coords, result.poisoned.labels, poisoned_flag, dir + "/pca.csv");

  std::string timing = "phase,seconds\n";
  for (const auto& t : result.timings) {
    timing += t.phase;
    timing += ',';
    append_double(timing, t.seconds);
    timing += '\n';
  }
  write_text(timing, dir + "/timing.csv");
}

std::vector<AttachTiming> benchmark_attach(const TriggerRepository& repo,
                                           const Graph& g,
                                           const std::vector<int>& batches,
                                           Seed seed, int reps) {
  if (repo.count() == 0)
    throw std::invalid_argument("benchmark_attach: empty repository");
  for (const auto& t : repo.triggers)
    if (t.cache.size() == 0)
      throw std::invalid_argument("benchmark_attach: trigger caches missing");
  if (reps < 1) reps = 1;
  const int n = repo.trigger_size;
  const int e = static_cast<int>(repo.triggers[0].cache.size());

  std::vector<AttachTiming> out;
  std::uint64_t sink = 0;
  for (int b : batches) {
    if (b <= 0) throw std::invalid_argument("benchmark_attach: bad batch size");
    Mat emb(b, e);
    std::mt19937_64 rng(mix_seed(seed, static_cast<Seed>(b)));
    std::normal_distribution<double> noise;
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < e; ++j) emb(i, j) = noise(rng);

    std::vector<double> times;
    times.reserve(reps);
    for (int rep = 0; rep < reps; ++rep) {
      auto t0 = std::chrono::steady_clock::now();
      std::vector<int> sel = batch_select(repo, emb);
      std::vector<std::pair<int, int>> edges;
      std::vector<int> feature_rows;
      edges.reserve(static_cast<size_t>(b) * (1 + n));
      feature_rows.reserve(static_cast<size_t>(b) * n);
      for (int i = 0; i < b; ++i) {
        int owner = g.num_nodes > 0 ? i % g.num_nodes : 0;
        int base = g.num_nodes + i * n;
        edges.emplace_back(owner, base);
        for (auto [x, y] : repo.triggers[sel[i]].edges)
          edges.emplace_back(base + x, base + y);
        for (int q = 0; q < n; ++q) feature_rows.push_back(sel[i] * n + q);
      }
      auto t1 = std::chrono::steady_clock::now();
      sink += edges.size() + static_cast<std::uint64_t>(feature_rows.back());
      times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    out.push_back({b, times[times.size() / 2]});
  }
  volatile std::uint64_t keep = sink;
  (void)keep;
  return out;
}

double linear_r2(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("linear_r2: need two paired samples");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, sst = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    sst += (y[i] - my) * (y[i] - my);
  }
  if (sst == 0) return 1.0;
  if (sxx == 0) return 0.0;
  double slope = sxy / sxx;
  double ssr = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    double fit = my + slope * (x[i] - mx);
    ssr += (y[i] - fit) * (y[i] - fit);
  }
  return 1.0 - ssr / sst;
}

Mat export_pca(const Mat& embeddings) {
  const int n = static_cast<int>(embeddings.rows());
  const int d = static_cast<int>(embeddings.cols());
  Mat coords = Mat::Zero(n, 2);
  if (n == 0 || d == 0) return coords;
  Mat x = embeddings.rowwise() - embeddings.colwise().mean();
  // Trace of X^T X bounds the top eigenvalue; once an iterate falls below
  // roundoff relative to it, whatever is left is cancellation noise, not a
  // component (deflated rank-one data would otherwise re-converge onto the
  // first direction).
  const double scale = x.cwiseAbs2().sum();

  std::mt19937_64 rng(0x9E3779B97F4A7C15ull);
  std::normal_distribution<double> noise;
  auto principal = [&](const Vec* deflate) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v[i] = noise(rng);
    if (deflate) v -= *deflate * deflate->dot(v);
    double nv = v.norm();
    if (nv > 0) v /= nv;
    for (int it = 0; it < 200; ++it) {
      Vec w = x.transpose() * (x * v);
      if (deflate) w -= *deflate * deflate->dot(w);
      double nw = w.norm();
      if (nw <= scale * 1e-14) break;
      v = w / nw;
    }
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    return v;
  };
  Vec v1 = principal(nullptr);
  coords.col(0) = x * v1;
  if (d > 1) {
    Vec v2 = principal(&v1);
    coords.col(1) = x * v2;
  }
  return coords;
}

void write_pca_csv(const Mat& coords, const std::vector<int>& labels,
                   const std::vector<char>& poisoned, const std::string& path) {
  if (coords.rows() != static_cast<Eigen::Index>(labels.size()) ||
      labels.size() != poisoned.size())
    throw std::invalid_argument("write_pca_csv: ragged inputs");
  std::string out = "node_id,pc1,pc2,label,poisoned\n";
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    out += std::to_string(i);
    out += ',';
    append_double(out, coords(i, 0));
    out += ',';
    append_double(out, coords(i, 1));
    out += ',';
    out += std::to_string(labels[i]);
    out += ',';
    out += poisoned[i] ? '1' : '0';
    out += '\n';
  }
  write_text(out, path);
}

}  // namespace gblab
