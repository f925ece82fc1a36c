// Command-line front end: each subcommand wraps one pipeline stage so runs can
// be scripted piecemeal (gen-sbm -> split -> pretrain -> forge -> optimize ->
// poison -> train -> evaluate) or driven end to end via `run --config`.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gblab/attack.hpp"
#include "gblab/defense.hpp"
#include "gblab/graph.hpp"
#include "gblab/harness.hpp"
#include "gblab/model_io.hpp"
#include "gblab/paradigms.hpp"
#include "gblab/train_util.hpp"
#include "gblab/trigger.hpp"

namespace {

using namespace gblab;

// Loads a graph plus its role sidecar (PATH.roles) when one exists.
Graph load_graph_any(const std::string& path) {
  Graph g = load_graph(path);
  std::string roles = path + ".roles";
  if (std::filesystem::exists(roles)) load_roles(g, roles);
  return g;
}

bool has_split(const Graph& g) {
  return std::any_of(g.roles.begin(), g.roles.end(),
                     [](Role r) { return r != Role::Unassigned; });
}

// Splits on the fly when the graph arrives without roles, so every stage works
// on a bare gen-sbm output too.
Graph ensure_split(Graph g, Seed seed) {
  return has_split(g) ? g : split_dataset(g, seed);
}

std::vector<SbmBlock> parse_block_spec(const std::string& spec) {
  std::vector<SbmBlock> blocks;
  size_t pos = 0;
  while (pos <= spec.size()) {
    size_t comma = spec.find(',', pos);
    std::string item = spec.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    size_t colon = item.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == item.size())
      throw std::runtime_error("--blocks expects size:label,... got '" + item + "'");
    blocks.push_back({std::stoi(item.substr(0, colon)),
                      std::stoi(item.substr(colon + 1))});
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (blocks.empty()) throw std::runtime_error("--blocks is empty");
  return blocks;
}

std::vector<int> parse_int_list(const std::string& spec) {
  std::vector<int> out;
  size_t pos = 0;
  while (pos <= spec.size()) {
    size_t comma = spec.find(',', pos);
    out.push_back(std::stoi(spec.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

// A plain number or pctl:N (percentile of the clean graph's edge cosines).
void apply_tau(AttackHyper& hp, const std::string& spec) {
  if (spec.rfind("pctl:", 0) == 0) {
    hp.tau_sim = std::nan("");
    hp.tau_pct = std::stod(spec.substr(5));
  } else {
    hp.tau_sim = std::stod(spec);
  }
}

RepositoryFile load_repo_with_surrogate(const std::string& path) {
  RepositoryFile rf = load_repository(path);
  if (!rf.surrogate)
    throw std::runtime_error(path +
                             ": no embedded surrogate model (produce the "
                             "repository with `forge`)");
  return rf;
}

void write_graph_with_roles(const Graph& g, const std::string& path) {
  write_graph(g, path);
  write_roles(g, path + ".roles");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gblab: condensed-trigger graph backdoor laboratory"};
  app.require_subcommand(1);

  // gen-sbm
  struct {
    std::string blocks, out;
    SbmParams p;
  } gen;
  gen.p.seed = 7;
  auto* cmd_gen = app.add_subcommand("gen-sbm", "Generate an SBM graph with Gaussian features");
  cmd_gen->add_option("--blocks", gen.blocks, "block spec, size:label,...")->required();
  cmd_gen->add_option("--p-in", gen.p.p_in, "intra-block edge probability")->capture_default_str();
  cmd_gen->add_option("--p-out", gen.p.p_out, "inter-block edge probability")->capture_default_str();
  cmd_gen->add_option("--dim", gen.p.feature_dim, "feature dimension")->capture_default_str();
  cmd_gen->add_option("--sep", gen.p.mean_separation, "class mean separation")->capture_default_str();
  cmd_gen->add_option("--noise", gen.p.noise, "feature noise stddev")->capture_default_str();
  cmd_gen->add_option("--seed", gen.p.seed, "RNG seed")->capture_default_str();
  cmd_gen->add_option("--out", gen.out, "output graph path")->required();
  cmd_gen->callback([&] {
    gen.p.blocks = parse_block_spec(gen.blocks);
    Graph g = gen_sbm(gen.p);
    write_graph(g, gen.out);
    std::printf("wrote %s: %d nodes, %d edges, %d classes\n", gen.out.c_str(),
                g.num_nodes, g.num_edges, g.num_classes);
  });

  // split
  struct {
    std::string graph, out;
    Seed seed = 7;
  } spl;
  auto* cmd_split = app.add_subcommand("split", "Assign train/test roles");
  cmd_split->add_option("--graph", spl.graph, "input graph")->required();
  cmd_split->add_option("--seed", spl.seed, "RNG seed")->capture_default_str();
  cmd_split->add_option("--out", spl.out, "output graph path")->required();
  cmd_split->callback([&] {
    Graph g = split_dataset(load_graph(spl.graph), spl.seed);
    write_graph_with_roles(g, spl.out);
    auto count = [&](Role r) { return static_cast<int>(g.nodes_with_role(r).size()); };
    std::printf("wrote %s (+.roles): %d labeled, %d unlabeled, %d test-clean, %d test-target\n",
                spl.out.c_str(), count(Role::TrainLabeled), count(Role::TrainUnlabeled),
                count(Role::TestClean), count(Role::TestTarget));
  });

  // pretrain
  struct {
    std::string graph, paradigm = "gcl", arch = "gcn", out;
    int layers = 3;
    Seed seed = 7;
  } pre;
  auto* cmd_pre = app.add_subcommand("pretrain", "Contrastively pretrain a frozen encoder (+ probe head)");
  cmd_pre->add_option("--graph", pre.graph, "input graph")->required();
  cmd_pre->add_option("--paradigm", pre.paradigm, "pretraining paradigm (gcl)")->capture_default_str();
  cmd_pre->add_option("--arch", pre.arch, "gcn|sage")->capture_default_str();
  cmd_pre->add_option("--layers", pre.layers, "encoder depth")->capture_default_str();
  cmd_pre->add_option("--seed", pre.seed, "RNG seed")->capture_default_str();
  cmd_pre->add_option("--out", pre.out, "output model path")->required();
  cmd_pre->callback([&] {
    if (pre.paradigm != "gcl")
      throw std::runtime_error("pretrain supports --paradigm gcl only");
    Graph g = ensure_split(load_graph_any(pre.graph), mix_seed(pre.seed, 1));
    TrainHyper hp;
    hp.seed = mix_seed(pre.seed, 3);
    ModelBundle m;
    m.paradigm = "gcl";
    m.encoder = train_gcl(g, parse_arch_tag(pre.arch), pre.layers, hp);
    m.head = train_probe(m.encoder, g, hp);
    m.seed = hp.seed;
    save_model(m, pre.out);
    std::printf("wrote %s: %d-layer %s encoder, frozen\n", pre.out.c_str(),
                pre.layers, pre.arch.c_str());
  });

  // forge
  struct {
    std::string graph, out;
    int target_label = 0, samples = 200, trigger_size = 5, k = 20;
    Seed seed = 7;
  } forge;
  auto* cmd_forge = app.add_subcommand("forge", "Sample and condense a trigger repository");
  cmd_forge->add_option("--graph", forge.graph, "input graph")->required();
  cmd_forge->add_option("--target-label", forge.target_label, "attack target class")->capture_default_str();
  cmd_forge->add_option("--samples", forge.samples, "BFS candidate cap")->capture_default_str();
  cmd_forge->add_option("--trigger-size", forge.trigger_size, "nodes per trigger (n)")->capture_default_str();
  cmd_forge->add_option("--k", forge.k, "repository size (K)")->capture_default_str();
  cmd_forge->add_option("--seed", forge.seed, "RNG seed")->capture_default_str();
  cmd_forge->add_option("--out", forge.out, "output repository path")->required();
  cmd_forge->callback([&] {
    Graph g = ensure_split(load_graph_any(forge.graph), mix_seed(forge.seed, 1));
    TrainHyper hp;
    hp.seed = mix_seed(forge.seed, 2);
    ModelBundle surrogate = train_clean_encoder(g, hp);
    std::vector<Subgraph> candidates =
        sample_candidates(g, forge.target_label, forge.trigger_size, forge.samples);
    Mat emb = encode_graph(surrogate.encoder, g);
    TriggerRepository repo = condense(candidates, emb, surrogate.encoder, forge.k,
                                      forge.target_label, mix_seed(forge.seed, 5));
    repo.seed = forge.seed;  // downstream stages derive their streams from it
    save_repository(repo, &surrogate, forge.out);
    std::printf("wrote %s: %d triggers of %d nodes from %d candidates\n",
                forge.out.c_str(), repo.count(), repo.trigger_size,
                static_cast<int>(candidates.size()));
  });

  // optimize
  struct {
    std::string graph, repo, encoder, tau = "pctl:10", out;
    double lambda = 1.0;
    int budget = 40, inner = 5, epochs = 200;
  } opt;
  auto* cmd_opt = app.add_subcommand("optimize", "Bi-level trigger optimization against a frozen encoder");
  cmd_opt->add_option("--graph", opt.graph, "input graph")->required();
  cmd_opt->add_option("--repo", opt.repo, "input repository")->required();
  cmd_opt->add_option("--encoder", opt.encoder, "frozen upstream model")->required();
  cmd_opt->add_option("--lambda", opt.lambda, "stealth weight")->capture_default_str();
  cmd_opt->add_option("--tau-sim", opt.tau, "similarity floor, F or pctl:N")->capture_default_str();
  cmd_opt->add_option("--budget", opt.budget, "poison budget")->capture_default_str();
  cmd_opt->add_option("--inner", opt.inner, "inner steps per epoch")->capture_default_str();
  cmd_opt->add_option("--epochs", opt.epochs, "max outer epochs")->capture_default_str();
  cmd_opt->add_option("--out", opt.out, "output repository path")->required();
  cmd_opt->callback([&] {
    RepositoryFile rf = load_repo_with_surrogate(opt.repo);
    Graph g = ensure_split(load_graph_any(opt.graph), mix_seed(rf.repo.seed, 1));
    ModelBundle upstream = load_model(opt.encoder);
    Mat emb = encode_graph(rf.surrogate->encoder, g);
    PoisonPlan plan =
        select_poisoned_nodes(g, emb, opt.budget, mix_seed(rf.repo.seed, 6));
    AttackHyper hp;
    hp.lambda = opt.lambda;
    apply_tau(hp, opt.tau);
    hp.inner_steps = opt.inner;
    hp.max_epochs = opt.epochs;
    hp.seed = mix_seed(rf.repo.seed, 7);
    AttackResult res =
        run_cpgba(g, upstream.encoder, *rf.surrogate, rf.repo, plan, hp);
    save_repository(res.repo, &*rf.surrogate, opt.out);
    const auto& log = res.repo.log;
    std::printf("wrote %s after %d epochs", opt.out.c_str(), res.epochs_run);
    if (!log.empty())
      std::printf(" (L_p=%.4f L_Trans=%.4f L_Ste=%.4f L_t=%.4f)", log.back().l_p,
                  log.back().l_trans, log.back().l_ste, log.back().l_total);
    std::printf("\n");
  });

  // poison
  struct {
    std::string graph, repo, out;
    int budget = 40;
  } poi;
  auto* cmd_poi = app.add_subcommand("poison", "Attach triggers to selected nodes and relabel them");
  cmd_poi->add_option("--graph", poi.graph, "input graph")->required();
  cmd_poi->add_option("--repo", poi.repo, "trigger repository")->required();
  cmd_poi->add_option("--budget", poi.budget, "poison budget")->capture_default_str();
  cmd_poi->add_option("--out", poi.out, "output graph path")->required();
  cmd_poi->callback([&] {
    RepositoryFile rf = load_repo_with_surrogate(poi.repo);
    Graph g = ensure_split(load_graph_any(poi.graph), mix_seed(rf.repo.seed, 1));
    Mat emb = encode_graph(rf.surrogate->encoder, g);
    PoisonPlan plan =
        select_poisoned_nodes(g, emb, poi.budget, mix_seed(rf.repo.seed, 6));
    Graph poisoned = poison_graph(g, rf.repo, *rf.surrogate, plan);
    write_graph_with_roles(poisoned, poi.out);
    std::printf("wrote %s: %d -> %d nodes, %d poisoned\n", poi.out.c_str(),
                g.num_nodes, poisoned.num_nodes,
                static_cast<int>(plan.nodes.size()));
  });

  // train
  struct {
    std::string graph, paradigm = "gsl", arch = "gcn", defense = "none", encoder, out;
    Seed seed = 7;
  } tr;
  auto* cmd_tr = app.add_subcommand("train", "Train a downstream model, optionally behind a defense");
  cmd_tr->add_option("--graph", tr.graph, "input graph")->required();
  cmd_tr->add_option("--paradigm", tr.paradigm, "gsl|gcl|gpl")->capture_default_str();
  cmd_tr->add_option("--arch", tr.arch, "gcn|sage")->capture_default_str();
  cmd_tr->add_option("--defense", tr.defense, "none|prune|od|rigbd")->capture_default_str();
  cmd_tr->add_option("--seed", tr.seed, "RNG seed")->capture_default_str();
  cmd_tr->add_option("--encoder", tr.encoder,
                     "frozen encoder for gpl (default: pretrain one on the input graph)");
  cmd_tr->add_option("--out", tr.out, "output model path")->required();
  cmd_tr->callback([&] {
    Graph g = ensure_split(load_graph_any(tr.graph), mix_seed(tr.seed, 1));
    Graph defended =
        apply_defense(g, parse_defense_tag(tr.defense), mix_seed(tr.seed, 8), nullptr);
    TrainHyper hp;
    hp.seed = tr.seed;
    EncoderParams frozen2;
    if (tr.paradigm == "gpl") {
      if (!tr.encoder.empty()) {
        frozen2 = load_model(tr.encoder).encoder;
      } else {
        TrainHyper hf;
        hf.seed = mix_seed(tr.seed, 4);
        frozen2 = train_gcl(defended, parse_arch_tag(tr.arch), 2, hf);
      }
    }
    ModelBundle m =
        train_downstream(defended, tr.paradigm, parse_arch_tag(tr.arch), frozen2, hp);
    save_model(m, tr.out);
    std::printf("wrote %s: %s/%s, defense %s\n", tr.out.c_str(), tr.paradigm.c_str(),
                tr.arch.c_str(), tr.defense.c_str());
  });

  // evaluate
  struct {
    std::string model, repo, graph, out;
  } ev;
  auto* cmd_ev = app.add_subcommand("evaluate", "Measure attack success and clean accuracy");
  cmd_ev->add_option("--model", ev.model, "victim model")->required();
  cmd_ev->add_option("--repo", ev.repo, "trigger repository")->required();
  cmd_ev->add_option("--graph", ev.graph, "evaluation graph")->required();
  cmd_ev->add_option("--out", ev.out, "output CSV path")->required();
  cmd_ev->callback([&] {
    RepositoryFile rf = load_repo_with_surrogate(ev.repo);
    Graph g = ensure_split(load_graph_any(ev.graph), mix_seed(rf.repo.seed, 1));
    ModelBundle victim = load_model(ev.model);
    EvalOutcome outcome = evaluate_model(victim, rf.repo, *rf.surrogate, g);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "metric,value\nasr,%.6f\nacc,%.6f\n",
                  outcome.asr, outcome.acc);
    std::ofstream f(ev.out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + ev.out);
    f << buf;
    std::printf("ASR %.4f  ACC %.4f  -> %s\n", outcome.asr, outcome.acc,
                ev.out.c_str());
  });

  // bench
  struct {
    std::string repo, graph, batches = "1000,10000,100000";
  } be;
  auto* cmd_be = app.add_subcommand("bench", "Time batched trigger selection + attachment");
  cmd_be->add_option("--repo", be.repo, "trigger repository")->required();
  cmd_be->add_option("--graph", be.graph, "host graph")->required();
  cmd_be->add_option("--batches", be.batches, "comma-separated batch sizes")->capture_default_str();
  cmd_be->callback([&] {
    RepositoryFile rf = load_repo_with_surrogate(be.repo);
    rebuild_cache(rf.repo, rf.surrogate->encoder);
    Graph g = load_graph_any(be.graph);
    std::vector<AttachTiming> rows =
        benchmark_attach(rf.repo, g, parse_int_list(be.batches), 42, 5);
    std::printf("batch,seconds\n");
    for (const auto& r : rows) std::printf("%d,%.6f\n", r.batch, r.seconds);
  });

  // run
  struct {
    std::string config, out;
    bool dry_run = false;
  } run;
  auto* cmd_run = app.add_subcommand("run", "Full pipeline from a config file");
  cmd_run->add_option("--config", run.config, "experiment config JSON")->required();
  cmd_run->add_option("--out", run.out, "output directory")->required();
  cmd_run->add_flag("--dry-run", run.dry_run, "validate the config and exit");
  cmd_run->callback([&] {
    ExperimentConfig cfg = load_config(run.config);
    if (!cfg.graph_path.empty() && !std::filesystem::exists(cfg.graph_path))
      throw std::runtime_error("config: graph not found: " + cfg.graph_path);
    if (run.dry_run) {
      std::printf("config OK: %d paradigm(s) x %d defense(s)\n",
                  static_cast<int>(cfg.paradigms.size()),
                  static_cast<int>(cfg.defenses.size()));
      return;
    }
    ExperimentResult res = run_experiment(cfg);
    emit_report(res, run.out);
    std::printf("paradigm,defense,asr,acc,ca,ad\n");
    for (const auto& c : res.cells)
      std::printf("%s,%s,%.4f,%.4f,%.4f,%.4f\n", c.paradigm.c_str(),
                  defense_tag(c.defense), c.asr, c.acc, c.ca, c.ad);
    std::printf("report written to %s\n", run.out.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
