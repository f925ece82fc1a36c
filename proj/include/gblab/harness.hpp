#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gblab/attack.hpp"
#include "gblab/defense.hpp"
#include "gblab/graph.hpp"
#include "gblab/model_io.hpp"
#include "gblab/paradigms.hpp"
#include "gblab/trigger.hpp"
#include "gblab/types.hpp"

namespace gblab {

// One experiment end to end; mirrors the run-config JSON, every field
// overridable there.
struct ExperimentConfig {
  std::string graph_path;  // empty -> generate from `sbm`
  SbmParams sbm;
  Seed seed = 7;
  int target_label = 0;
  int samples = 200;       // BFS candidate cap
  int trigger_size = 5;    // n
  int k = 20;              // repository size K
  int budget = 40;         // poison budget
  int upstream_layers = 3;
  Arch arch = Arch::GCN;
  std::vector<std::string> paradigms{"gsl"};
  std::vector<DefenseKind> defenses{DefenseKind::None};
  AttackHyper attack;
  TrainHyper train;  // shared across paradigms; stage-specific fields inside
};

// Throws with a field name on the first invalid value.
void validate_config(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

// Attaches each plan node's selected trigger (selection against the
// surrogate's embedding of g; caches are rebuilt first), relabels it to the
// repository's target label and promotes it to train-labeled. Fills
// plan.trigger_ids. An empty plan returns the graph unchanged.
Graph poison_graph(const Graph& g, TriggerRepository& repo,
                   const ModelBundle& surrogate, PoisonPlan& plan);

// Paradigm dispatch on an already-defended graph. `frozen2` is the
// clean-pretrained 2-layer encoder used by gpl victims (subgraph prompts).
ModelBundle train_downstream(const Graph& g, const std::string& paradigm,
                             Arch arch, const EncoderParams& frozen2,
                             const TrainHyper& hp);

// ASR: test-target nodes with triggers (selected against the surrogate)
// attached, scored as the fraction predicted y_t. ACC: accuracy on untouched
// test-clean nodes.
struct EvalOutcome {
  double asr = 0.0;
  double acc = 0.0;
};
EvalOutcome evaluate_model(const ModelBundle& victim, TriggerRepository& repo,
                           const ModelBundle& surrogate, const Graph& g);

struct CellMetrics {
  std::string paradigm;
  DefenseKind defense = DefenseKind::None;
  double asr = 0.0, acc = 0.0, ca = 0.0, ad = 0.0;  // ad = ca - acc
};

struct PhaseTiming {
  std::string phase;
  double seconds = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  Graph clean;     // split graph before poisoning
  Graph poisoned;  // evaluation graph
  ModelBundle surrogate;
  ModelBundle upstream;          // attack-side frozen encoder (+ probe head)
  EncoderParams frozen2;         // gpl victims' clean 2-layer encoder
  TriggerRepository repo;        // optimized
  PoisonPlan plan;
  int attack_epochs = 0;
  int repo_rank = 0;
  std::vector<CellMetrics> cells;
  // keyed "<defense>_poisoned" / "<defense>_clean"
  std::vector<std::pair<std::string, DefenseReport>> defense_reports;
  std::vector<PhaseTiming> timings;
};

// split (unless the graph already carries roles) -> clean surrogate +
// frozen encoders -> sample/condense -> bi-level optimization -> poison ->
// per (defense x paradigm) victim and seed-paired clean model -> metrics.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Writes config echo, repository, models, plan, defense CSVs, metrics CSV +
// markdown, PCA projection and timings under `dir`. Every CSV is
// byte-deterministic for a fixed config; timings live in their own file.
void emit_report(const ExperimentResult& result, const std::string& dir);

// Wall-clock seconds (median of `reps`) to batch-select triggers for `batch`
// synthetic embeddings and assemble the attachment structure (edge arrays
// plus feature row references; no feature copies). Requires valid caches.
struct AttachTiming {
  int batch = 0;
  double seconds = 0.0;
};
std::vector<AttachTiming> benchmark_attach(const TriggerRepository& repo,
                                           const Graph& g,
                                           const std::vector<int>& batches,
                                           Seed seed, int reps = 5);

// Least-squares R^2 of y against x (1.0 when y is constant).
double linear_r2(const std::vector<double>& x, const std::vector<double>& y);

// Top-2 principal components by power iteration on the centered data;
// deterministic, sign-canonicalized. Returns N x 2 scores.
Mat export_pca(const Mat& embeddings);
void write_pca_csv(const Mat& coords, const std::vector<int>& labels,
                   const std::vector<char>& poisoned, const std::string& path);

}  // namespace gblab
