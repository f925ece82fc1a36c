#pragma once

#include <vector>

#include "gblab/gnn.hpp"
#include "gblab/graph.hpp"
#include "gblab/paradigms.hpp"
#include "gblab/types.hpp"

namespace gblab {

// One reusable trigger: a small subgraph with trainable features, plus the
// cached scoring row (mean of the L2-normalized node embeddings of the
// trigger embedded standalone).
struct SubgraphTrigger {
  int id = -1;
  std::vector<std::pair<int, int>> edges;  // internal, local ids, u < v
  Mat features;                            // size x dim
  Vec cache;                               // embedding dim
  int provenance_center = -1;  // BFS center in the forging graph
  int size() const { return static_cast<int>(features.rows()); }
};

struct TriggerRepository {
  int target_label = 0;
  int trigger_size = 0;
  double lambda = 1.0;
  double tau_sim = 0.0;
  Seed seed = 0;
  std::vector<SubgraphTrigger> triggers;

  struct LogEntry {
    int epoch = 0;
    double l_p = 0.0, l_trans = 0.0, l_ste = 0.0, l_total = 0.0;
  };
  std::vector<LogEntry> log;

  int count() const { return static_cast<int>(triggers.size()); }
  Mat cache_index() const;  // count x embedding dim, row k = triggers[k].cache
};

// Which train-unlabeled nodes get poisoned; chosen trigger ids are filled at
// injection time (-1 before).
struct PoisonPlan {
  std::vector<int> nodes;  // ascending
  std::vector<int> trigger_ids;
  int budget = 0;
};

// Clean 2-layer GCN surrogate whose embeddings drive candidate condensation
// and trigger selection.
ModelBundle train_clean_encoder(const Graph& g, const TrainHyper& hp);

// BFS samples of `size` nodes around train-labeled nodes of the target class
// (ascending node id, each center at most once); samples that run short are
// skipped. Stops after max_samples.
std::vector<Subgraph> sample_candidates(const Graph& g, int target_label, int size,
                                        int max_samples);

// K-means over candidate embeddings (mean of each candidate's node rows in
// parent_embeddings); the candidate nearest each centroid becomes a trigger,
// features and adjacency verbatim. Caches are built with `enc`.
TriggerRepository condense(const std::vector<Subgraph>& candidates,
                           const Mat& parent_embeddings, const EncoderParams& enc,
                           int k, int target_label, Seed seed);

// Re-embeds every trigger standalone with `enc` and refreshes the cache rows.
void rebuild_cache(TriggerRepository& repo, const EncoderParams& enc);

// Similarity-query scoring: mean cosine between h and the trigger's node
// embeddings (zero vectors contribute 0).
double score_trigger(const SubgraphTrigger& t, const Vec& h);
// Highest-scoring trigger id, ties to the lowest id.
int select_trigger(const TriggerRepository& repo, const Vec& h);
// One matrix product against the cached index; row i selects for h.row(i).
std::vector<int> batch_select(const TriggerRepository& repo, const Mat& h);

// Poison-node choice: K-means with `budget` clusters over the train-unlabeled
// rows of `embeddings`, one representative per cluster. Never exceeds budget.
PoisonPlan select_poisoned_nodes(const Graph& g, const Mat& embeddings, int budget,
                                 Seed seed);

// Numeric rank of the cached trigger index (singular values above 1e-8
// relative to the largest). A collapsed repository shows up as low rank.
int rank_diagnostic(const TriggerRepository& repo);

// Views of a trigger for attaching / standalone embedding.
Subgraph trigger_subgraph(const SubgraphTrigger& t);
Graph trigger_graph(const SubgraphTrigger& t);

}  // namespace gblab
