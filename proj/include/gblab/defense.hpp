#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gblab/graph.hpp"
#include "gblab/types.hpp"

namespace gblab {

// Training-time sanitizers applied to the (possibly poisoned) training graph
// before the victim trains. Each returns the defended graph; the optional
// report collects one score and flag per input node for the CSV artifact.
enum class DefenseKind { None, Prune, OutlierFilter, RobustScreen };

const char* defense_tag(DefenseKind k);
DefenseKind parse_defense_tag(const std::string& tag);

struct DefenseReport {
  std::vector<double> score;  // higher = more suspicious
  std::vector<char> flagged;  // acted upon (edge pruned at node / node removed)
};

// CSV "node_id,score,flagged" with one row per input node.
void write_defense_report(const DefenseReport& report, const std::string& path);

// Removes every edge whose endpoint feature cosine falls below the threshold
// (NaN -> 5th percentile of the graph's own edge cosines). Node score is the
// worst incident edge cosine, negated so higher means more suspicious.
struct PruneConfig {
  double threshold = std::nan("");
};
Graph prune_edges(const Graph& g, const PruneConfig& cfg,
                  DefenseReport* report = nullptr);

// Graph-autoencoder outlier filter: a 2-layer GCN embeds the graph, a linear
// decoder reconstructs features and edge scores reconstruct structure
// (sigmoid of embedding dot products, trained on edges plus an equal number
// of sampled non-edges). Node score mixes feature and adjacency-row
// reconstruction error; the top ceil(remove_frac * N) nodes are removed.
struct OdConfig {
  int epochs = 100;
  double lr = 1e-2;
  int hidden = 32;
  int embed = 32;
  double alpha = 0.5;  // feature vs adjacency error weight
  double remove_frac = 0.05;
  Seed seed = 0;
};
Graph od_filter(const Graph& g, const OdConfig& cfg,
                DefenseReport* report = nullptr);

// Random-edge-drop stability screen: trains a quick supervised model, then
// re-predicts under `rounds` independent global edge drops. Nodes whose
// prediction flips in at least `kappa` of the rounds feed a source->destination
// flip tally; the dominant flip source s* is treated as the suspected target
// label, and every high-flip node predicted and train-labeled s* is removed
// together with its degree-1 neighbors. Node score is the flip rate.
struct RigbdConfig {
  int rounds = 50;
  double p_drop = 0.5;
  double kappa = 0.6;
  int epochs = 100;
  int hidden = 32;
  double lr = 1e-2;
  Seed seed = 0;
};
Graph rigbd_screen(const Graph& g, const RigbdConfig& cfg,
                   DefenseReport* report = nullptr);

// Default-configured dispatch; None copies the graph and reports zeros.
Graph apply_defense(const Graph& g, DefenseKind kind, Seed seed,
                    DefenseReport* report = nullptr);

}  // namespace gblab
