#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gblab/gnn.hpp"
#include "gblab/graph.hpp"
#include "gblab/types.hpp"

namespace gblab {

// Prompt attached at inference/fine-tuning time while the encoder stays
// frozen. Token: one d-vector added to every node feature. Subgraph: k extra
// nodes with their own features and internal edges; every prompt node links
// to the node being scored.
struct PromptSpec {
  enum class Kind { Token, Subgraph };
  Kind kind = Kind::Token;
  Mat token;                                       // 1 x d
  Mat features;                                    // k x d
  std::vector<std::pair<int, int>> internal_edges; // among prompt nodes
  int size() const { return static_cast<int>(features.rows()); }
};

PromptSpec make_token_prompt(int dim);
// Mean feature vector plus small Gaussian noise per node, fully connected.
PromptSpec make_subgraph_prompt(const Graph& g, int k, Seed seed);

// Returns g with `p` added to every node's features.
Graph apply_prompt_token(const Graph& g, const Mat& p);
// Returns g with the prompt nodes appended and every prompt node linked to
// `target`.
Graph apply_prompt_subgraph(const Graph& g, const PromptSpec& prompt, int target);

// A trained model under one of the three paradigms, self-contained enough to
// score nodes on any graph with matching feature width.
struct ModelBundle {
  std::string paradigm;  // "gsl" | "gcl" | "gpl"
  EncoderParams encoder;
  HeadParams head;
  std::optional<PromptSpec> prompt;
  Seed seed = 0;
};

struct TrainHyper {
  int epochs = 200;
  double lr = 1e-2;
  int hidden = 64;
  Seed seed = 0;
  // contrastive stage
  int contrastive_epochs = 300;
  double edge_drop = 0.3;   // p_e
  double feat_mask = 0.2;   // p_f
  double tau_c = 0.5;
  // prompt stage
  int prompt_nodes = 3;
};

// Supervised paradigm: 2-layer encoder plus linear softmax head trained
// jointly by cross-entropy on train-labeled nodes.
ModelBundle train_gsl(const Graph& g, Arch arch, const TrainHyper& hp);

// One stochastic augmentation: every edge dropped independently with
// probability p_e, every feature column zeroed with probability p_f.
Graph augment_view(const Graph& g, double p_e, double p_f, Seed seed);

// Symmetrized InfoNCE between two embedding matrices (rows are normalized
// internally); the i-th rows form the positive pair.
double info_nce(const Mat& h1, const Mat& h2, double tau);

// Contrastive stage: trains an encoder of `layers` layers by InfoNCE between
// two augmented views; the result comes back frozen.
EncoderParams train_gcl(const Graph& g, Arch arch, int layers, const TrainHyper& hp);

// Probe stage: two-layer MLP on the frozen encoder's post-activation
// embeddings, trained on train-labeled nodes. Never touches encoder bytes.
HeadParams train_probe(const EncoderParams& enc, const Graph& g, const TrainHyper& hp);

// Prompt paradigm: optimizes prompt parameters and a two-layer MLP head by
// cross-entropy on train-labeled nodes with the encoder frozen (rejected if
// not). Token prompts start at zero; subgraph prompts via
// make_subgraph_prompt with hp.prompt_nodes nodes.
ModelBundle train_gpl(const Graph& g, const EncoderParams& enc,
                      PromptSpec::Kind kind, const TrainHyper& hp);

// Logits for `score_nodes` (row i of the result corresponds to
// score_nodes[i]). GCL probes see relu of the encoder output; GPL attaches
// one prompt copy per scored node.
Mat model_logits(const ModelBundle& model, const Graph& g,
                 const std::vector<int>& score_nodes);

}  // namespace gblab
