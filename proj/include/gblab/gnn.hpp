#pragma once

#include <vector>

#include "gblab/graph.hpp"
#include "gblab/tape.hpp"
#include "gblab/types.hpp"

namespace gblab {

enum class Arch { GCN, SAGE };

const char* arch_tag(Arch a);
Arch parse_arch_tag(const std::string& tag);

// Stacked message-passing encoder. GCN layer: relu(S * H * W + b) with
// S = D^{-1/2} (A + I) D^{-1/2}; SAGE layer: relu([H | mean_nb(H)] * W + b).
// The last layer has no activation. Downstream encoders use 2 layers, the
// frozen upstream encoder 3.
struct EncoderParams {
  Arch arch = Arch::GCN;
  std::vector<Mat> weights;
  std::vector<Mat> biases;  // 1 x out each
  bool frozen = false;

  int layers() const { return static_cast<int>(weights.size()); }
  int out_dim() const { return static_cast<int>(weights.back().cols()); }
};

// Classification head: a single linear layer or a two-layer MLP with relu.
struct HeadParams {
  std::vector<Mat> weights;
  std::vector<Mat> biases;

  int layers() const { return static_cast<int>(weights.size()); }
  int num_classes() const { return static_cast<int>(weights.back().cols()); }
};

// Glorot-uniform initialization, biases zero, deterministic under seed.
// `dims` runs input -> hidden... -> output.
EncoderParams make_encoder(Arch arch, const std::vector<int>& dims, Seed seed);
HeadParams make_head(const std::vector<int>& dims, Seed seed);

// Symmetric normalization with self-loops, returned dense.
Mat normalize_adjacency(const Graph& g);
// Same matrix in sparse form, plus the row-normalized neighbor mean used by
// SAGE (zero row for isolated nodes). Trainers build these once per graph.
struct PropMats {
  SpMat sym;
  SpMat mean;
};
PropMats build_prop(const Graph& g);

// Plain (no-gradient) forward passes. The precomputed-first variant takes
// the first layer's product X * W0, which callers can cache across graphs
// that share features but not structure.
Mat encode(const EncoderParams& enc, const PropMats& prop, const Mat& x);
Mat encode_precomputed_first(const EncoderParams& enc, const PropMats& prop,
                             const Mat& xw0);
Mat encode_graph(const EncoderParams& enc, const Graph& g);
Mat classify(const HeadParams& head, const Mat& h);

// Tape forward passes. encoder_vars() registers weights as parameters unless
// `trainable` is false (or the encoder is frozen), in which case they become
// constants and stay byte-identical through training.
struct EncoderVars {
  std::vector<ad::Var> weights, biases;
};
struct HeadVars {
  std::vector<ad::Var> weights, biases;
};
EncoderVars encoder_vars(ad::Tape& t, const EncoderParams& enc, bool trainable);
HeadVars head_vars(ad::Tape& t, const HeadParams& head, bool trainable);
ad::Var encode(ad::Tape& t, Arch arch, const PropMats& prop, ad::Var x,
               const EncoderVars& vars);
// GCN-only fast path for frozen first layers: the caller supplies the first
// layer's product H0 * W0 already assembled (e.g. from a cached X*W0 block
// plus cheap per-epoch corrections); propagation, bias, activation and the
// remaining layers are applied here.
ad::Var encode_precomputed_first(ad::Tape& t, const EncoderParams& enc,
                                 const PropMats& prop, ad::Var xw0,
                                 const EncoderVars& vars);
ad::Var classify(ad::Tape& t, ad::Var h, const HeadVars& vars);

// Argmax per row, ties to the lowest class id.
std::vector<int> predict(const Mat& logits);
// Fraction of `rows` whose prediction matches `labels`; rows with label -1
// are skipped.
double accuracy(const Mat& logits, const std::vector<int>& labels,
                const std::vector<int>& rows);

// Sum of the given rows of h -> 1 x dim.
Mat sum_pool(const Mat& h, const std::vector<int>& nodes);

}  // namespace gblab
