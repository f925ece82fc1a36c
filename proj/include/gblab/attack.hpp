#pragma once

#include <cmath>
#include <vector>

#include "gblab/gnn.hpp"
#include "gblab/graph.hpp"
#include "gblab/paradigms.hpp"
#include "gblab/trigger.hpp"
#include "gblab/types.hpp"

namespace gblab {

struct AttackHyper {
  int inner_steps = 5;  // classifier/prompt updates per trigger update
  double lr_inner = 1e-2;
  double lr_outer = 1e-2;
  int max_epochs = 200;
  double conv_tol = 1e-3;  // relative total-loss change
  int conv_patience = 5;   // consecutive quiet epochs before stopping
  double lambda = 1.0;     // stealth weight
  // NaN -> the tau_pct percentile of the clean graph's edge feature cosines.
  double tau_sim = std::nan("");
  double tau_pct = 10.0;
  PromptSpec::Kind prompt_kind = PromptSpec::Kind::Token;
  bool prompt_after_attach = false;  // default: prompt first, then attach
  int head_hidden = 64;
  int prompt_nodes = 3;
  Seed seed = 0;
};

// One trigger attachment per entry: nodes[i] receives trigger_ids[i].
struct AttachSelection {
  std::vector<int> nodes;
  std::vector<int> trigger_ids;
};

// Tape handles for the trigger features: one Var per trigger plus their
// row-stacked concatenation (trigger k occupies rows [k*n, (k+1)*n)).
struct TriggerVars {
  std::vector<ad::Var> features;
  ad::Var stacked;
};
TriggerVars make_trigger_vars(ad::Tape& t, const TriggerRepository& repo, bool trainable);

// Logits of `score_nodes` in the attacked graph: the prompt is applied, one
// private copy of the selected trigger is attached per selection entry, and
// the frozen encoder runs over the result. Base node ids keep their rows.
// `xw0_base` optionally caches g.features * enc.weights[0] for the GCN path.
ad::Var attacked_logits(ad::Tape& t, const Graph& g, const EncoderParams& enc,
                        const TriggerRepository& repo, const TriggerVars& tv,
                        const AttachSelection& sel, ad::Var prompt_var,
                        const PromptSpec& prompt, bool prompt_after_attach,
                        const std::vector<int>& score_nodes, const HeadVars& head,
                        const Mat* xw0_base);

// Inner objective: clean cross-entropy on train-labeled nodes plus poisoned
// cross-entropy toward the target label on the plan's nodes, both inside the
// prompted graph with the plan's triggers attached.
ad::Var poison_loss(ad::Tape& t, const Graph& g, const EncoderParams& enc,
                    const TriggerRepository& repo, const TriggerVars& tv,
                    const AttachSelection& sel_p, ad::Var prompt_var,
                    const PromptSpec& prompt, bool prompt_after_attach,
                    const HeadVars& head, const Mat* xw0_base);

// Outer objectives. Transfer: cross-entropy toward the target label over all
// of sel_u's nodes with their selected triggers attached. Stealth: hinge
// max(0, tau_sim - cos) summed over every attachment edge (link edge plus the
// trigger's internal edges) of the plan's nodes, on raw features.
ad::Var transfer_loss(ad::Tape& t, const Graph& g, const EncoderParams& enc,
                      const TriggerRepository& repo, const TriggerVars& tv,
                      const AttachSelection& sel_u, ad::Var prompt_var,
                      const PromptSpec& prompt, bool prompt_after_attach,
                      const HeadVars& head, const Mat* xw0_base);
ad::Var stealth_loss(ad::Tape& t, const Graph& g, const TriggerRepository& repo,
                     const TriggerVars& tv, const AttachSelection& sel_p,
                     double tau_sim);

struct AttackLossValues {
  double l_p = 0.0, l_trans = 0.0, l_ste = 0.0, l_total = 0.0;
};
// Values of all objectives for the given state (no gradients). The plan's
// nodes must appear in sel_u; their selections feed the poison and stealth
// terms. l_total = l_trans + repo.lambda * l_ste.
AttackLossValues attack_loss_values(const Graph& g, const EncoderParams& enc,
                                    const TriggerRepository& repo,
                                    const PoisonPlan& plan,
                                    const AttachSelection& sel_u,
                                    const PromptSpec& prompt, const HeadParams& head,
                                    double tau_sim, bool prompt_after_attach = false);

struct AttackResult {
  TriggerRepository repo;
  PromptSpec prompt;
  HeadParams head;
  int epochs_run = 0;
};

// Bi-level trigger optimization. Per epoch: trigger selection is resolved
// once against the surrogate encoder and held fixed; `inner_steps` Adam
// updates train the classifier head and prompt on the inner objective; one
// Adam update trains all trigger features on transfer + lambda * stealth.
// Stops when the relative change of the total loss stays below conv_tol for
// conv_patience consecutive epochs, or at max_epochs. max_epochs == 0 returns
// the repository untouched.
AttackResult run_cpgba(const Graph& g, const EncoderParams& upstream,
                       const ModelBundle& surrogate, const TriggerRepository& repo,
                       const PoisonPlan& plan, const AttackHyper& hp);

}  // namespace gblab
