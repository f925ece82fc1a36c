#include "gblab/trigger.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <stdexcept>

#include "gblab/kmeans.hpp"
#include "gblab/train_util.hpp"

namespace gblab {

Mat TriggerRepository::cache_index() const {
  if (triggers.empty()) return Mat();
  Mat idx(count(), triggers[0].cache.size());
  for (int k = 0; k < count(); ++k) idx.row(k) = triggers[k].cache.transpose();
  return idx;
}

ModelBundle train_clean_encoder(const Graph& g, const TrainHyper& hp) {
  return train_gsl(g, Arch::GCN, hp);
}

std::vector<Subgraph> sample_candidates(const Graph& g, int target_label, int size,
                                        int max_samples) {
  if (max_samples < 1) throw std::runtime_error("sample_candidates: max_samples must be >= 1");
  std::vector<Subgraph> out;
  for (int v = 0; v < g.num_nodes && static_cast<int>(out.size()) < max_samples; ++v) {
    if (g.roles[v] != Role::TrainLabeled || g.labels[v] != target_label) continue;
    Subgraph sub = bfs_subgraph(g, v, size);
    if (sub.short_sample) continue;
    out.push_back(std::move(sub));
  }
  if (out.empty())
    throw std::runtime_error("sample_candidates: no full-size candidates for the target class");
  return out;
}

TriggerRepository condense(const std::vector<Subgraph>& candidates,
                           const Mat& parent_embeddings, const EncoderParams& enc,
                           int k, int target_label, Seed seed) {
  if (candidates.empty()) throw std::runtime_error("condense: no candidates");
  if (k < 1) throw std::runtime_error("condense: k must be >= 1");
  if (k > static_cast<int>(candidates.size()))
    throw std::runtime_error("condense: more triggers than candidates");
  const int size = candidates[0].size();
  for (const auto& c : candidates)
    if (c.size() != size) throw std::runtime_error("condense: candidate sizes differ");

  Mat cand_emb(candidates.size(), parent_embeddings.cols());
  for (size_t i = 0; i < candidates.size(); ++i) {
    Mat mean = Mat::Zero(1, parent_embeddings.cols());
    for (int v : candidates[i].parent_ids) mean.row(0) += parent_embeddings.row(v);
    cand_emb.row(i) = mean.row(0) / static_cast<double>(size);
  }

  KMeansResult clusters = kmeans(cand_emb, k, seed);
  std::vector<int> reps = nearest_points(cand_emb, clusters);

  TriggerRepository repo;
  repo.target_label = target_label;
  repo.trigger_size = size;
  repo.seed = seed;
  for (int c = 0; c < k; ++c) {
    const Subgraph& src = candidates[reps[c]];
    SubgraphTrigger t;
    t.id = c;
    t.edges = src.edges;
    t.features = src.features;
    t.provenance_center = src.parent_ids[0];
    repo.triggers.push_back(std::move(t));
  }
  rebuild_cache(repo, enc);
  return repo;
}

Subgraph trigger_subgraph(const SubgraphTrigger& t) {
  Subgraph sub;
  sub.parent_ids.assign(t.size(), -1);
  sub.edges = t.edges;
  sub.features = t.features;
  return sub;
}

Graph trigger_graph(const SubgraphTrigger& t) {
  return make_graph(t.size(), t.features, std::vector<int>(t.size(), -1), 1, t.edges);
}

void rebuild_cache(TriggerRepository& repo, const EncoderParams& enc) {
  for (SubgraphTrigger& t : repo.triggers) {
    Mat emb = encode_graph(enc, trigger_graph(t));
    Vec mean = Vec::Zero(emb.cols());
    for (Eigen::Index i = 0; i < emb.rows(); ++i) {
      double norm = emb.row(i).norm();
      if (norm > 0.0) mean += emb.row(i).transpose() / norm;
    }
    t.cache = mean / static_cast<double>(t.size());
  }
}

double score_trigger(const SubgraphTrigger& t, const Vec& h) {
  double norm = h.norm();
  if (norm == 0.0) return 0.0;
  return t.cache.dot(h) / norm;
}

int select_trigger(const TriggerRepository& repo, const Vec& h) {
  if (repo.triggers.empty()) throw std::runtime_error("select_trigger: empty repository");
  int best = 0;
  double best_score = score_trigger(repo.triggers[0], h);
  for (int k = 1; k < repo.count(); ++k) {
    double s = score_trigger(repo.triggers[k], h);
    if (s > best_score) {
      best_score = s;
      best = k;
    }
  }
  return best;
}

std::vector<int> batch_select(const TriggerRepository& repo, const Mat& h) {
  if (repo.triggers.empty()) throw std::runtime_error("batch_select: empty repository");
  Mat hn(h.rows(), h.cols());
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    double norm = h.row(i).norm();
    hn.row(i) = norm > 0.0 ? (h.row(i) / norm).eval() : Mat::Zero(1, h.cols());
  }
  Mat scores = hn * repo.cache_index().transpose();
  std::vector<int> out(h.rows());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < repo.count(); ++k)
      if (scores(i, k) > scores(i, best)) best = k;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

PoisonPlan select_poisoned_nodes(const Graph& g, const Mat& embeddings, int budget,
                                 Seed seed) {
  if (budget < 1) throw std::runtime_error("select_poisoned_nodes: budget must be >= 1");
  std::vector<int> pool = g.nodes_with_role(Role::TrainUnlabeled);
  if (pool.empty()) throw std::runtime_error("select_poisoned_nodes: no train-unlabeled nodes");

  PoisonPlan plan;
  plan.budget = budget;
  if (static_cast<int>(pool.size()) <= budget) {
    plan.nodes = pool;
  } else {
    Mat points(pool.size(), embeddings.cols());
    for (size_t i = 0; i < pool.size(); ++i) points.row(i) = embeddings.row(pool[i]);
    KMeansResult clusters = kmeans(points, budget, seed);
    std::vector<int> reps = nearest_points(points, clusters);
    for (int r : reps) plan.nodes.push_back(pool[r]);
    std::sort(plan.nodes.begin(), plan.nodes.end());
    plan.nodes.erase(std::unique(plan.nodes.begin(), plan.nodes.end()), plan.nodes.end());
  }
  plan.trigger_ids.assign(plan.nodes.size(), -1);
  return plan;
}

int rank_diagnostic(const TriggerRepository& repo) {
  Mat idx = repo.cache_index();
  if (idx.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(idx);
  Vec sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-8 * sv(0)) ++rank;
  return rank;
}

}  // namespace gblab
