#include "gblab/gnn.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace gblab {

namespace {

Mat glorot(int rows, int cols, std::mt19937_64& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> unif(-limit, limit);
  Mat w(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) w(i, j) = unif(rng);
  return w;
}

}  // namespace

const char* arch_tag(Arch a) { return a == Arch::GCN ? "gcn" : "sage"; }

Arch parse_arch_tag(const std::string& tag) {
  if (tag == "gcn") return Arch::GCN;
  if (tag == "sage") return Arch::SAGE;
  throw std::runtime_error("unknown architecture '" + tag + "'");
}

EncoderParams make_encoder(Arch arch, const std::vector<int>& dims, Seed seed) {
  if (dims.size() < 2) throw std::runtime_error("make_encoder: need at least one layer");
  std::mt19937_64 rng(seed);
  EncoderParams enc;
  enc.arch = arch;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    int in = arch == Arch::SAGE ? 2 * dims[l] : dims[l];
    enc.weights.push_back(glorot(in, dims[l + 1], rng));
    enc.biases.push_back(Mat::Zero(1, dims[l + 1]));
  }
  return enc;
}

HeadParams make_head(const std::vector<int>& dims, Seed seed) {
  if (dims.size() < 2) throw std::runtime_error("make_head: need at least one layer");
  std::mt19937_64 rng(seed);
  HeadParams head;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    head.weights.push_back(glorot(dims[l], dims[l + 1], rng));
    head.biases.push_back(Mat::Zero(1, dims[l + 1]));
  }
  return head;
}

Mat normalize_adjacency(const Graph& g) {
  Mat a = Mat::Zero(g.num_nodes, g.num_nodes);
  for (int v = 0; v < g.num_nodes; ++v) {
    a(v, v) = 1.0;
    for (int w : g.neighbors(v)) a(v, w) = 1.0;
  }
  Vec dinv(g.num_nodes);
  for (int v = 0; v < g.num_nodes; ++v)
    dinv(v) = 1.0 / std::sqrt(static_cast<double>(g.degree(v) + 1));
  return dinv.asDiagonal() * a * dinv.asDiagonal();
}

PropMats build_prop(const Graph& g) {
  Vec dinv(g.num_nodes);
  for (int v = 0; v < g.num_nodes; ++v)
    dinv(v) = 1.0 / std::sqrt(static_cast<double>(g.degree(v) + 1));

  std::vector<Eigen::Triplet<double>> sym, mean;
  sym.reserve(2 * g.num_edges + g.num_nodes);
  mean.reserve(2 * g.num_edges);
  for (int v = 0; v < g.num_nodes; ++v) {
    sym.emplace_back(v, v, dinv(v) * dinv(v));
    int d = g.degree(v);
    for (int w : g.neighbors(v)) {
      sym.emplace_back(v, w, dinv(v) * dinv(w));
      mean.emplace_back(v, w, 1.0 / static_cast<double>(d));
    }
  }
  PropMats prop;
  prop.sym.resize(g.num_nodes, g.num_nodes);
  prop.sym.setFromTriplets(sym.begin(), sym.end());
  prop.mean.resize(g.num_nodes, g.num_nodes);
  prop.mean.setFromTriplets(mean.begin(), mean.end());
  return prop;
}

Mat encode(const EncoderParams& enc, const PropMats& prop, const Mat& x) {
  Mat h = x;
  for (int l = 0; l < enc.layers(); ++l) {
    Mat z;
    if (enc.arch == Arch::GCN) {
      z = prop.sym * (h * enc.weights[l]);
    } else {
      Mat cat(h.rows(), 2 * h.cols());
      cat.leftCols(h.cols()) = h;
      cat.rightCols(h.cols()) = prop.mean * h;
      z = cat * enc.weights[l];
    }
    z.rowwise() += enc.biases[l].row(0);
    h = l + 1 < enc.layers() ? z.cwiseMax(0.0) : std::move(z);
  }
  return h;
}

Mat encode_precomputed_first(const EncoderParams& enc, const PropMats& prop,
                             const Mat& xw0) {
  if (enc.arch != Arch::GCN)
    throw std::runtime_error("encode_precomputed_first: GCN only");
  Mat h = prop.sym * xw0;
  h.rowwise() += enc.biases[0].row(0);
  if (enc.layers() > 1) h = h.cwiseMax(0.0);
  for (int l = 1; l < enc.layers(); ++l) {
    Mat z = prop.sym * (h * enc.weights[l]);
    z.rowwise() += enc.biases[l].row(0);
    h = l + 1 < enc.layers() ? z.cwiseMax(0.0) : std::move(z);
  }
  return h;
}

Mat encode_graph(const EncoderParams& enc, const Graph& g) {
  return encode(enc, build_prop(g), g.features);
}

Mat classify(const HeadParams& head, const Mat& h) {
  Mat z = h;
  for (int l = 0; l < head.layers(); ++l) {
    z = (z * head.weights[l]).rowwise() + head.biases[l].row(0);
    if (l + 1 < head.layers()) z = z.cwiseMax(0.0);
  }
  return z;
}

EncoderVars encoder_vars(ad::Tape& t, const EncoderParams& enc, bool trainable) {
  bool train = trainable && !enc.frozen;
  EncoderVars vars;
  for (int l = 0; l < enc.layers(); ++l) {
    vars.weights.push_back(train ? t.param(enc.weights[l]) : t.constant(enc.weights[l]));
    vars.biases.push_back(train ? t.param(enc.biases[l]) : t.constant(enc.biases[l]));
  }
  return vars;
}

HeadVars head_vars(ad::Tape& t, const HeadParams& head, bool trainable) {
  HeadVars vars;
  for (int l = 0; l < head.layers(); ++l) {
    vars.weights.push_back(trainable ? t.param(head.weights[l]) : t.constant(head.weights[l]));
    vars.biases.push_back(trainable ? t.param(head.biases[l]) : t.constant(head.biases[l]));
  }
  return vars;
}

ad::Var encode(ad::Tape&, Arch arch, const PropMats& prop, ad::Var x,
               const EncoderVars& vars) {
  ad::Var h = x;
  int layers = static_cast<int>(vars.weights.size());
  for (int l = 0; l < layers; ++l) {
    ad::Var z;
    if (arch == Arch::GCN) {
      z = ad::spmm(prop.sym, ad::matmul(h, vars.weights[l]));
    } else {
      z = ad::matmul(ad::concat_cols(h, ad::spmm(prop.mean, h)), vars.weights[l]);
    }
    z = ad::add_rowvec(z, vars.biases[l]);
    h = l + 1 < layers ? ad::relu(z) : z;
  }
  return h;
}

ad::Var encode_precomputed_first(ad::Tape&, const EncoderParams& enc,
                                 const PropMats& prop, ad::Var xw0,
                                 const EncoderVars& vars) {
  if (enc.arch != Arch::GCN)
    throw std::runtime_error("encode_precomputed_first: GCN only");
  int layers = static_cast<int>(vars.weights.size());
  ad::Var h = ad::add_rowvec(ad::spmm(prop.sym, xw0), vars.biases[0]);
  if (layers > 1) h = ad::relu(h);
  for (int l = 1; l < layers; ++l) {
    ad::Var z = ad::add_rowvec(ad::spmm(prop.sym, ad::matmul(h, vars.weights[l])),
                               vars.biases[l]);
    h = l + 1 < layers ? ad::relu(z) : z;
  }
  return h;
}

ad::Var classify(ad::Tape&, ad::Var h, const HeadVars& vars) {
  ad::Var z = h;
  int layers = static_cast<int>(vars.weights.size());
  for (int l = 0; l < layers; ++l) {
    z = ad::add_rowvec(ad::matmul(z, vars.weights[l]), vars.biases[l]);
    if (l + 1 < layers) z = ad::relu(z);
  }
  return z;
}

std::vector<int> predict(const Mat& logits) {
  std::vector<int> out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = c;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

double accuracy(const Mat& logits, const std::vector<int>& labels,
                const std::vector<int>& rows) {
  std::vector<int> pred = predict(logits);
  int hit = 0, total = 0;
  for (int r : rows) {
    if (labels[r] < 0) continue;
    ++total;
    if (pred[r] == labels[r]) ++hit;
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

Mat sum_pool(const Mat& h, const std::vector<int>& nodes) {
  Mat out = Mat::Zero(1, h.cols());
  for (int v : nodes) out.row(0) += h.row(v);
  return out;
}

}  // namespace gblab
