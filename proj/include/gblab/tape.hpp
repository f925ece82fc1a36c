#pragma once

#include <functional>
#include <vector>

#include "gblab/types.hpp"

namespace gblab::ad {

class Tape;

// Handle to one matrix-valued node on a tape. Cheap to copy.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

// Reverse-mode tape over dense matrices. Operations append nodes; backward()
// walks the tape in reverse creation order (a topological order) and
// accumulates gradients into every node that requires them. Leaves created
// with constant() never accumulate gradients, which keeps large fixed inputs
// out of the backward pass.
class Tape {
 public:
  Var constant(Mat value);
  Var param(Mat value);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  // Gradient of the last backward() call; zero matrix if the node was not on
  // the loss path.
  const Mat& grad(Var v);
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Runs backward from `loss`, which must be 1x1. Clears previous gradients.
  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void(Tape&)> pull;  // adds this node's grad into its parents
  };
  std::vector<Node> nodes_;

  friend struct TapeAccess;
};

// --- primitives ------------------------------------------------------------

Var matmul(Var a, Var b);     // a * b
Var matmul_nt(Var a, Var b);  // a * b^T
// s * a; the sparse matrix is copied into the node and gets no gradient
// (propagation structure is fixed data, not a parameter).
Var spmm(const SpMat& s, Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var affine(Var a, double scale, double shift);
Var add_rowvec(Var a, Var row);  // broadcast a 1xN row onto every row of a

Var relu(Var a);
Var sigmoid(Var a);
Var row_softmax(Var a);

// Mean negative log-likelihood of `labels` under row-softmax of `logits`.
// Probabilities are clamped at 1e-12 before the log. Result is 1x1.
Var cross_entropy(Var logits, const std::vector<int>& labels);

Var gather_rows(Var a, std::vector<int> rows);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(Var a, Var b);

Var sum_all(Var a);         // 1x1
Var sum_rows(Var a);        // column-wise sum -> 1xN
Var mean_rows(Var a);       // column-wise mean -> 1xN
Var row_dot(Var a, Var b);  // rowwise dot product -> Mx1

// Rows scaled to unit L2 norm; an all-zero row stays zero.
Var l2_normalize_rows(Var a);

// Symmetrized InfoNCE over two views whose rows are already L2-normalized:
// for each i the positive pair is (u_i, v_i) and the negatives are all other
// rows of both views. Result is 1x1.
Var info_nce_normalized(Var u, Var v, double tau);

// --- verification ----------------------------------------------------------

// Rebuilds the computation via `build` and compares analytic gradients of
// every parameter entry against central finite differences with step h.
// Returns the maximum relative error (|ad - fd| / (|ad| + |fd| + 1e-4)).
double grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                  const std::vector<Mat>& params, double h);

}  // namespace gblab::ad
