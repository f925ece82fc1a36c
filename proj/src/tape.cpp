#include "gblab/tape.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace gblab::ad {

struct TapeAccess {
  static Var make(Tape& t, Mat value, bool requires_grad,
                  std::function<void(Tape&)> pull) {
    Tape::Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    node.pull = std::move(pull);
    t.nodes_.push_back(std::move(node));
    return Var{&t, static_cast<int>(t.nodes_.size()) - 1};
  }
  static const Mat& val(const Tape& t, int id) { return t.nodes_[id].value; }
  static bool rg(const Tape& t, int id) { return t.nodes_[id].requires_grad; }
  // Lazily allocated so off-path nodes cost nothing in backward.
  static Mat& grad(Tape& t, int id) {
    Tape::Node& n = t.nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  static bool grad_touched(const Tape& t, int id) { return t.nodes_[id].grad.size() != 0; }
  static void run_pull(Tape& t, int id) {
    if (t.nodes_[id].pull) t.nodes_[id].pull(t);
  }
  static void clear_grads(Tape& t) {
    for (auto& n : t.nodes_) n.grad.resize(0, 0);
  }
};

namespace {

using TA = TapeAccess;

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::runtime_error("tape: operands from different tapes");
}

bool any_rg(Var a) { return TA::rg(*a.tape, a.id); }
bool any_rg(Var a, Var b) { return any_rg(a) || any_rg(b); }

}  // namespace

Var Tape::constant(Mat value) { return TA::make(*this, std::move(value), false, nullptr); }

Var Tape::param(Mat value) { return TA::make(*this, std::move(value), true, nullptr); }

const Mat& Tape::grad(Var v) { return TA::grad(*this, v.id); }

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::runtime_error("tape: loss from a different tape");
  const Mat& lv = nodes_[loss.id].value;
  if (lv.rows() != 1 || lv.cols() != 1)
    throw std::runtime_error("tape: backward needs a 1x1 loss");
  TA::clear_grads(*this);
  TA::grad(*this, loss.id)(0, 0) = 1.0;
  for (int id = loss.id; id >= 0; --id)
    if (TA::grad_touched(*this, id)) TA::run_pull(*this, id);
}

// --- primitives ------------------------------------------------------------

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Mat& av = t.value(a);
  const Mat& bv = t.value(b);
  if (av.cols() != bv.rows()) throw std::runtime_error("matmul: inner dims differ");
  Mat out = av * bv;
  bool rg = any_rg(a, b);
  int self = static_cast<int>(t.size());
  int pa = a.id, pb = b.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    const Mat& g = TA::grad(tt, self);
    if (TA::rg(tt, pa)) TA::grad(tt, pa).noalias() += g * TA::val(tt, pb).transpose();
    if (TA::rg(tt, pb)) TA::grad(tt, pb).noalias() += TA::val(tt, pa).transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Mat& av = t.value(a);
  const Mat& bv = t.value(b);
  if (av.cols() != bv.cols()) throw std::runtime_error("matmul_nt: inner dims differ");
  Mat out = av * bv.transpose();
  bool rg = any_rg(a, b);
  int self = static_cast<int>(t.size());
  int pa = a.id, pb = b.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    const Mat& g = TA::grad(tt, self);
    if (TA::rg(tt, pa)) TA::grad(tt, pa).noalias() += g * TA::val(tt, pb);
    if (TA::rg(tt, pb)) TA::grad(tt, pb).noalias() += g.transpose() * TA::val(tt, pa);
  });
}

Var spmm(const SpMat& s, Var a) {
  Tape& t = *a.tape;
  const Mat& av = t.value(a);
  if (s.cols() != av.rows()) throw std::runtime_error("spmm: inner dims differ");
  Mat out = s * av;
  bool rg = any_rg(a);
  int self = static_cast<int>(t.size());
  int pa = a.id;
  if (!rg) return TA::make(t, std::move(out), rg, std::function<void(Tape&)>());
  // The backward pass may outlive the caller's matrix, so the node keeps its
  // own copy.
  auto sp = std::make_shared<SpMat>(s);
  return TA::make(t, std::move(out), rg, [=](Tape& tt) {
    TA::grad(tt, pa).noalias() += sp->transpose() * TA::grad(tt, self);
  });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  if (t.value(a).rows() != t.value(b).rows() || t.value(a).cols() != t.value(b).cols())
    throw std::runtime_error("add: shape mismatch");
  Mat out = t.value(a) + t.value(b);
  bool rg = any_rg(a, b);
  int self = static_cast<int>(t.size());
  int pa = a.id, pb = b.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    const Mat& g = TA::grad(tt, self);
    if (TA::rg(tt, pa)) TA::grad(tt, pa) += g;
    if (TA::rg(tt, pb)) TA::grad(tt, pb) += g;
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  if (t.value(a).rows() != t.value(b).rows() || t.value(a).cols() != t.value(b).cols())
    throw std::runtime_error("sub: shape mismatch");
  Mat out = t.value(a) - t.value(b);
  bool rg = any_rg(a, b);
  int self = static_cast<int>(t.size());
  int pa = a.id, pb = b.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    const Mat& g = TA::grad(tt, self);
    if (TA::rg(tt, pa)) TA::grad(tt, pa) += g;
    if (TA::rg(tt, pb)) TA::grad(tt, pb) -= g;
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  if (t.value(a).rows() != t.value(b).rows() || t.value(a).cols() != t.value(b).cols())
    throw std::runtime_error("mul: shape mismatch");
  Mat out = t.value(a).cwiseProduct(t.value(b));
  bool rg = any_rg(a, b);
  int self = static_cast<int>(t.size());
  int pa = a.id, pb = b.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    const Mat& g = TA::grad(tt, self);
    if (TA::rg(tt, pa)) TA::grad(tt, pa) += g.cwiseProduct(TA::val(tt, pb));
    if (TA::rg(tt, pb)) TA::grad(tt, pb) += g.cwiseProduct(TA::val(tt, pa));
  });
}

Var affine(Var a, double scale, double shift) {
  Tape& t = *a.tape;
  Mat out = (t.value(a).array() * scale + shift).matrix();
  bool rg = any_rg(a);
  int self = static_cast<int>(t.size());
  int pa = a.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    TA::grad(tt, pa) += scale * TA::grad(tt, self);
  });
}

Var add_rowvec(Var a, Var row) {
  check_same_tape(a, row);
  Tape& t = *a.tape;
  const Mat& av = t.value(a);
  const Mat& rv = t.value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols())
    throw std::runtime_error("add_rowvec: row must be 1 x cols(a)");
  Mat out = av.rowwise() + rv.row(0);
  bool rg = any_rg(a, row);
  int self = static_cast<int>(t.size());
  int pa = a.id, pr = row.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    const Mat& g = TA::grad(tt, self);
    if (TA::rg(tt, pa)) TA::grad(tt, pa) += g;
    if (TA::rg(tt, pr)) TA::grad(tt, pr) += g.colwise().sum();
  });
}

Var relu(Var a) {
  Tape& t = *a.tape;
  Mat out = t.value(a).cwiseMax(0.0);
  bool rg = any_rg(a);
  int self = static_cast<int>(t.size());
  int pa = a.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    const Mat& x = TA::val(tt, pa);
    TA::grad(tt, pa) += TA::grad(tt, self).cwiseProduct(
        (x.array() > 0.0).cast<double>().matrix());
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Mat out = (1.0 / (1.0 + (-t.value(a).array()).exp())).matrix();
  bool rg = any_rg(a);
  int self = static_cast<int>(t.size());
  int pa = a.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    const Mat& y = TA::val(tt, self);
    TA::grad(tt, pa) +=
        TA::grad(tt, self).cwiseProduct((y.array() * (1.0 - y.array())).matrix());
  });
}

Var row_softmax(Var a) {
  Tape& t = *a.tape;
  const Mat& x = t.value(a);
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::ArrayXd e = (x.row(i).array() - x.row(i).maxCoeff()).exp();
    out.row(i) = (e / e.sum()).matrix();
  }
  bool rg = any_rg(a);
  int self = static_cast<int>(t.size());
  int pa = a.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    const Mat& y = TA::val(tt, self);
    const Mat& g = TA::grad(tt, self);
    Mat& ga = TA::grad(tt, pa);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      double dot = y.row(i).dot(g.row(i));
      ga.row(i) += (y.row(i).array() * (g.row(i).array() - dot)).matrix();
    }
  });
}

Var cross_entropy(Var logits, const std::vector<int>& labels) {
  Tape& t = *logits.tape;
  const Mat& z = t.value(logits);
  if (static_cast<Eigen::Index>(labels.size()) != z.rows())
    throw std::runtime_error("cross_entropy: one label per logits row required");
  const double clamp = 1e-12;
  const Eigen::Index rows = z.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    int y = labels[i];
    if (y < 0 || y >= z.cols()) throw std::runtime_error("cross_entropy: label out of range");
    double m = z.row(i).maxCoeff();
    double lse = m + std::log((z.row(i).array() - m).exp().sum());
    double p = std::exp(z(i, y) - lse);
    total += -std::log(std::max(p, clamp));
  }
  Mat out(1, 1);
  out(0, 0) = total / static_cast<double>(rows);
  bool rg = any_rg(logits);
  int self = static_cast<int>(t.size());
  int pa = logits.id;
  std::vector<int> ys = labels;
  return TA::make(t, std::move(out), rg,
                  !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    const Mat& zz = TA::val(tt, pa);
    double g = TA::grad(tt, self)(0, 0) / static_cast<double>(zz.rows());
    Mat& ga = TA::grad(tt, pa);
    for (Eigen::Index i = 0; i < zz.rows(); ++i) {
      Eigen::ArrayXd e = (zz.row(i).array() - zz.row(i).maxCoeff()).exp();
      Eigen::ArrayXd p = e / e.sum();
      ga.row(i) += (g * p).matrix().transpose();
      ga(i, ys[i]) -= g;
    }
  });
}

Var gather_rows(Var a, std::vector<int> rows) {
  Tape& t = *a.tape;
  const Mat& av = t.value(a);
  Mat out(static_cast<Eigen::Index>(rows.size()), av.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= av.rows())
      throw std::runtime_error("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = av.row(rows[i]);
  }
  bool rg = any_rg(a);
  int self = static_cast<int>(t.size());
  int pa = a.id;
  return TA::make(t, std::move(out), rg,
                  !rg ? std::function<void(Tape&)>() : [=, idx = std::move(rows)](Tape& tt) {
    const Mat& g = TA::grad(tt, self);
    Mat& ga = TA::grad(tt, pa);
    for (size_t i = 0; i < idx.size(); ++i)
      ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::runtime_error("concat_rows: no parts");
  Tape& t = *parts[0].tape;
  Eigen::Index rows = 0;
  Eigen::Index cols = t.value(parts[0]).cols();
  bool rg = false;
  for (Var p : parts) {
    check_same_tape(parts[0], p);
    if (t.value(p).cols() != cols) throw std::runtime_error("concat_rows: column mismatch");
    rows += t.value(p).rows();
    rg = rg || any_rg(p);
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (Var p : parts) {
    out.middleRows(at, t.value(p).rows()) = t.value(p);
    at += t.value(p).rows();
    ids.push_back(p.id);
  }
  int self = static_cast<int>(t.size());
  return TA::make(t, std::move(out), rg,
                  !rg ? std::function<void(Tape&)>() : [=, ids = std::move(ids)](Tape& tt) {
    const Mat& g = TA::grad(tt, self);
    Eigen::Index row = 0;
    for (int id : ids) {
      Eigen::Index r = TA::val(tt, id).rows();
      if (TA::rg(tt, id)) TA::grad(tt, id) += g.middleRows(row, r);
      row += r;
    }
  });
}

Var concat_cols(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Mat& av = t.value(a);
  const Mat& bv = t.value(b);
  if (av.rows() != bv.rows()) throw std::runtime_error("concat_cols: row mismatch");
  Mat out(av.rows(), av.cols() + bv.cols());
  out.leftCols(av.cols()) = av;
  out.rightCols(bv.cols()) = bv;
  bool rg = any_rg(a, b);
  int self = static_cast<int>(t.size());
  int pa = a.id, pb = b.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    const Mat& g = TA::grad(tt, self);
    Eigen::Index ca = TA::val(tt, pa).cols();
    Eigen::Index cb = TA::val(tt, pb).cols();
    if (TA::rg(tt, pa)) TA::grad(tt, pa) += g.leftCols(ca);
    if (TA::rg(tt, pb)) TA::grad(tt, pb) += g.rightCols(cb);
  });
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  Mat out(1, 1);
  out(0, 0) = t.value(a).sum();
  bool rg = any_rg(a);
  int self = static_cast<int>(t.size());
  int pa = a.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    TA::grad(tt, pa).array() += TA::grad(tt, self)(0, 0);
  });
}

Var sum_rows(Var a) {
  Tape& t = *a.tape;
  Mat out = t.value(a).colwise().sum();
  bool rg = any_rg(a);
  int self = static_cast<int>(t.size());
  int pa = a.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    TA::grad(tt, pa).rowwise() += TA::grad(tt, self).row(0);
  });
}

Var mean_rows(Var a) {
  Tape& t = *a.tape;
  const double n = static_cast<double>(t.value(a).rows());
  Mat out = t.value(a).colwise().mean();
  bool rg = any_rg(a);
  int self = static_cast<int>(t.size());
  int pa = a.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    TA::grad(tt, pa).rowwise() += TA::grad(tt, self).row(0) / n;
  });
}

Var row_dot(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Mat& av = t.value(a);
  const Mat& bv = t.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw std::runtime_error("row_dot: shape mismatch");
  Mat out = av.cwiseProduct(bv).rowwise().sum();
  bool rg = any_rg(a, b);
  int self = static_cast<int>(t.size());
  int pa = a.id, pb = b.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() : [=](Tape& tt) {
    const Mat& g = TA::grad(tt, self);
    if (TA::rg(tt, pa))
      TA::grad(tt, pa) += (TA::val(tt, pb).array().colwise() * g.col(0).array()).matrix();
    if (TA::rg(tt, pb))
      TA::grad(tt, pb) += (TA::val(tt, pa).array().colwise() * g.col(0).array()).matrix();
  });
}

Var l2_normalize_rows(Var a) {
  Tape& t = *a.tape;
  const Mat& x = t.value(a);
  Vec norms = x.rowwise().norm();
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out.row(i) = norms(i) > 0.0 ? (x.row(i) / norms(i)).eval() : Mat::Zero(1, x.cols());
  bool rg = any_rg(a);
  int self = static_cast<int>(t.size());
  int pa = a.id;
  return TA::make(t, std::move(out), rg,
                  !rg ? std::function<void(Tape&)>() : [=, norms = std::move(norms)](Tape& tt) {
    const Mat& y = TA::val(tt, self);
    const Mat& g = TA::grad(tt, self);
    Mat& ga = TA::grad(tt, pa);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      if (norms(i) == 0.0) continue;
      double dot = y.row(i).dot(g.row(i));
      ga.row(i) += (g.row(i) - dot * y.row(i)) / norms(i);
    }
  });
}

Var info_nce_normalized(Var u, Var v, double tau) {
  check_same_tape(u, v);
  Tape& t = *u.tape;
  const Mat& uv = t.value(u);
  const Mat& vv = t.value(v);
  if (uv.rows() != vv.rows() || uv.cols() != vv.cols())
    throw std::runtime_error("info_nce: view shapes differ");
  if (uv.rows() < 2) throw std::runtime_error("info_nce: need at least 2 rows");
  if (tau <= 0.0) throw std::runtime_error("info_nce: tau must be positive");

  const Eigen::Index n = uv.rows();
  Mat suv = (uv * vv.transpose()) / tau;
  Mat suu = (uv * uv.transpose()) / tau;
  Mat svv = (vv * vv.transpose()) / tau;

  // One anchor direction: positives on suv's diagonal, negatives the
  // off-diagonal entries of `cross` and `same`.
  auto direction = [n](const Mat& cross, const Mat& same, Mat& p, Mat& q) -> double {
    double total = 0.0;
    p.resize(n, n);
    q.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double m = cross.row(i).maxCoeff();
      for (Eigen::Index j = 0; j < n; ++j)
        if (j != i) m = std::max(m, same(i, j));
      Eigen::ArrayXd ec = (cross.row(i).array() - m).exp();
      Eigen::ArrayXd es = (same.row(i).array() - m).exp();
      es(i) = 0.0;
      double d = ec.sum() + es.sum();
      total += -cross(i, i) + m + std::log(d);
      p.row(i) = (ec / d).matrix().transpose();
      q.row(i) = (es / d).matrix().transpose();
    }
    return total;
  };

  Mat p1, q1, p2, q2;
  double l1 = direction(suv, suu, p1, q1);
  Mat svu = suv.transpose();
  double l2 = direction(svu, svv, p2, q2);
  Mat out(1, 1);
  out(0, 0) = (l1 + l2) / (2.0 * static_cast<double>(n));

  bool rg = any_rg(u, v);
  int self = static_cast<int>(t.size());
  int pu = u.id, pv = v.id;
  return TA::make(t, std::move(out), rg, !rg ? std::function<void(Tape&)>() :
      [=, p1 = std::move(p1), q1 = std::move(q1), p2 = std::move(p2),
       q2 = std::move(q2)](Tape& tt) {
    const Mat& uu = TA::val(tt, pu);
    const Mat& vv2 = TA::val(tt, pv);
    const Eigen::Index nn = uu.rows();
    double s = TA::grad(tt, self)(0, 0) / (2.0 * static_cast<double>(nn) * tau);
    Mat id = Mat::Identity(nn, nn);
    Mat guv = (p1 - id) + (p2 - id).transpose();  // d(total)/d(suv * tau)
    if (TA::rg(tt, pu))
      TA::grad(tt, pu).noalias() += s * (guv * vv2 + (q1 + q1.transpose()) * uu);
    if (TA::rg(tt, pv))
      TA::grad(tt, pv).noalias() += s * (guv.transpose() * uu + (q2 + q2.transpose()) * vv2);
  });
}

// --- verification ----------------------------------------------------------

double grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                  const std::vector<Mat>& params, double h) {
  auto eval = [&](const std::vector<Mat>& values) {
    Tape t;
    std::vector<Var> vars;
    vars.reserve(values.size());
    for (const Mat& m : values) vars.push_back(t.param(m));
    return t.value(build(t, vars))(0, 0);
  };

  Tape t;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Mat& m : params) vars.push_back(t.param(m));
  Var loss = build(t, vars);
  t.backward(loss);
  std::vector<Mat> grads;
  grads.reserve(vars.size());
  for (Var v : vars) grads.push_back(t.grad(v));

  double max_err = 0.0;
  std::vector<Mat> work = params;
  for (size_t k = 0; k < params.size(); ++k)
    for (Eigen::Index i = 0; i < params[k].rows(); ++i)
      for (Eigen::Index j = 0; j < params[k].cols(); ++j) {
        double saved = work[k](i, j);
        work[k](i, j) = saved + h;
        double up = eval(work);
        work[k](i, j) = saved - h;
        double down = eval(work);
        work[k](i, j) = saved;
        double fd = (up - down) / (2.0 * h);
        double ad = grads[k](i, j);
        double err = std::abs(ad - fd) / (std::abs(ad) + std::abs(fd) + 1e-4);
        max_err = std::max(max_err, err);
      }
  return max_err;
}

}  // namespace gblab::ad
