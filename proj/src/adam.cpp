#include "gblab/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace gblab {

void AdamState::step(std::vector<Mat*> params, const std::vector<const Mat*>& grads) {
  if (params.size() != grads.size())
    throw std::runtime_error("adam: params and grads must pair up");
  if (m_.empty()) {
    for (const Mat* p : params) {
      m_.push_back(Mat::Zero(p->rows(), p->cols()));
      v_.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }
  if (params.size() != m_.size())
    throw std::runtime_error("adam: parameter group size changed");

  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (size_t k = 0; k < params.size(); ++k) {
    Mat& p = *params[k];
    const Mat& g = *grads[k];
    if (g.rows() != p.rows() || g.cols() != p.cols())
      throw std::runtime_error("adam: gradient shape mismatch");
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * g;
    v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    Mat mhat = m_[k] / c1;
    Mat vhat = v_[k] / c2;
    p.array() -= config_.lr * mhat.array() / (vhat.array().sqrt() + config_.eps);
  }
}

}  // namespace gblab
