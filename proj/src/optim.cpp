#include <algorithm>
#include <cmath>

#include "khid/error.hpp"
#include "khid/rng.hpp"
#include "khid/tensor.hpp"

namespace khid::nn {

Mat uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi, std::uint64_t seed,
                   std::uint64_t stream) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = lo + (hi - lo) * uniform_at(seed, stream, static_cast<std::uint64_t>(i));
  }
  return m;
}

Mat glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, std::uint64_t stream) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return uniform_matrix(rows, cols, -bound, bound, seed, stream);
}

void adamw_update(Mat& param, const Mat& grad, Mat& m, Mat& v, std::int64_t step, double lr,
                  const AdamWOptions& opt) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
    throw ShapeError("adamw: gradient " + shape_str(grad) + " does not match parameter " + shape_str(param));
  }
  if (m.size() == 0) m = Mat::Zero(param.rows(), param.cols());
  if (v.size() == 0) v = Mat::Zero(param.rows(), param.cols());
  param *= 1.0 - lr * opt.weight_decay;
  m = opt.beta1 * m + (1.0 - opt.beta1) * grad;
  v = opt.beta2 * v + (1.0 - opt.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opt.eps);
}

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.push_back(Mat::Zero(p.rows(), p.cols()));
    v_.push_back(Mat::Zero(p.rows(), p.cols()));
  }
}

void AdamW::step(double lr) {
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adamw_update(params_[i].mutable_value(), params_[i].grad(), m_[i], v_[i], step_, lr, options_);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double WarmupLinearSchedule::at(std::int64_t step) const {
  if (total_steps <= 0) return peak;
  const auto warmup = static_cast<std::int64_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const std::int64_t decay_steps = std::max<std::int64_t>(1, total_steps - warmup);
  const double t = std::min(1.0, static_cast<double>(step - warmup + 1) / static_cast<double>(decay_steps));
  return peak * (1.0 - (1.0 - final_factor) * t);
}

}  // namespace khid::nn
