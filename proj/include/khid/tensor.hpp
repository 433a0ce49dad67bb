#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace khid::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

std::string shape_str(const Mat& m);

struct Node {
  Mat value;
  Mat grad;  // empty until first needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Adds this node's gradient contribution into its parents' gradients.
  std::function<void(Node&)> backward_fn;

  Mat& ensure_grad();
};

// Handle to a node of the computation graph. Copies share the node. Every
// tensor is two-dimensional; a scalar is 1x1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Mat value);
  // Leaf that accumulates gradients across backward passes.
  static Tensor parameter(Mat value);

  const Mat& value() const { return node_->value; }
  Mat& mutable_value() { return node_->value; }
  // Gradient accumulated by backward(); zeros if the node was unreachable.
  const Mat& grad() const { return node_->ensure_grad(); }
  Mat& grad() { return node_->ensure_grad(); }
  void zero_grad();

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

// Builds an op result. `backward` is kept only if some parent needs a gradient.
Tensor make_result(Mat value, std::vector<Tensor> parents, std::function<void(Node&)> backward);

// Reverse-topological accumulation from a scalar loss.
void backward(const Tensor& loss);

// ---- differentiable ops -------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// Elementwise with broadcasting of b: same shape, 1 x cols, rows x 1 or 1 x 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor transpose(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
// axis 1 normalizes each row across its columns; axis 0 each column.
Tensor softmax(const Tensor& a, int axis);
Tensor log_softmax(const Tensor& a, int axis);
// Inverted dropout: survivors scaled by 1 / (1 - rate) in training, identity
// otherwise. The mask is a pure function of (seed, stream, element index).
Tensor dropout(const Tensor& a, double rate, std::uint64_t seed, std::uint64_t stream, bool training);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Reduces along `axis`: axis 0 gives 1 x cols, axis 1 gives rows x 1.
Tensor mean(const Tensor& a, int axis);
Tensor max(const Tensor& a, int axis);
Tensor slice_cols(const Tensor& a, Eigen::Index begin, Eigen::Index count);
Tensor gather_rows(const Tensor& a, std::span<const int> index);
// out[index[e]] += a[e]; out has `rows` rows.
Tensor scatter_add_rows(const Tensor& a, std::span<const int> index, Eigen::Index rows);
// Softmax of a column vector within groups sharing the same segment id.
Tensor segment_softmax(const Tensor& scores, std::span<const int> segment, Eigen::Index segments);

// Weighted edge aggregation: out[dst[e]] += weight[e] * x[src[e]], with
// `weight` an E x 1 column and `rows` output rows.
Tensor edge_aggregate(const Tensor& x, const Tensor& weight, std::span<const int> src, std::span<const int> dst,
                      Eigen::Index rows);
// Pairwise edge score a^T leaky_relu(p[dst[e]] + q[src[e]]) as an E x 1
// column, without materializing the E x F pair matrix.
Tensor edge_pair_score(const Tensor& p, const Tensor& q, const Tensor& a, std::span<const int> src,
                       std::span<const int> dst, double slope);

// Constant sparse matrix times a dense tensor.
class SparseOperand {
 public:
  explicit SparseOperand(SparseMat m) : m_(std::move(m)), t_(m_.transpose()) {}
  const SparseMat& matrix() const { return m_; }
  const SparseMat& transposed() const { return t_; }

 private:
  SparseMat m_;
  SparseMat t_;
};
Tensor spmm(const std::shared_ptr<const SparseOperand>& a, const Tensor& x);

// Weighted mean negative log-likelihood over `rows` of `logits`:
//   sum_i w[y_i] * -log softmax(logits_i)[y_i] / sum_i w[y_i].
// Empty `class_weight` means uniform weights.
Tensor cross_entropy(const Tensor& logits, std::span<const int> rows, std::span<const int> targets,
                     std::span<const double> class_weight = {});

// ---- initialization -------------------------------------------------------

Mat glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, std::uint64_t stream);
Mat uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi, std::uint64_t seed,
                   std::uint64_t stream);

// ---- optimization -----------------------------------------------------------

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Single-tensor update; `step` is the 1-based step count after increment.
// Weight decay is decoupled and applied multiplicatively before the
// bias-corrected Adam update.
void adamw_update(Mat& param, const Mat& grad, Mat& m, Mat& v, std::int64_t step, double lr,
                  const AdamWOptions& opt);

class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWOptions options);

  void step(double lr);
  void zero_grad();

  std::int64_t steps() const { return step_; }
  const Mat& first_moment(std::size_t i) const { return m_[i]; }
  const Mat& second_moment(std::size_t i) const { return v_[i]; }
  const AdamWOptions& options() const { return options_; }

 private:
  std::vector<Tensor> params_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  AdamWOptions options_;
  std::int64_t step_ = 0;
};

// Linear ramp from 0 to `peak` over the first `warmup_fraction` of steps,
// then linear decay to `final_factor * peak` at the last step.
struct WarmupLinearSchedule {
  double peak = 1e-3;
  std::int64_t total_steps = 1;
  double warmup_fraction = 0.6;
  double final_factor = 0.1;

  double at(std::int64_t step) const;
};

// ---- checkpoints -----------------------------------------------------------

struct NamedTensor {
  std::string name;
  Mat value;
};

// Writes `<prefix>.bin` (little-endian float64, concatenated) and
// `<prefix>.json` (names, shapes, offsets, dtype, seed).
void save_checkpoint(const std::string& prefix, const std::vector<NamedTensor>& tensors, std::uint64_t seed);
std::vector<NamedTensor> load_checkpoint(const std::string& prefix, std::uint64_t* seed = nullptr);

}  // namespace khid::nn
