#include "khid/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "khid/error.hpp"

namespace khid::nn {

std::string shape_str(const Mat& m) {
  std::ostringstream ss;
  ss << "[" << m.rows() << " x " << m.cols() << "]";
  return ss.str();
}

Mat& Node::ensure_grad() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) grad = Mat::Zero(value.rows(), value.cols());
  return grad;
}

Tensor Tensor::constant(Mat value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Tensor(std::move(n));
}

Tensor Tensor::parameter(Mat value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->ensure_grad();
  return Tensor(std::move(n));
}

void Tensor::zero_grad() { node_->ensure_grad().setZero(); }

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(value()));
  return value()(0, 0);
}

Tensor make_result(Mat value, std::vector<Tensor> parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) {
    if (p.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss) throw ContractError("backward on empty tensor");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward requires a scalar loss, got " + shape_str(loss.value()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; reversed it is a topological order from the loss.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->backward_fn) n->ensure_grad().setZero();
  }
  loss.node()->ensure_grad()(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace khid::nn
