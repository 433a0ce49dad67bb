#include <cmath>
#include <limits>

#include "khid/error.hpp"
#include "khid/rng.hpp"
#include "khid/tensor.hpp"

namespace khid::nn {
namespace {

enum class Broadcast { Same, Row, Col, Scalar };

Broadcast broadcast_kind(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::Same;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::Col;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

Mat expand(const Mat& b, Broadcast kind, Eigen::Index rows, Eigen::Index cols) {
  switch (kind) {
    case Broadcast::Same: return b;
    case Broadcast::Row: return b.replicate(rows, 1);
    case Broadcast::Col: return b.replicate(1, cols);
    case Broadcast::Scalar: return Mat::Constant(rows, cols, b(0, 0));
  }
  return b;
}

Mat reduce_to(const Mat& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::Same: return g;
    case Broadcast::Row: return g.colwise().sum();
    case Broadcast::Col: return g.rowwise().sum();
    case Broadcast::Scalar: return Mat::Constant(1, 1, g.sum());
  }
  return g;
}

void accumulate(Node& parent, const Mat& g) {
  if (parent.requires_grad) parent.ensure_grad() += g;
}

void check_axis(int axis, const char* op) {
  if (axis != 0 && axis != 1) throw ShapeError(std::string(op) + ": axis must be 0 or 1");
}

void check_index(std::span<const int> index, Eigen::Index bound, const char* op) {
  for (int i : index) {
    if (i < 0 || i >= bound) {
      throw ShapeError(std::string(op) + ": index " + std::to_string(i) + " out of range [0, " +
                       std::to_string(bound) + ")");
    }
  }
}

Mat softmax_rows(const Mat& x) {
  Mat y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.value()) + " and " + shape_str(b.value()));
  }
  Mat out = a.value() * b.value();
  return make_result(std::move(out), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) pa.ensure_grad().noalias() += n.grad * pb.value.transpose();
    if (pb.requires_grad) pb.ensure_grad().noalias() += pa.value.transpose() * n.grad;
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  auto kind = broadcast_kind(a.value(), b.value(), "add");
  Mat out = a.value() + expand(b.value(), kind, a.rows(), a.cols());
  return make_result(std::move(out), {a, b}, [kind](Node& n) {
    accumulate(*n.parents[0], n.grad);
    if (n.parents[1]->requires_grad) accumulate(*n.parents[1], reduce_to(n.grad, kind));
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto kind = broadcast_kind(a.value(), b.value(), "sub");
  Mat out = a.value() - expand(b.value(), kind, a.rows(), a.cols());
  return make_result(std::move(out), {a, b}, [kind](Node& n) {
    accumulate(*n.parents[0], n.grad);
    if (n.parents[1]->requires_grad) accumulate(*n.parents[1], -reduce_to(n.grad, kind));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto kind = broadcast_kind(a.value(), b.value(), "mul");
  Mat bx = expand(b.value(), kind, a.rows(), a.cols());
  Mat out = a.value().cwiseProduct(bx);
  return make_result(std::move(out), {a, b}, [kind, bx = std::move(bx)](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) pa.ensure_grad() += n.grad.cwiseProduct(bx);
    if (pb.requires_grad) pb.ensure_grad() += reduce_to(n.grad.cwiseProduct(pa.value), kind);
  });
}

Tensor scale(const Tensor& a, double factor) {
  return make_result(a.value() * factor, {a}, [factor](Node& n) { accumulate(*n.parents[0], n.grad * factor); });
}

Tensor transpose(const Tensor& a) {
  Mat out = a.value().transpose();
  return make_result(std::move(out), {a}, [](Node& n) {
    Mat g = n.grad.transpose();
    accumulate(*n.parents[0], g);
  });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  Mat out = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return make_result(std::move(out), {a}, [slope](Node& n) {
    Node& p = *n.parents[0];
    Mat d = p.value.unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; });
    accumulate(p, n.grad.cwiseProduct(d));
  });
}

Tensor softmax(const Tensor& a, int axis) {
  check_axis(axis, "softmax");
  Mat y = axis == 1 ? softmax_rows(a.value()) : Mat(softmax_rows(a.value().transpose()).transpose());
  Mat saved = y;
  return make_result(std::move(y), {a}, [axis, saved = std::move(saved)](Node& n) {
    Mat gy = n.grad.cwiseProduct(saved);
    Mat dx;
    if (axis == 1) {
      Vec s = gy.rowwise().sum();
      dx = gy - saved.cwiseProduct(s.replicate(1, saved.cols()));
    } else {
      Mat s = gy.colwise().sum();
      dx = gy - saved.cwiseProduct(s.replicate(saved.rows(), 1));
    }
    accumulate(*n.parents[0], dx);
  });
}

Tensor log_softmax(const Tensor& a, int axis) {
  check_axis(axis, "log_softmax");
  const Mat& x = a.value();
  Mat xt = axis == 1 ? x : Mat(x.transpose());
  Mat out(xt.rows(), xt.cols());
  for (Eigen::Index i = 0; i < xt.rows(); ++i) {
    double m = xt.row(i).maxCoeff();
    double lse = m + std::log((xt.row(i).array() - m).exp().sum());
    out.row(i) = xt.row(i).array() - lse;
  }
  Mat probs = out.array().exp();
  if (axis == 0) {
    out.transposeInPlace();
    probs.transposeInPlace();
  }
  return make_result(std::move(out), {a}, [axis, probs = std::move(probs)](Node& n) {
    Mat dx;
    if (axis == 1) {
      Vec s = n.grad.rowwise().sum();
      dx = n.grad - probs.cwiseProduct(s.replicate(1, probs.cols()));
    } else {
      Mat s = n.grad.colwise().sum();
      dx = n.grad - probs.cwiseProduct(s.replicate(probs.rows(), 1));
    }
    accumulate(*n.parents[0], dx);
  });
}

Tensor dropout(const Tensor& a, double rate, std::uint64_t seed, std::uint64_t stream, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  Mat mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = uniform_at(seed, stream, static_cast<std::uint64_t>(i)) >= rate ? keep_scale : 0.0;
  }
  Mat out = a.value().cwiseProduct(mask);
  return make_result(std::move(out), {a},
                     [mask = std::move(mask)](Node& n) { accumulate(*n.parents[0], n.grad.cwiseProduct(mask)); });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  check_axis(axis, "concat");
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Eigen::Index rows = 0, cols = 0;
  for (const auto& p : parts) {
    if (axis == 1) {
      if (p.rows() != parts[0].rows()) {
        throw ShapeError("concat: row mismatch " + shape_str(parts[0].value()) + " and " + shape_str(p.value()));
      }
      cols += p.cols();
    } else {
      if (p.cols() != parts[0].cols()) {
        throw ShapeError("concat: column mismatch " + shape_str(parts[0].value()) + " and " + shape_str(p.value()));
      }
      rows += p.rows();
    }
  }
  if (axis == 1) rows = parts[0].rows();
  else cols = parts[0].cols();
  Mat out(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    if (axis == 1) {
      out.middleCols(off, p.cols()) = p.value();
      off += p.cols();
    } else {
      out.middleRows(off, p.rows()) = p.value();
      off += p.rows();
    }
  }
  return make_result(std::move(out), parts, [axis](Node& n) {
    Eigen::Index off = 0;
    for (auto& p : n.parents) {
      if (axis == 1) {
        if (p->requires_grad) p->ensure_grad() += n.grad.middleCols(off, p->value.cols());
        off += p->value.cols();
      } else {
        if (p->requires_grad) p->ensure_grad() += n.grad.middleRows(off, p->value.rows());
        off += p->value.rows();
      }
    }
  });
}

Tensor sum(const Tensor& a) {
  return make_result(Mat::Constant(1, 1, a.value().sum()), {a}, [](Node& n) {
    Node& p = *n.parents[0];
    p.ensure_grad().array() += n.grad(0, 0);
  });
}

Tensor mean(const Tensor& a) {
  const double count = static_cast<double>(a.value().size());
  if (count == 0) throw ShapeError("mean of empty tensor");
  return make_result(Mat::Constant(1, 1, a.value().sum() / count), {a}, [count](Node& n) {
    Node& p = *n.parents[0];
    p.ensure_grad().array() += n.grad(0, 0) / count;
  });
}

Tensor mean(const Tensor& a, int axis) {
  check_axis(axis, "mean");
  if (a.value().size() == 0) throw ShapeError("mean of empty tensor");
  Mat out = axis == 0 ? Mat(a.value().colwise().mean()) : Mat(a.value().rowwise().mean());
  return make_result(std::move(out), {a}, [axis](Node& n) {
    Node& p = *n.parents[0];
    if (axis == 0) {
      p.ensure_grad() += (n.grad / static_cast<double>(p.value.rows())).replicate(p.value.rows(), 1);
    } else {
      p.ensure_grad() += (n.grad / static_cast<double>(p.value.cols())).replicate(1, p.value.cols());
    }
  });
}

Tensor max(const Tensor& a, int axis) {
  check_axis(axis, "max");
  const Mat& x = a.value();
  if (x.size() == 0) throw ShapeError("max of empty tensor");
  const Eigen::Index outer = axis == 0 ? x.cols() : x.rows();
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(outer));
  Mat out = axis == 0 ? Mat(1, x.cols()) : Mat(x.rows(), 1);
  for (Eigen::Index k = 0; k < outer; ++k) {
    Eigen::Index best;
    if (axis == 0) {
      out(0, k) = x.col(k).maxCoeff(&best);
    } else {
      out(k, 0) = x.row(k).maxCoeff(&best);
    }
    arg[static_cast<std::size_t>(k)] = best;
  }
  return make_result(std::move(out), {a}, [axis, arg = std::move(arg)](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Mat& g = p.ensure_grad();
    for (std::size_t k = 0; k < arg.size(); ++k) {
      auto kk = static_cast<Eigen::Index>(k);
      if (axis == 0) g(arg[k], kk) += n.grad(0, kk);
      else g(kk, arg[k]) += n.grad(kk, 0);
    }
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of " + shape_str(a.value()));
  }
  Mat out = a.value().middleCols(begin, count);
  return make_result(std::move(out), {a}, [begin, count](Node& n) {
    Node& p = *n.parents[0];
    p.ensure_grad().middleCols(begin, count) += n.grad;
  });
}

Tensor gather_rows(const Tensor& a, std::span<const int> index) {
  check_index(index, a.rows(), "gather_rows");
  Mat out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t e = 0; e < index.size(); ++e) out.row(static_cast<Eigen::Index>(e)) = a.value().row(index[e]);
  std::vector<int> idx(index.begin(), index.end());
  return make_result(std::move(out), {a}, [idx = std::move(idx)](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Mat& g = p.ensure_grad();
    for (std::size_t e = 0; e < idx.size(); ++e) g.row(idx[e]) += n.grad.row(static_cast<Eigen::Index>(e));
  });
}

Tensor scatter_add_rows(const Tensor& a, std::span<const int> index, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(index.size()) != a.rows()) {
    throw ShapeError("scatter_add_rows: " + std::to_string(index.size()) + " indices for " + shape_str(a.value()));
  }
  check_index(index, rows, "scatter_add_rows");
  Mat out = Mat::Zero(rows, a.cols());
  for (std::size_t e = 0; e < index.size(); ++e) out.row(index[e]) += a.value().row(static_cast<Eigen::Index>(e));
  std::vector<int> idx(index.begin(), index.end());
  return make_result(std::move(out), {a}, [idx = std::move(idx)](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    Mat& g = p.ensure_grad();
    for (std::size_t e = 0; e < idx.size(); ++e) g.row(static_cast<Eigen::Index>(e)) += n.grad.row(idx[e]);
  });
}

Tensor segment_softmax(const Tensor& scores, std::span<const int> segment, Eigen::Index segments) {
  if (scores.cols() != 1 || static_cast<std::size_t>(scores.rows()) != segment.size()) {
    throw ShapeError("segment_softmax: expected [" + std::to_string(segment.size()) + " x 1], got " +
                     shape_str(scores.value()));
  }
  check_index(segment, segments, "segment_softmax");
  const Mat& x = scores.value();
  std::vector<double> seg_max(static_cast<std::size_t>(segments), -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < segment.size(); ++e) {
    seg_max[segment[e]] = std::max(seg_max[segment[e]], x(static_cast<Eigen::Index>(e), 0));
  }
  Mat out(x.rows(), 1);
  std::vector<double> seg_sum(static_cast<std::size_t>(segments), 0.0);
  for (std::size_t e = 0; e < segment.size(); ++e) {
    double v = std::exp(x(static_cast<Eigen::Index>(e), 0) - seg_max[segment[e]]);
    out(static_cast<Eigen::Index>(e), 0) = v;
    seg_sum[segment[e]] += v;
  }
  for (std::size_t e = 0; e < segment.size(); ++e) out(static_cast<Eigen::Index>(e), 0) /= seg_sum[segment[e]];
  Mat alpha = out;
  std::vector<int> seg(segment.begin(), segment.end());
  return make_result(std::move(out), {scores},
                     [alpha = std::move(alpha), seg = std::move(seg), segments](Node& n) {
                       std::vector<double> dot(static_cast<std::size_t>(segments), 0.0);
                       for (std::size_t e = 0; e < seg.size(); ++e) {
                         auto ee = static_cast<Eigen::Index>(e);
                         dot[seg[e]] += n.grad(ee, 0) * alpha(ee, 0);
                       }
                       Mat dx(alpha.rows(), 1);
                       for (std::size_t e = 0; e < seg.size(); ++e) {
                         auto ee = static_cast<Eigen::Index>(e);
                         dx(ee, 0) = alpha(ee, 0) * (n.grad(ee, 0) - dot[seg[e]]);
                       }
                       accumulate(*n.parents[0], dx);
                     });
}

Tensor edge_aggregate(const Tensor& x, const Tensor& weight, std::span<const int> src, std::span<const int> dst,
                      Eigen::Index rows) {
  if (src.size() != dst.size() || weight.cols() != 1 || static_cast<std::size_t>(weight.rows()) != src.size()) {
    throw ShapeError("edge_aggregate: " + std::to_string(src.size()) + " sources, " + std::to_string(dst.size()) +
                     " destinations and weights " + shape_str(weight.value()));
  }
  check_index(src, x.rows(), "edge_aggregate");
  check_index(dst, rows, "edge_aggregate");
  Mat out = Mat::Zero(rows, x.cols());
  const Mat& xv = x.value();
  const Mat& wv = weight.value();
  for (std::size_t e = 0; e < src.size(); ++e) out.row(dst[e]) += wv(static_cast<Eigen::Index>(e), 0) * xv.row(src[e]);
  std::vector<int> s(src.begin(), src.end()), d(dst.begin(), dst.end());
  return make_result(std::move(out), {x, weight}, [s = std::move(s), d = std::move(d)](Node& n) {
    Node& px = *n.parents[0];
    Node& pw = *n.parents[1];
    for (std::size_t e = 0; e < s.size(); ++e) {
      const auto ee = static_cast<Eigen::Index>(e);
      if (px.requires_grad) px.ensure_grad().row(s[e]) += pw.value(ee, 0) * n.grad.row(d[e]);
      if (pw.requires_grad) pw.ensure_grad()(ee, 0) += n.grad.row(d[e]).dot(px.value.row(s[e]));
    }
  });
}

Tensor edge_pair_score(const Tensor& p, const Tensor& q, const Tensor& a, std::span<const int> src,
                       std::span<const int> dst, double slope) {
  if (src.size() != dst.size() || p.cols() != q.cols() || a.rows() != p.cols() || a.cols() != 1 ||
      p.rows() != q.rows()) {
    throw ShapeError("edge_pair_score: incompatible shapes " + shape_str(p.value()) + ", " + shape_str(q.value()) +
                     " and " + shape_str(a.value()));
  }
  check_index(src, q.rows(), "edge_pair_score");
  check_index(dst, p.rows(), "edge_pair_score");
  auto leaky = [slope](double v) { return v > 0.0 ? v : slope * v; };
  Mat out(static_cast<Eigen::Index>(src.size()), 1);
  const Eigen::RowVectorXd av = a.value().col(0).transpose();
  for (std::size_t e = 0; e < src.size(); ++e) {
    Eigen::RowVectorXd z = p.value().row(dst[e]) + q.value().row(src[e]);
    out(static_cast<Eigen::Index>(e), 0) = z.unaryExpr(leaky).dot(av);
  }
  std::vector<int> s(src.begin(), src.end()), d(dst.begin(), dst.end());
  return make_result(std::move(out), {p, q, a}, [s = std::move(s), d = std::move(d), slope, leaky](Node& n) {
    Node& pp = *n.parents[0];
    Node& pq = *n.parents[1];
    Node& pa = *n.parents[2];
    const Eigen::RowVectorXd av = pa.value.col(0).transpose();
    for (std::size_t e = 0; e < s.size(); ++e) {
      const double up = n.grad(static_cast<Eigen::Index>(e), 0);
      if (up == 0.0) continue;
      Eigen::RowVectorXd z = pp.value.row(d[e]) + pq.value.row(s[e]);
      if (pa.requires_grad) pa.ensure_grad().col(0) += up * z.unaryExpr(leaky).transpose();
      Eigen::RowVectorXd dz = up * av.cwiseProduct(z.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; }));
      if (pp.requires_grad) pp.ensure_grad().row(d[e]) += dz;
      if (pq.requires_grad) pq.ensure_grad().row(s[e]) += dz;
    }
  });
}

Tensor spmm(const std::shared_ptr<const SparseOperand>& a, const Tensor& x) {
  if (a->matrix().cols() != x.rows()) {
    throw ShapeError("spmm: incompatible shapes [" + std::to_string(a->matrix().rows()) + " x " +
                     std::to_string(a->matrix().cols()) + "] and " + shape_str(x.value()));
  }
  Mat out = a->matrix() * x.value();
  return make_result(std::move(out), {x}, [a](Node& n) {
    Node& p = *n.parents[0];
    if (p.requires_grad) p.ensure_grad() += a->transposed() * n.grad;
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> rows, std::span<const int> targets,
                     std::span<const double> class_weight) {
  if (rows.size() != targets.size()) throw ShapeError("cross_entropy: rows and targets differ in length");
  if (rows.empty()) throw ContractError("cross_entropy: no rows selected");
  check_index(rows, logits.rows(), "cross_entropy");
  check_index(targets, logits.cols(), "cross_entropy");
  if (!class_weight.empty() && static_cast<Eigen::Index>(class_weight.size()) != logits.cols()) {
    throw ShapeError("cross_entropy: class weight count does not match logits width");
  }
  const Mat& x = logits.value();
  Mat probs(static_cast<Eigen::Index>(rows.size()), x.cols());
  double total_w = 0.0;
  double loss = 0.0;
  std::vector<double> w(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto r = x.row(rows[i]);
    double m = r.maxCoeff();
    double lse = m + std::log((r.array() - m).exp().sum());
    probs.row(static_cast<Eigen::Index>(i)) = (r.array() - lse).exp();
    w[i] = class_weight.empty() ? 1.0 : class_weight[targets[i]];
    total_w += w[i];
    loss += w[i] * (lse - r(targets[i]));
  }
  if (total_w <= 0.0) throw ContractError("cross_entropy: total weight is zero");
  std::vector<int> rr(rows.begin(), rows.end()), tt(targets.begin(), targets.end());
  return make_result(Mat::Constant(1, 1, loss / total_w), {logits},
                     [probs = std::move(probs), rr = std::move(rr), tt = std::move(tt), w = std::move(w),
                      total_w](Node& n) {
                       Node& p = *n.parents[0];
                       Mat& g = p.ensure_grad();
                       const double up = n.grad(0, 0);
                       for (std::size_t i = 0; i < rr.size(); ++i) {
                         auto ii = static_cast<Eigen::Index>(i);
                         double c = up * w[i] / total_w;
                         g.row(rr[i]) += c * probs.row(ii);
                         g(rr[i], tt[i]) -= c;
                       }
                     });
}

}  // namespace khid::nn
