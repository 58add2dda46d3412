#include "numlm/gradcore.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "numlm/errors.hpp"

namespace numlm::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

thread_local bool g_grad_enabled = true;

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

Tensor make_result(Shape shape, std::vector<double> data, const char* op, std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  if (wants_grad(inputs)) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

inline double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

inline double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<double>& Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("Tensor::from: " + shape_str(shape) + " does not hold " + std::to_string(data.size()) +
                         " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::row(std::span<const double> values) {
  return from({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape()[0];
  return 1;
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape()[1];
  if (rank() == 1) return shape()[0];
  return 1;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

std::vector<double> Tensor::row_values(std::size_t r) const {
  const auto n = cols();
  auto first = node_->data.begin() + static_cast<std::ptrdiff_t>(r * n);
  return {first, first + static_cast<std::ptrdiff_t>(n)};
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const auto m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MapMat(out.data(), m, n).noalias() = ConstMapMat(a.data().data(), m, k) * ConstMapMat(b.data().data(), k, n);
  return make_result({m, n}, std::move(out), "matmul", {&a, &b}, [m, k, n](Node& self) {
    ConstMapMat dout(self.grad.data(), m, n);
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      MapMat(pa.ensure_grad().data(), m, k).noalias() += dout * ConstMapMat(pb.data.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      MapMat(pb.ensure_grad().data(), k, n).noalias() += ConstMapMat(pa.data.data(), m, k).transpose() * dout;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return make_result(a.shape(), std::move(out), "add", {&a, &b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return make_result(a.shape(), std::move(out), "sub", {&a, &b}, [](Node& self) {
    const double sign[2] = {1.0, -1.0};
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = self.parents[k];
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return make_result(a.shape(), std::move(out), "mul", {&a, &b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * factor;
  return make_result(a.shape(), std::move(out), "scale", {&a}, [factor](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_bias");
  const auto m = x.shape()[0], n = x.shape()[1];
  if (bias.numel() != n) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " for rows of width " + std::to_string(n));
  }
  std::vector<double> out(m * n);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = x.at(r * n + c) + bias.at(c);
  return make_result(x.shape(), std::move(out), "add_bias", {&x, &bias}, [m, n](Node& self) {
    Node& px = *self.parents[0];
    Node& pb = *self.parents[1];
    if (px.requires_grad) {
      auto& g = px.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[c] += self.grad[r * n + c];
    }
  });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(x.at(i));
  return make_result(x.shape(), std::move(out), "gelu", {&x}, [](Node& self) {
    Node& px = *self.parents[0];
    auto& g = px.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * gelu_derivative(px.data[i]);
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const auto m = x.rows(), n = x.cols();
  if (gamma.numel() != n || beta.numel() != n) {
    throw DimensionError("layer_norm: affine params do not match width " + std::to_string(n));
  }
  std::vector<double> out(m * n);
  std::vector<double> xhat(m * n);
  std::vector<double> inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = x.data().data() + r * n;
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += row[c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (row[c] - mu) * inv_std[r];
      out[r * n + c] = xhat[r * n + c] * gamma.at(c) + beta.at(c);
    }
  }
  return make_result(x.shape(), std::move(out), "layer_norm", {&x, &gamma, &beta},
                     [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       Node& px = *self.parents[0];
                       Node& pg = *self.parents[1];
                       Node& pb = *self.parents[2];
                       const double inv_n = 1.0 / static_cast<double>(n);
                       for (std::size_t r = 0; r < m; ++r) {
                         const double* dy = self.grad.data() + r * n;
                         const double* xh = xhat.data() + r * n;
                         if (pg.requires_grad) {
                           auto& g = pg.ensure_grad();
                           for (std::size_t c = 0; c < n; ++c) g[c] += dy[c] * xh[c];
                         }
                         if (pb.requires_grad) {
                           auto& g = pb.ensure_grad();
                           for (std::size_t c = 0; c < n; ++c) g[c] += dy[c];
                         }
                         if (px.requires_grad) {
                           double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                           for (std::size_t c = 0; c < n; ++c) {
                             const double dxh = dy[c] * pg.data[c];
                             sum_dxh += dxh;
                             sum_dxh_xh += dxh * xh[c];
                           }
                           auto& g = px.ensure_grad();
                           for (std::size_t c = 0; c < n; ++c) {
                             const double dxh = dy[c] * pg.data[c];
                             g[r * n + c] += inv_std[r] * (dxh - inv_n * sum_dxh - xh[c] * inv_n * sum_dxh_xh);
                           }
                         }
                       }
                     });
}

Tensor softmax_rows(const Tensor& x) {
  const auto m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = x.data().data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (out[r * n + c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] /= z;
  }
  return make_result(x.shape(), out, "softmax_rows", {&x}, [m, n, probs = out](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += self.grad[r * n + c] * probs[r * n + c];
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += probs[r * n + c] * (self.grad[r * n + c] - dot);
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({}, {s}, "sum", {&x}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), "reshape", {&x},
                     [](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                     });
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  require_rank2(table, "gather_rows");
  const auto v = table.shape()[0], n = table.shape()[1];
  std::vector<std::size_t> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(v));
    }
    rows[i] = static_cast<std::size_t>(ids[i]);
  }
  (void)n;
  return gather_rows(table, std::span<const std::size_t>(rows));
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const auto m = x.rows(), n = x.cols();
  std::vector<double> out(rows.size() * n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m) throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range");
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * n), n, out.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result({rows.size(), n}, std::move(out), "gather_rows", {&x}, [n, idx = std::move(idx)](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < n; ++c) g[idx[i] * n + c] += self.grad[i * n + c];
  });
}

Tensor select_row(const Tensor& x, std::size_t r) {
  const std::size_t rows[1] = {r};
  return gather_rows(x, std::span<const std::size_t>(rows));
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const auto n = parts[0].cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) throw DimensionError("concat_rows: width mismatch");
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());

  auto node = std::make_shared<Node>();
  node->shape = {m, n};
  node->data = std::move(out);
  node->op = "concat_rows";
  const bool track = g_grad_enabled && std::any_of(parts.begin(), parts.end(), [](const Tensor& t) {
                       return t.requires_grad();
                     });
  if (track) {
    node->requires_grad = true;
    for (const auto& p : parts) node->parents.push_back(p.node());
    node->backward = [](Node& self) {
      std::size_t offset = 0;
      for (auto& p : self.parents) {
        const auto count = p->data.size();
        if (p->requires_grad) {
          auto& g = p->ensure_grad();
          for (std::size_t i = 0; i < count; ++i) g[i] += self.grad[offset + i];
        }
        offset += count;
      }
    };
  }
  return Tensor(std::move(node));
}

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_id,
                                   Reduction reduction) {
  const auto m = logits.rows(), v = logits.cols();
  if (targets.size() != m) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(m) + " rows");
  }
  std::vector<double> probs(m * v, 0.0);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < m; ++r) {
    if (targets[r] == ignore_id) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v) {
      throw DimensionError("softmax_cross_entropy: target " + std::to_string(targets[r]) + " outside [0, " +
                           std::to_string(v) + ")");
    }
    const double* row = logits.data().data() + r * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t c = 0; c < v; ++c) z += std::exp(row[c] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t c = 0; c < v; ++c) probs[r * v + c] = std::exp(row[c] - log_z);
    total += log_z - row[targets[r]];
    ++counted;
  }
  CrossEntropy result;
  result.counted = counted;
  result.all_ignored = counted == 0;
  const double norm = (reduction == Reduction::mean && counted > 0) ? 1.0 / static_cast<double>(counted) : 1.0;
  std::vector<int> tgt(targets.begin(), targets.end());
  result.loss = make_result({}, {total * norm}, "softmax_cross_entropy", {&logits},
                            [m, v, norm, ignore_id, tgt = std::move(tgt), probs = std::move(probs)](Node& self) {
                              auto& g = self.parents[0]->ensure_grad();
                              const double up = self.grad[0] * norm;
                              for (std::size_t r = 0; r < m; ++r) {
                                if (tgt[r] == ignore_id) continue;
                                for (std::size_t c = 0; c < v; ++c) g[r * v + c] += up * probs[r * v + c];
                                g[r * v + static_cast<std::size_t>(tgt[r])] -= up;
                              }
                            });
  return result;
}

Tensor l1_loss(const Tensor& pred, std::span<const double> target) {
  if (pred.numel() != target.size()) {
    throw DimensionError("l1_loss: " + std::to_string(pred.numel()) + " predictions vs " +
                         std::to_string(target.size()) + " targets");
  }
  if (target.empty()) throw DimensionError("l1_loss: empty input");
  double s = 0.0;
  std::vector<double> sign(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = pred.at(i) - target[i];
    s += std::abs(d);
    sign[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  }
  const double inv = 1.0 / static_cast<double>(target.size());
  return make_result({}, {s * inv}, "l1_loss", {&pred}, [inv, sign = std::move(sign)](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * inv * sign[i];
  });
}

Tensor l2_norm_rows(const Tensor& x) {
  const auto m = x.rows(), n = x.cols();
  std::vector<double> out(m);
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += x.at(r * n + c) * x.at(r * n + c);
    out[r] = std::sqrt(s);
  }
  return make_result({m}, out, "l2_norm_rows", {&x}, [m, n, norms = out](Node& self) {
    Node& px = *self.parents[0];
    auto& g = px.ensure_grad();
    for (std::size_t r = 0; r < m; ++r) {
      if (norms[r] == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += self.grad[r] * px.data[r * n + c] / norms[r];
    }
  });
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads, bool causal) {
  require_rank2(q, "causal_attention");
  require_same_shape(q, k, "causal_attention");
  require_same_shape(q, v, "causal_attention");
  const auto len = q.shape()[0], d = q.shape()[1];
  if (n_heads == 0 || d % n_heads != 0) {
    throw DimensionError("causal_attention: width " + std::to_string(d) + " not divisible into " +
                         std::to_string(n_heads) + " heads");
  }
  const auto hd = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  // probs[h][i][j], zero above the diagonal when causal
  std::vector<double> probs(n_heads * len * len, 0.0);
  std::vector<double> out(len * d, 0.0);
  const double* Q = q.data().data();
  const double* K = k.data().data();
  const double* V = v.data().data();
  for (std::size_t h = 0; h < n_heads; ++h) {
    const auto off = h * hd;
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t last = causal ? i + 1 : len;
      double* p = probs.data() + (h * len + i) * len;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < last; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < hd; ++c) s += Q[i * d + off + c] * K[j * d + off + c];
        p[j] = s * inv_sqrt;
        mx = std::max(mx, p[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < last; ++j) z += (p[j] = std::exp(p[j] - mx));
      for (std::size_t j = 0; j < last; ++j) p[j] /= z;
      for (std::size_t j = 0; j < last; ++j)
        for (std::size_t c = 0; c < hd; ++c) out[i * d + off + c] += p[j] * V[j * d + off + c];
    }
  }
  return make_result(
      {len, d}, std::move(out), "causal_attention", {&q, &k, &v},
      [len, d, hd, n_heads, causal, inv_sqrt, probs = std::move(probs)](Node& self) {
        Node& pq = *self.parents[0];
        Node& pk = *self.parents[1];
        Node& pv = *self.parents[2];
        const double* Q = pq.data.data();
        const double* K = pk.data.data();
        const double* V = pv.data.data();
        const double* dO = self.grad.data();
        double* dQ = pq.requires_grad ? pq.ensure_grad().data() : nullptr;
        double* dK = pk.requires_grad ? pk.ensure_grad().data() : nullptr;
        double* dV = pv.requires_grad ? pv.ensure_grad().data() : nullptr;
        std::vector<double> dp(len);
        for (std::size_t h = 0; h < n_heads; ++h) {
          const auto off = h * hd;
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t last = causal ? i + 1 : len;
            const double* p = probs.data() + (h * len + i) * len;
            double dot = 0.0;
            for (std::size_t j = 0; j < last; ++j) {
              double s = 0.0;
              for (std::size_t c = 0; c < hd; ++c) s += dO[i * d + off + c] * V[j * d + off + c];
              dp[j] = s;
              dot += s * p[j];
              if (dV)
                for (std::size_t c = 0; c < hd; ++c) dV[j * d + off + c] += p[j] * dO[i * d + off + c];
            }
            for (std::size_t j = 0; j < last; ++j) {
              const double ds = p[j] * (dp[j] - dot) * inv_sqrt;
              if (dQ)
                for (std::size_t c = 0; c < hd; ++c) dQ[i * d + off + c] += ds * K[j * d + off + c];
              if (dK)
                for (std::size_t c = 0; c < hd; ++c) dK[j * d + off + c] += ds * Q[i * d + off + c];
            }
          }
        }
      });
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; reversed it is a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

Tensor& ParamStore::add(std::string name, Shape shape, Init init, std::mt19937_64& rng, double stddev) {
  const auto n = shape_numel(shape);
  std::vector<double> values(n, 0.0);
  switch (init) {
    case Init::normal: {
      std::normal_distribution<double> dist(0.0, stddev);
      for (auto& v : values) v = dist(rng);
      break;
    }
    case Init::ones:
      std::fill(values.begin(), values.end(), 1.0);
      break;
    case Init::zeros:
      break;
  }
  return add(std::move(name), Tensor::from(std::move(shape), std::move(values), true));
}

Tensor& ParamStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
  return entries_.back().second;
}

const Tensor& ParamStore::get(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second].second;
}

Tensor& ParamStore::get(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ParamStore&>(*this).get(name));
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

void ParamStore::zero_grad() {
  for (auto& [_, t] : entries_) {
    t.mutable_grad();
    t.zero_grad();
  }
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

ParamStore ParamStore::clone() const {
  ParamStore copy;
  for (const auto& [name, t] : entries_) {
    copy.add(name, Tensor::from(t.shape(), std::vector<double>(t.data().begin(), t.data().end()), t.requires_grad()));
  }
  return copy;
}

}  // namespace numlm::ad
