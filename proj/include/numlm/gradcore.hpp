#pragma once

// Dense f64 tensors with tape-free reverse-mode differentiation.
//
// Every op returns a new Tensor whose node keeps shared ownership of its
// parents and a closure that pushes the output gradient back into them.
// backward() orders the reachable nodes topologically and runs the
// closures once each, so the graph is freed as soon as the last Tensor
// handle referring to it goes away.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace numlm::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first touched
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor row(std::span<const double> values);  // [1, n]

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  // Rank-2 extents; a rank-1 tensor counts as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  bool has_grad() const { return !node_->grad.empty(); }

  double item() const;
  double at(std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }
  std::vector<double> row_values(std::size_t r) const;

  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// Elementwise and linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // x[m,n] + bias[n] per row
Tensor gelu(const Tensor& x);                          // exact erf form
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor softmax_rows(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Structural.
Tensor reshape(const Tensor& x, Shape shape);
Tensor gather_rows(const Tensor& table, std::span<const int> ids);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor select_row(const Tensor& x, std::size_t r);  // [1, n]
Tensor concat_rows(std::span<const Tensor> parts);

enum class Reduction { mean, sum };

struct CrossEntropy {
  Tensor loss;            // scalar
  std::size_t counted = 0;
  bool all_ignored = false;
};

// Row-wise softmax cross-entropy; rows whose target equals ignore_id are
// skipped. Mean divides by the number of counted rows. A fully ignored
// batch yields a zero loss with all_ignored set.
CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_id,
                                   Reduction reduction = Reduction::mean);

// mean |pred - target| over all elements.
Tensor l1_loss(const Tensor& pred, std::span<const double> target);
// Euclidean norm of each row: [m, n] -> [m].
Tensor l2_norm_rows(const Tensor& x);

// Multi-head scaled dot-product attention over [L, d] projections. With
// causal set, position i attends to positions <= i only.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads,
                        bool causal = true);

void backward(const Tensor& loss);

// Named, ordered parameter storage.
class ParamStore {
 public:
  enum class Init { normal, zeros, ones };

  Tensor& add(std::string name, Shape shape, Init init, std::mt19937_64& rng, double stddev = 0.02);
  Tensor& add(std::string name, Tensor value);

  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);
  bool contains(std::string_view name) const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

  void zero_grad();
  std::size_t num_values() const;
  ParamStore clone() const;  // deep copy of values, no grads

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace numlm::ad
