#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vsc/rng.hpp"

namespace vsc {

// Reverse-mode autodiff over dense double tensors. A Tensor is a value handle
// onto a graph node; ops build the tape, backward() walks it once in reverse
// topological order. Everything is CPU, 64-bit, and deterministic.

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node {
  Shape shape;
  std::vector<double> val;
  std::vector<double> grad;  // allocated on demand during backward
  bool requires_grad = false;
  std::string name;  // non-empty for parameters
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
};

using NodePtr = std::shared_ptr<Node>;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  // Uniform in [-bound, bound]; bound == 0 gives exact zeros.
  static Tensor uniform(Shape shape, double bound, Rng& rng, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->val.size()); }

  std::vector<double>& data() { return node_->val; }
  const std::vector<double>& data() const { return node_->val; }
  const std::vector<double>& grad() const;
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }

  double item() const;

  void set_name(const std::string& n) { node_->name = n; }
  const std::string& name() const { return node_->name; }

  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

// ---- autodiff driver ----------------------------------------------------

// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every reachable
// node that requires grad. Throws on non-scalar loss or a detached graph.
void backward(const Tensor& loss);

// Name -> gradient snapshot for the given parameters (after backward()).
std::vector<std::pair<std::string, std::vector<double>>> grad_map(
    const std::vector<Tensor>& params);

// ---- elementwise ---------------------------------------------------------

// Binary ops broadcast with right-aligned shapes where a dim of 1 stretches.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor abs_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
Tensor square(const Tensor& a);

Tensor leaky_relu(const Tensor& a, double slope = 0.01);
Tensor gelu(const Tensor& a);

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // (M,K)x(K,N)
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // (M,K)x(N,K)^T -> (M,N)
Tensor bmm(const Tensor& a, const Tensor& b);        // (B,M,K)x(B,K,N)

// x (...,K) w (O,K) b (O) or undefined -> (...,O)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- convolutions and sampling --------------------------------------------

// x (N,Ci,L), w (Co,Ci,K), optional b (Co).
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
// x (N,Ci,L), w (Ci,Co,K), optional b (Co). Lout = (L-1)*stride - 2*pad + K.
Tensor conv1d_transpose(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

Tensor maxpool1d(const Tensor& x, int k, int stride);
Tensor upsample_nearest2(const Tensor& x);
Tensor upsample_linear2(const Tensor& x);

// ---- normalization ---------------------------------------------------------

// Per (leading dims) statistics over the last axis: (x - mean) / (std + eps).
Tensor instance_norm_lastdim(const Tensor& x, double eps = 1e-5);
// Same statistics, then (1 + gamma) * xhat + beta with gamma, beta shaped as
// the leading dims of x (one scale/shift per normalized row).
Tensor adain(const Tensor& z, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor layer_norm_lastdim(const Tensor& x, double eps = 1e-5);
Tensor softmax_lastdim(const Tensor& x);

// ---- reductions -------------------------------------------------------------

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor sum_lastdim(const Tensor& x);   // (...,L) -> (...,1)
Tensor mean_lastdim(const Tensor& x);  // (...,L) -> (...,1)
// Population standard deviation over the last axis; not differentiable at
// exactly constant rows.
Tensor std_lastdim(const Tensor& x);

Tensor mse_loss(const Tensor& pred, const Tensor& target);
Tensor mae_loss(const Tensor& pred, const Tensor& target);

// ---- shape ops ---------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);
Tensor transpose12(const Tensor& x);  // (A,B,C) -> (A,C,B)
Tensor roll_lastdim(const Tensor& x, int shift);

// ---- attention helpers ---------------------------------------------------------

// (N, H*hd, nW*w) -> (N*nW*H, w, hd); inverse restores the original layout.
Tensor heads_split_windows(const Tensor& x, int heads, int window);
Tensor heads_merge_windows(const Tensor& x, int n, int heads, int window);

// scores (B',w,w) with B' = n*nW*heads laid out (n, window, head)-major.
// mask (nW,w,w) is a non-learned additive mask; bias (H,w,w) is learned.
// Either may be undefined.
Tensor add_window_bias(const Tensor& scores, const Tensor& mask, const Tensor& bias,
                       int n_windows, int heads);

// Scaled dot-product attention over (B,T,D) with optional additive bias
// already folded into the scores hook; standalone variant for generic use.
Tensor sdpa(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& add_mask);

// ---- stochastic -----------------------------------------------------------------

Tensor dropout(const Tensor& x, double p, bool train, Rng& rng);

// ---- embeddings -------------------------------------------------------------------

// Mean of table rows per sample: table (V,D), tokens[i] a list of row ids.
Tensor embedding_mean(const Tensor& table, const std::vector<std::vector<int>>& tokens);

}  // namespace vsc
