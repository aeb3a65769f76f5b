#include "vsc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace vsc {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

NodePtr make_node(Shape shape) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->val.assign(static_cast<std::size_t>(shape_numel(n->shape)), 0.0);
  return n;
}

void attach(const NodePtr& out, std::initializer_list<NodePtr> parents,
            std::function<void(Node&)> fn) {
  bool any = false;
  for (const auto& p : parents) {
    if (p && p->requires_grad) any = true;
  }
  if (!any) return;
  out->requires_grad = true;
  for (const auto& p : parents) {
    if (p && p->requires_grad) out->parents.push_back(p);
  }
  out->backward_fn = std::move(fn);
}

// Right-aligned broadcast helpers.
Shape broadcast_shape(const Shape& a, const Shape& b) {
  const int nd = std::max(a.size(), b.size());
  Shape out(static_cast<std::size_t>(nd));
  for (int i = 0; i < nd; ++i) {
    const int da = i < nd - static_cast<int>(a.size()) ? 1 : a[i - (nd - a.size())];
    const int db = i < nd - static_cast<int>(b.size()) ? 1 : b[i - (nd - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) + " vs " +
                                  shape_str(b));
    }
    out[static_cast<std::size_t>(i)] = std::max(da, db);
  }
  return out;
}

// Strides of `s` expanded into `out` (0 where broadcast).
std::vector<std::int64_t> broadcast_strides(const Shape& s, const Shape& out) {
  const int nd = static_cast<int>(out.size());
  const int off = nd - static_cast<int>(s.size());
  std::vector<std::int64_t> st(static_cast<std::size_t>(nd), 0);
  std::int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<std::size_t>(i + off)] = (s[static_cast<std::size_t>(i)] == 1) ? 0 : acc;
    acc *= s[static_cast<std::size_t>(i)];
  }
  return st;
}

// Walks an output index space while tracking two broadcast operand offsets.
template <typename F>
void broadcast_walk(const Shape& out, const Shape& sa, const Shape& sb, F&& f) {
  const int nd = static_cast<int>(out.size());
  const auto sta = broadcast_strides(sa, out);
  const auto stb = broadcast_strides(sb, out);
  std::vector<int> idx(static_cast<std::size_t>(nd), 0);
  const std::int64_t total = shape_numel(out);
  std::int64_t ia = 0, ib = 0;
  for (std::int64_t i = 0; i < total; ++i) {
    f(i, ia, ib);
    for (int d = nd - 1; d >= 0; --d) {
      auto du = static_cast<std::size_t>(d);
      if (++idx[du] < out[du]) {
        ia += sta[du];
        ib += stb[du];
        break;
      }
      ia -= sta[du] * (out[du] - 1);
      ib -= stb[du] * (out[du] - 1);
      idx[du] = 0;
    }
  }
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

enum class BinOp { Add, Sub, Mul, Div };

Tensor binary_op(const Tensor& a, const Tensor& b, BinOp op) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  auto an = a.node();
  auto bn = b.node();

  auto apply = [op](double x, double y) {
    switch (op) {
      case BinOp::Add: return x + y;
      case BinOp::Sub: return x - y;
      case BinOp::Mul: return x * y;
      default: return x / y;
    }
  };

  NodePtr out;
  if (same_shape(sa, sb)) {
    out = make_node(sa);
    const auto n = out->val.size();
    for (std::size_t i = 0; i < n; ++i) out->val[i] = apply(an->val[i], bn->val[i]);
    attach(out, {an, bn}, [an, bn, op](Node& self) {
      const auto n = self.val.size();
      switch (op) {
        case BinOp::Add:
          if (an->requires_grad)
            for (std::size_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
          if (bn->requires_grad)
            for (std::size_t i = 0; i < n; ++i) bn->grad[i] += self.grad[i];
          break;
        case BinOp::Sub:
          if (an->requires_grad)
            for (std::size_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
          if (bn->requires_grad)
            for (std::size_t i = 0; i < n; ++i) bn->grad[i] -= self.grad[i];
          break;
        case BinOp::Mul:
          if (an->requires_grad)
            for (std::size_t i = 0; i < n; ++i) an->grad[i] += self.grad[i] * bn->val[i];
          if (bn->requires_grad)
            for (std::size_t i = 0; i < n; ++i) bn->grad[i] += self.grad[i] * an->val[i];
          break;
        case BinOp::Div:
          if (an->requires_grad)
            for (std::size_t i = 0; i < n; ++i) an->grad[i] += self.grad[i] / bn->val[i];
          if (bn->requires_grad)
            for (std::size_t i = 0; i < n; ++i)
              bn->grad[i] -= self.grad[i] * an->val[i] / (bn->val[i] * bn->val[i]);
          break;
      }
    });
    return Tensor(out);
  }

  const Shape so = broadcast_shape(sa, sb);
  out = make_node(so);
  broadcast_walk(so, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
    out->val[static_cast<std::size_t>(i)] =
        apply(an->val[static_cast<std::size_t>(ia)], bn->val[static_cast<std::size_t>(ib)]);
  });
  attach(out, {an, bn}, [an, bn, op, so, sa, sb](Node& self) {
    broadcast_walk(so, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
      const double g = self.grad[static_cast<std::size_t>(i)];
      const double av = an->val[static_cast<std::size_t>(ia)];
      const double bv = bn->val[static_cast<std::size_t>(ib)];
      switch (op) {
        case BinOp::Add:
          if (an->requires_grad) an->grad[static_cast<std::size_t>(ia)] += g;
          if (bn->requires_grad) bn->grad[static_cast<std::size_t>(ib)] += g;
          break;
        case BinOp::Sub:
          if (an->requires_grad) an->grad[static_cast<std::size_t>(ia)] += g;
          if (bn->requires_grad) bn->grad[static_cast<std::size_t>(ib)] -= g;
          break;
        case BinOp::Mul:
          if (an->requires_grad) an->grad[static_cast<std::size_t>(ia)] += g * bv;
          if (bn->requires_grad) bn->grad[static_cast<std::size_t>(ib)] += g * av;
          break;
        case BinOp::Div:
          if (an->requires_grad) an->grad[static_cast<std::size_t>(ia)] += g / bv;
          if (bn->requires_grad) bn->grad[static_cast<std::size_t>(ib)] -= g * av / (bv * bv);
          break;
      }
    });
  });
  return Tensor(out);
}

template <typename FwdF, typename BwdF>
Tensor unary_op(const Tensor& a, FwdF fwd, BwdF dfdx) {
  auto an = a.node();
  auto out = make_node(an->shape);
  const auto n = out->val.size();
  for (std::size_t i = 0; i < n; ++i) out->val[i] = fwd(an->val[i]);
  attach(out, {an}, [an, dfdx](Node& self) {
    const auto m = self.val.size();
    for (std::size_t i = 0; i < m; ++i) an->grad[i] += self.grad[i] * dfdx(an->val[i]);
  });
  return Tensor(out);
}

// Shared kernel for row-wise normalization over the last axis. gamma/beta may
// be null (plain normalization).
Tensor norm_lastdim(const Tensor& x, const Tensor* gamma, const Tensor* beta, double eps) {
  auto xn = x.node();
  if (x.ndim() < 1) throw std::invalid_argument("norm: needs at least 1-D input");
  const int L = x.dim(x.ndim() - 1);
  const std::int64_t rows = x.numel() / L;
  if (gamma && static_cast<std::int64_t>(gamma->numel()) != rows)
    throw std::invalid_argument("adain: gamma size must match leading dims of z");
  if (beta && static_cast<std::int64_t>(beta->numel()) != rows)
    throw std::invalid_argument("adain: beta size must match leading dims of z");

  auto out = make_node(xn->shape);
  auto xhat = std::make_shared<std::vector<double>>(xn->val.size());
  auto denom = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
  auto sigma = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));

  NodePtr gn = gamma ? gamma->node() : nullptr;
  NodePtr bn = beta ? beta->node() : nullptr;

  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = xn->val.data() + r * L;
    double mu = 0.0;
    for (int l = 0; l < L; ++l) mu += xr[l];
    mu /= L;
    double v = 0.0;
    for (int l = 0; l < L; ++l) {
      const double c = xr[l] - mu;
      v += c * c;
    }
    v /= L;
    const double sd = std::sqrt(v);
    const double d = sd + eps;
    (*sigma)[static_cast<std::size_t>(r)] = sd;
    (*denom)[static_cast<std::size_t>(r)] = d;
    const double g = gn ? 1.0 + gn->val[static_cast<std::size_t>(r)] : 1.0;
    const double b = bn ? bn->val[static_cast<std::size_t>(r)] : 0.0;
    double* hr = xhat->data() + r * L;
    double* yr = out->val.data() + r * L;
    for (int l = 0; l < L; ++l) {
      hr[l] = (xr[l] - mu) / d;
      yr[l] = g * hr[l] + b;
    }
  }

  attach(out, {xn, gn, bn}, [xn, gn, bn, xhat, denom, sigma, rows, L](Node& self) {
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* gr = self.grad.data() + r * L;
      const double* hr = xhat->data() + r * L;
      const double d = (*denom)[static_cast<std::size_t>(r)];
      const double sd = (*sigma)[static_cast<std::size_t>(r)];
      const double gmul = gn ? 1.0 + gn->val[static_cast<std::size_t>(r)] : 1.0;
      double gsum = 0.0, ghsum = 0.0;
      for (int l = 0; l < L; ++l) {
        gsum += gr[l];
        ghsum += gr[l] * hr[l];
      }
      if (bn && bn->requires_grad) bn->grad[static_cast<std::size_t>(r)] += gsum;
      if (gn && gn->requires_grad) gn->grad[static_cast<std::size_t>(r)] += ghsum;
      if (!xn->requires_grad) continue;
      // dL/dc_l = gmul*g_l/d - c_l * (sum_k gmul*g_k*c_k) / (L*sigma*d^2)
      //         = gmul*g_l/d - hr_l * gmul*ghsum / (L*sigma), then recenter.
      const double corr = sd > 0.0 ? gmul * ghsum / (L * sd) : 0.0;
      double mean_dc = 0.0;
      double* xg = xn->grad.data() + r * L;
      for (int l = 0; l < L; ++l) mean_dc += gmul * gr[l] / d - hr[l] * corr;
      mean_dc /= L;
      for (int l = 0; l < L; ++l) {
        const double dc = gmul * gr[l] / d - hr[l] * corr;
        xg[l] += dc - mean_dc;
      }
    }
  });
  return Tensor(out);
}

}  // namespace

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = make_node(std::move(shape));
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto n = make_node(std::move(shape));
  std::fill(n->val.begin(), n->val.end(), v);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("Tensor::from: value count does not match shape " +
                                shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->val = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return full({1}, v, requires_grad); }

Tensor Tensor::uniform(Shape shape, double bound, Rng& rng, bool requires_grad) {
  auto n = make_node(std::move(shape));
  if (bound != 0.0) {
    for (auto& v : n->val) v = rng.uniform(-bound, bound);
  }
  n->requires_grad = requires_grad;
  return Tensor(n);
}

const std::vector<double>& Tensor::grad() const {
  if (!node_ || node_->grad.empty())
    throw std::logic_error("Tensor::grad: no gradient present (run backward first)");
  return node_->grad;
}

double Tensor::item() const {
  if (numel() != 1) throw std::logic_error("Tensor::item: tensor is not a scalar");
  return node_->val[0];
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a defined scalar");
  Node* root = loss.node().get();
  if (!root->requires_grad)
    throw std::invalid_argument("backward: loss is detached from any trainable parameter");

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* n;
    std::size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  visited.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->grad.assign(n->val.size(), 0.0);
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

std::vector<std::pair<std::string, std::vector<double>>> grad_map(
    const std::vector<Tensor>& params) {
  std::vector<std::pair<std::string, std::vector<double>>> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.emplace_back(p.name(), p.has_grad() ? p.grad() : std::vector<double>(p.data().size(), 0.0));
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Mul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Div); }

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_op(a, [s](double x) { return x * s; }, [s](double) { return s; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor abs_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::fabs(x); },
                  [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor exp_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Tensor log_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Tensor sqrt_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::sqrt(x); },
                  [](double x) { return 0.5 / std::sqrt(x); });
}

Tensor square(const Tensor& a) {
  return unary_op(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary_op(a, [slope](double x) { return x >= 0.0 ? x : slope * x; },
                  [slope](double x) { return x >= 0.0 ? 1.0 : slope; });
}

Tensor gelu(const Tensor& a) {
  return unary_op(a,
                  [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
                  [](double x) {
                    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                    return cdf + x * pdf;
                  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: need (M,K)x(K,N), got " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
  auto an = a.node(), bn = b.node();
  auto out = make_node({M, N});
  for (int i = 0; i < M; ++i) {
    double* orow = out->val.data() + static_cast<std::size_t>(i) * N;
    const double* arow = an->val.data() + static_cast<std::size_t>(i) * K;
    for (int k = 0; k < K; ++k) {
      const double av = arow[k];
      const double* brow = bn->val.data() + static_cast<std::size_t>(k) * N;
      for (int j = 0; j < N; ++j) orow[j] += av * brow[j];
    }
  }
  attach(out, {an, bn}, [an, bn, M, K, N](Node& self) {
    if (an->requires_grad) {
      for (int i = 0; i < M; ++i) {
        const double* grow = self.grad.data() + static_cast<std::size_t>(i) * N;
        double* garow = an->grad.data() + static_cast<std::size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
          const double* brow = bn->val.data() + static_cast<std::size_t>(k) * N;
          double acc = 0.0;
          for (int j = 0; j < N; ++j) acc += grow[j] * brow[j];
          garow[k] += acc;
        }
      }
    }
    if (bn->requires_grad) {
      for (int i = 0; i < M; ++i) {
        const double* arow = an->val.data() + static_cast<std::size_t>(i) * K;
        const double* grow = self.grad.data() + static_cast<std::size_t>(i) * N;
        for (int k = 0; k < K; ++k) {
          double* gbrow = bn->grad.data() + static_cast<std::size_t>(k) * N;
          const double av = arow[k];
          for (int j = 0; j < N; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
  return Tensor(out);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1))
    throw std::invalid_argument("matmul_nt: need (M,K)x(N,K), got " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  const int M = a.dim(0), K = a.dim(1), N = b.dim(0);
  auto an = a.node(), bn = b.node();
  auto out = make_node({M, N});
  for (int i = 0; i < M; ++i) {
    const double* arow = an->val.data() + static_cast<std::size_t>(i) * K;
    double* orow = out->val.data() + static_cast<std::size_t>(i) * N;
    for (int j = 0; j < N; ++j) {
      const double* brow = bn->val.data() + static_cast<std::size_t>(j) * K;
      double acc = 0.0;
      for (int k = 0; k < K; ++k) acc += arow[k] * brow[k];
      orow[j] = acc;
    }
  }
  attach(out, {an, bn}, [an, bn, M, K, N](Node& self) {
    for (int i = 0; i < M; ++i) {
      const double* grow = self.grad.data() + static_cast<std::size_t>(i) * N;
      for (int j = 0; j < N; ++j) {
        const double g = grow[j];
        if (g == 0.0) continue;
        if (an->requires_grad) {
          double* garow = an->grad.data() + static_cast<std::size_t>(i) * K;
          const double* brow = bn->val.data() + static_cast<std::size_t>(j) * K;
          for (int k = 0; k < K; ++k) garow[k] += g * brow[k];
        }
        if (bn->requires_grad) {
          double* gbrow = bn->grad.data() + static_cast<std::size_t>(j) * K;
          const double* arow = an->val.data() + static_cast<std::size_t>(i) * K;
          for (int k = 0; k < K; ++k) gbrow[k] += g * arow[k];
        }
      }
    }
  });
  return Tensor(out);
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw std::invalid_argument("bmm: need (B,M,K)x(B,K,N), got " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
  auto an = a.node(), bn = b.node();
  auto out = make_node({B, M, N});
  for (int bi = 0; bi < B; ++bi) {
    const double* ab = an->val.data() + static_cast<std::size_t>(bi) * M * K;
    const double* bb = bn->val.data() + static_cast<std::size_t>(bi) * K * N;
    double* ob = out->val.data() + static_cast<std::size_t>(bi) * M * N;
    for (int i = 0; i < M; ++i) {
      for (int k = 0; k < K; ++k) {
        const double av = ab[static_cast<std::size_t>(i) * K + k];
        const double* brow = bb + static_cast<std::size_t>(k) * N;
        double* orow = ob + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j) orow[j] += av * brow[j];
      }
    }
  }
  attach(out, {an, bn}, [an, bn, B, M, K, N](Node& self) {
    for (int bi = 0; bi < B; ++bi) {
      const double* ab = an->val.data() + static_cast<std::size_t>(bi) * M * K;
      const double* bb = bn->val.data() + static_cast<std::size_t>(bi) * K * N;
      const double* gb = self.grad.data() + static_cast<std::size_t>(bi) * M * N;
      if (an->requires_grad) {
        double* gab = an->grad.data() + static_cast<std::size_t>(bi) * M * K;
        for (int i = 0; i < M; ++i) {
          const double* grow = gb + static_cast<std::size_t>(i) * N;
          for (int k = 0; k < K; ++k) {
            const double* brow = bb + static_cast<std::size_t>(k) * N;
            double acc = 0.0;
            for (int j = 0; j < N; ++j) acc += grow[j] * brow[j];
            gab[static_cast<std::size_t>(i) * K + k] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        double* gbb = bn->grad.data() + static_cast<std::size_t>(bi) * K * N;
        for (int i = 0; i < M; ++i) {
          const double* grow = gb + static_cast<std::size_t>(i) * N;
          const double* arow = ab + static_cast<std::size_t>(i) * K;
          for (int k = 0; k < K; ++k) {
            double* gbrow = gbb + static_cast<std::size_t>(k) * N;
            const double av = arow[k];
            for (int j = 0; j < N; ++j) gbrow[j] += av * grow[j];
          }
        }
      }
    }
  });
  return Tensor(out);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.ndim() != 2) throw std::invalid_argument("linear: weight must be (Out,K)");
  const int K = w.dim(1), O = w.dim(0);
  if (x.dim(x.ndim() - 1) != K)
    throw std::invalid_argument("linear: input last dim " + shape_str(x.shape()) +
                                " does not match weight " + shape_str(w.shape()));
  if (b.defined() && b.numel() != O) throw std::invalid_argument("linear: bias size mismatch");
  const std::int64_t M = x.numel() / K;
  auto xn = x.node(), wn = w.node();
  NodePtr bn = b.defined() ? b.node() : nullptr;

  Shape os = x.shape();
  os.back() = O;
  auto out = make_node(os);
  for (std::int64_t i = 0; i < M; ++i) {
    const double* xrow = xn->val.data() + i * K;
    double* orow = out->val.data() + i * O;
    for (int o = 0; o < O; ++o) {
      const double* wrow = wn->val.data() + static_cast<std::size_t>(o) * K;
      double acc = bn ? bn->val[static_cast<std::size_t>(o)] : 0.0;
      for (int k = 0; k < K; ++k) acc += xrow[k] * wrow[k];
      orow[o] = acc;
    }
  }
  attach(out, {xn, wn, bn}, [xn, wn, bn, M, K, O](Node& self) {
    for (std::int64_t i = 0; i < M; ++i) {
      const double* grow = self.grad.data() + i * O;
      const double* xrow = xn->val.data() + i * K;
      for (int o = 0; o < O; ++o) {
        const double g = grow[o];
        if (g == 0.0) continue;
        if (bn && bn->requires_grad) bn->grad[static_cast<std::size_t>(o)] += g;
        const double* wrow = wn->val.data() + static_cast<std::size_t>(o) * K;
        if (xn->requires_grad) {
          double* gxrow = xn->grad.data() + i * K;
          for (int k = 0; k < K; ++k) gxrow[k] += g * wrow[k];
        }
        if (wn->requires_grad) {
          double* gwrow = wn->grad.data() + static_cast<std::size_t>(o) * K;
          for (int k = 0; k < K; ++k) gwrow[k] += g * xrow[k];
        }
      }
    }
  });
  return Tensor(out);
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  if (x.ndim() != 3 || w.ndim() != 3 || x.dim(1) != w.dim(1))
    throw std::invalid_argument("conv1d: need x(N,Ci,L), w(Co,Ci,K); got " +
                                shape_str(x.shape()) + ", " + shape_str(w.shape()));
  const int N = x.dim(0), Ci = x.dim(1), L = x.dim(2);
  const int Co = w.dim(0), K = w.dim(2);
  if (b.defined() && b.numel() != Co) throw std::invalid_argument("conv1d: bias size mismatch");
  const int Lo = (L + 2 * pad - K) / stride + 1;
  if (Lo <= 0) throw std::invalid_argument("conv1d: output length would be non-positive");

  auto xn = x.node(), wn = w.node();
  NodePtr bn = b.defined() ? b.node() : nullptr;
  auto out = make_node({N, Co, Lo});

  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Co; ++co) {
      double* orow = out->val.data() + (static_cast<std::size_t>(n) * Co + co) * Lo;
      if (bn) {
        const double bv = bn->val[static_cast<std::size_t>(co)];
        for (int t = 0; t < Lo; ++t) orow[t] = bv;
      }
      for (int ci = 0; ci < Ci; ++ci) {
        const double* xrow = xn->val.data() + (static_cast<std::size_t>(n) * Ci + ci) * L;
        const double* wrow = wn->val.data() + (static_cast<std::size_t>(co) * Ci + ci) * K;
        for (int k = 0; k < K; ++k) {
          const double wv = wrow[k];
          const int off = k - pad;
          // valid t: 0 <= t*stride + off <= L-1
          int t0 = off < 0 ? (-off + stride - 1) / stride : 0;
          int t1 = (L - 1 - off) / stride;
          if (t1 > Lo - 1) t1 = Lo - 1;
          const double* xs = xrow + off;
          if (stride == 1) {
            for (int t = t0; t <= t1; ++t) orow[t] += wv * xs[t];
          } else {
            for (int t = t0; t <= t1; ++t) orow[t] += wv * xs[static_cast<std::size_t>(t) * stride];
          }
        }
      }
    }
  }
  attach(out, {xn, wn, bn}, [xn, wn, bn, N, Ci, L, Co, K, Lo, stride, pad](Node& self) {
    for (int n = 0; n < N; ++n) {
      for (int co = 0; co < Co; ++co) {
        const double* grow = self.grad.data() + (static_cast<std::size_t>(n) * Co + co) * Lo;
        if (bn && bn->requires_grad) {
          double acc = 0.0;
          for (int t = 0; t < Lo; ++t) acc += grow[t];
          bn->grad[static_cast<std::size_t>(co)] += acc;
        }
        for (int ci = 0; ci < Ci; ++ci) {
          const double* xrow = xn->val.data() + (static_cast<std::size_t>(n) * Ci + ci) * L;
          const double* wrow = wn->val.data() + (static_cast<std::size_t>(co) * Ci + ci) * K;
          double* gxrow =
              xn->requires_grad ? xn->grad.data() + (static_cast<std::size_t>(n) * Ci + ci) * L
                                : nullptr;
          double* gwrow =
              wn->requires_grad ? wn->grad.data() + (static_cast<std::size_t>(co) * Ci + ci) * K
                                : nullptr;
          for (int k = 0; k < K; ++k) {
            const int off = k - pad;
            int t0 = off < 0 ? (-off + stride - 1) / stride : 0;
            int t1 = (L - 1 - off) / stride;
            if (t1 > Lo - 1) t1 = Lo - 1;
            if (gxrow) {
              const double wv = wrow[k];
              double* gxs = gxrow + off;
              if (stride == 1) {
                for (int t = t0; t <= t1; ++t) gxs[t] += wv * grow[t];
              } else {
                for (int t = t0; t <= t1; ++t)
                  gxs[static_cast<std::size_t>(t) * stride] += wv * grow[t];
              }
            }
            if (gwrow) {
              const double* xs = xrow + off;
              double acc = 0.0;
              if (stride == 1) {
                for (int t = t0; t <= t1; ++t) acc += xs[t] * grow[t];
              } else {
                for (int t = t0; t <= t1; ++t)
                  acc += xs[static_cast<std::size_t>(t) * stride] * grow[t];
              }
              gwrow[k] += acc;
            }
          }
        }
      }
    }
  });
  return Tensor(out);
}

Tensor conv1d_transpose(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  if (x.ndim() != 3 || w.ndim() != 3 || x.dim(1) != w.dim(0))
    throw std::invalid_argument("conv1d_transpose: need x(N,Ci,L), w(Ci,Co,K); got " +
                                shape_str(x.shape()) + ", " + shape_str(w.shape()));
  const int N = x.dim(0), Ci = x.dim(1), L = x.dim(2);
  const int Co = w.dim(1), K = w.dim(2);
  if (b.defined() && b.numel() != Co)
    throw std::invalid_argument("conv1d_transpose: bias size mismatch");
  const int Lo = (L - 1) * stride - 2 * pad + K;
  if (Lo <= 0) throw std::invalid_argument("conv1d_transpose: output length would be non-positive");

  auto xn = x.node(), wn = w.node();
  NodePtr bn = b.defined() ? b.node() : nullptr;
  auto out = make_node({N, Co, Lo});

  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Co; ++co) {
      if (!bn) continue;
      double* orow = out->val.data() + (static_cast<std::size_t>(n) * Co + co) * Lo;
      const double bv = bn->val[static_cast<std::size_t>(co)];
      for (int t = 0; t < Lo; ++t) orow[t] = bv;
    }
    for (int ci = 0; ci < Ci; ++ci) {
      const double* xrow = xn->val.data() + (static_cast<std::size_t>(n) * Ci + ci) * L;
      for (int co = 0; co < Co; ++co) {
        double* orow = out->val.data() + (static_cast<std::size_t>(n) * Co + co) * Lo;
        const double* wrow = wn->val.data() + (static_cast<std::size_t>(ci) * Co + co) * K;
        for (int k = 0; k < K; ++k) {
          const double wv = wrow[k];
          const int off = k - pad;
          int t0 = off < 0 ? (-off + stride - 1) / stride : 0;
          int t1 = (Lo - 1 - off) / stride;
          if (t1 > L - 1) t1 = L - 1;
          double* os = orow + off;
          if (stride == 1) {
            for (int t = t0; t <= t1; ++t) os[t] += wv * xrow[t];
          } else {
            for (int t = t0; t <= t1; ++t) os[static_cast<std::size_t>(t) * stride] += wv * xrow[t];
          }
        }
      }
    }
  }
  attach(out, {xn, wn, bn}, [xn, wn, bn, N, Ci, L, Co, K, Lo, stride, pad](Node& self) {
    for (int n = 0; n < N; ++n) {
      if (bn && bn->requires_grad) {
        for (int co = 0; co < Co; ++co) {
          const double* grow = self.grad.data() + (static_cast<std::size_t>(n) * Co + co) * Lo;
          double acc = 0.0;
          for (int t = 0; t < Lo; ++t) acc += grow[t];
          bn->grad[static_cast<std::size_t>(co)] += acc;
        }
      }
      for (int ci = 0; ci < Ci; ++ci) {
        const double* xrow = xn->val.data() + (static_cast<std::size_t>(n) * Ci + ci) * L;
        double* gxrow =
            xn->requires_grad ? xn->grad.data() + (static_cast<std::size_t>(n) * Ci + ci) * L
                              : nullptr;
        for (int co = 0; co < Co; ++co) {
          const double* grow = self.grad.data() + (static_cast<std::size_t>(n) * Co + co) * Lo;
          const double* wrow = wn->val.data() + (static_cast<std::size_t>(ci) * Co + co) * K;
          double* gwrow =
              wn->requires_grad ? wn->grad.data() + (static_cast<std::size_t>(ci) * Co + co) * K
                                : nullptr;
          for (int k = 0; k < K; ++k) {
            const int off = k - pad;
            int t0 = off < 0 ? (-off + stride - 1) / stride : 0;
            int t1 = (Lo - 1 - off) / stride;
            if (t1 > L - 1) t1 = L - 1;
            const double* gs = grow + off;
            if (gxrow) {
              const double wv = wrow[k];
              if (stride == 1) {
                for (int t = t0; t <= t1; ++t) gxrow[t] += wv * gs[t];
              } else {
                for (int t = t0; t <= t1; ++t)
                  gxrow[t] += wv * gs[static_cast<std::size_t>(t) * stride];
              }
            }
            if (gwrow) {
              double acc = 0.0;
              if (stride == 1) {
                for (int t = t0; t <= t1; ++t) acc += xrow[t] * gs[t];
              } else {
                for (int t = t0; t <= t1; ++t)
                  acc += xrow[t] * gs[static_cast<std::size_t>(t) * stride];
              }
              gwrow[k] += acc;
            }
          }
        }
      }
    }
  });
  return Tensor(out);
}

Tensor maxpool1d(const Tensor& x, int k, int stride) {
  if (x.ndim() != 3) throw std::invalid_argument("maxpool1d: need (N,C,L)");
  const int N = x.dim(0), C = x.dim(1), L = x.dim(2);
  const int Lo = (L - k) / stride + 1;
  if (Lo <= 0) throw std::invalid_argument("maxpool1d: output length would be non-positive");
  auto xn = x.node();
  auto out = make_node({N, C, Lo});
  auto argmax = std::make_shared<std::vector<int>>(out->val.size());
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(N) * C; ++r) {
    const double* xrow = xn->val.data() + r * L;
    double* orow = out->val.data() + r * Lo;
    int* arow = argmax->data() + r * Lo;
    for (int t = 0; t < Lo; ++t) {
      int best = t * stride;
      double bv = xrow[best];
      for (int j = 1; j < k; ++j) {
        const int idx = t * stride + j;
        if (xrow[idx] > bv) {
          bv = xrow[idx];
          best = idx;
        }
      }
      orow[t] = bv;
      arow[t] = best;
    }
  }
  attach(out, {xn}, [xn, argmax, N, C, L, Lo](Node& self) {
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(N) * C; ++r) {
      const double* grow = self.grad.data() + r * Lo;
      const int* arow = argmax->data() + r * Lo;
      double* gxrow = xn->grad.data() + r * L;
      for (int t = 0; t < Lo; ++t) gxrow[arow[t]] += grow[t];
    }
  });
  return Tensor(out);
}

Tensor upsample_nearest2(const Tensor& x) {
  if (x.ndim() != 3) throw std::invalid_argument("upsample: need (N,C,L)");
  const int N = x.dim(0), C = x.dim(1), L = x.dim(2);
  auto xn = x.node();
  auto out = make_node({N, C, 2 * L});
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(N) * C; ++r) {
    const double* xrow = xn->val.data() + r * L;
    double* orow = out->val.data() + r * 2 * L;
    for (int t = 0; t < L; ++t) {
      orow[2 * t] = xrow[t];
      orow[2 * t + 1] = xrow[t];
    }
  }
  attach(out, {xn}, [xn, N, C, L](Node& self) {
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(N) * C; ++r) {
      const double* grow = self.grad.data() + r * 2 * L;
      double* gxrow = xn->grad.data() + r * L;
      for (int t = 0; t < L; ++t) gxrow[t] += grow[2 * t] + grow[2 * t + 1];
    }
  });
  return Tensor(out);
}

Tensor upsample_linear2(const Tensor& x) {
  if (x.ndim() != 3) throw std::invalid_argument("upsample: need (N,C,L)");
  const int N = x.dim(0), C = x.dim(1), L = x.dim(2);
  auto xn = x.node();
  auto out = make_node({N, C, 2 * L});
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(N) * C; ++r) {
    const double* xrow = xn->val.data() + r * L;
    double* orow = out->val.data() + r * 2 * L;
    for (int t = 0; t < L; ++t) {
      const int t1 = t + 1 < L ? t + 1 : L - 1;
      orow[2 * t] = xrow[t];
      orow[2 * t + 1] = 0.5 * (xrow[t] + xrow[t1]);
    }
  }
  attach(out, {xn}, [xn, N, C, L](Node& self) {
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(N) * C; ++r) {
      const double* grow = self.grad.data() + r * 2 * L;
      double* gxrow = xn->grad.data() + r * L;
      for (int t = 0; t < L; ++t) {
        const int t1 = t + 1 < L ? t + 1 : L - 1;
        gxrow[t] += grow[2 * t] + 0.5 * grow[2 * t + 1];
        gxrow[t1] += 0.5 * grow[2 * t + 1];
      }
    }
  });
  return Tensor(out);
}

Tensor instance_norm_lastdim(const Tensor& x, double eps) {
  return norm_lastdim(x, nullptr, nullptr, eps);
}

Tensor adain(const Tensor& z, const Tensor& gamma, const Tensor& beta, double eps) {
  return norm_lastdim(z, &gamma, &beta, eps);
}

Tensor layer_norm_lastdim(const Tensor& x, double eps) {
  return norm_lastdim(x, nullptr, nullptr, eps);
}

Tensor softmax_lastdim(const Tensor& x) {
  const int L = x.dim(x.ndim() - 1);
  const std::int64_t rows = x.numel() / L;
  auto xn = x.node();
  auto out = make_node(xn->shape);
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = xn->val.data() + r * L;
    double* yr = out->val.data() + r * L;
    double mx = xr[0];
    for (int l = 1; l < L; ++l) mx = std::max(mx, xr[l]);
    double s = 0.0;
    for (int l = 0; l < L; ++l) {
      yr[l] = std::exp(xr[l] - mx);
      s += yr[l];
    }
    const double inv = 1.0 / s;
    for (int l = 0; l < L; ++l) yr[l] *= inv;
  }
  attach(out, {xn}, [xn, rows, L](Node& self) {
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* yr = self.val.data() + r * L;
      const double* gr = self.grad.data() + r * L;
      double dot = 0.0;
      for (int l = 0; l < L; ++l) dot += yr[l] * gr[l];
      double* gx = xn->grad.data() + r * L;
      for (int l = 0; l < L; ++l) gx[l] += yr[l] * (gr[l] - dot);
    }
  });
  return Tensor(out);
}

Tensor sum_all(const Tensor& x) {
  auto xn = x.node();
  auto out = make_node({1});
  double s = 0.0;
  for (double v : xn->val) s += v;
  out->val[0] = s;
  attach(out, {xn}, [xn](Node& self) {
    const double g = self.grad[0];
    for (auto& gv : xn->grad) gv += g;
  });
  return Tensor(out);
}

Tensor mean_all(const Tensor& x) {
  auto xn = x.node();
  auto out = make_node({1});
  double s = 0.0;
  for (double v : xn->val) s += v;
  const double inv = 1.0 / static_cast<double>(xn->val.size());
  out->val[0] = s * inv;
  attach(out, {xn}, [xn, inv](Node& self) {
    const double g = self.grad[0] * inv;
    for (auto& gv : xn->grad) gv += g;
  });
  return Tensor(out);
}

Tensor sum_lastdim(const Tensor& x) {
  const int L = x.dim(x.ndim() - 1);
  const std::int64_t rows = x.numel() / L;
  auto xn = x.node();
  Shape os = x.shape();
  os.back() = 1;
  auto out = make_node(os);
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = xn->val.data() + r * L;
    double s = 0.0;
    for (int l = 0; l < L; ++l) s += xr[l];
    out->val[static_cast<std::size_t>(r)] = s;
  }
  attach(out, {xn}, [xn, rows, L](Node& self) {
    for (std::int64_t r = 0; r < rows; ++r) {
      const double g = self.grad[static_cast<std::size_t>(r)];
      double* gx = xn->grad.data() + r * L;
      for (int l = 0; l < L; ++l) gx[l] += g;
    }
  });
  return Tensor(out);
}

Tensor mean_lastdim(const Tensor& x) {
  const int L = x.dim(x.ndim() - 1);
  return mul_scalar(sum_lastdim(x), 1.0 / L);
}

Tensor std_lastdim(const Tensor& x) {
  Tensor centered = sub(x, mean_lastdim(x));
  return sqrt_t(mean_lastdim(square(centered)));
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw std::invalid_argument("mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                shape_str(target.shape()));
  return mean_all(square(sub(pred, target)));
}

Tensor mae_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw std::invalid_argument("mae_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                shape_str(target.shape()));
  return mean_all(abs_t(sub(pred, target)));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw std::invalid_argument("reshape: element count mismatch " + shape_str(x.shape()) +
                                " -> " + shape_str(shape));
  auto xn = x.node();
  auto out = std::make_shared<Node>();
  out->shape = std::move(shape);
  out->val = xn->val;
  attach(out, {xn}, [xn](Node& self) {
    const auto n = self.val.size();
    for (std::size_t i = 0; i < n; ++i) xn->grad[i] += self.grad[i];
  });
  return Tensor(out);
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat: empty input list");
  const int nd = xs[0].ndim();
  if (axis < 0 || axis >= nd) throw std::invalid_argument("concat: bad axis");
  Shape os = xs[0].shape();
  int total_axis = 0;
  for (const auto& t : xs) {
    if (t.ndim() != nd) throw std::invalid_argument("concat: rank mismatch");
    for (int d = 0; d < nd; ++d) {
      if (d != axis && t.dim(d) != os[static_cast<std::size_t>(d)])
        throw std::invalid_argument("concat: shape mismatch on non-axis dim");
    }
    total_axis += t.dim(axis);
  }
  os[static_cast<std::size_t>(axis)] = total_axis;

  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= os[static_cast<std::size_t>(d)];
  for (int d = axis + 1; d < nd; ++d) inner *= os[static_cast<std::size_t>(d)];

  auto out = make_node(os);
  std::vector<NodePtr> parents;
  std::vector<std::int64_t> blocks;
  for (const auto& t : xs) {
    parents.push_back(t.node());
    blocks.push_back(static_cast<std::int64_t>(t.dim(axis)) * inner);
  }
  const std::int64_t ostride = static_cast<std::int64_t>(total_axis) * inner;
  std::int64_t boff = 0;
  for (std::size_t pi = 0; pi < parents.size(); ++pi) {
    const auto& pv = parents[pi]->val;
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * blocks[pi], blocks[pi], out->val.data() + o * ostride + boff);
    }
    boff += blocks[pi];
  }

  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (any) {
    out->requires_grad = true;
    for (const auto& p : parents)
      if (p->requires_grad) out->parents.push_back(p);
    out->backward_fn = [parents, blocks, outer, ostride](Node& self) {
      std::int64_t off = 0;
      for (std::size_t pi = 0; pi < parents.size(); ++pi) {
        if (parents[pi]->requires_grad) {
          for (std::int64_t o = 0; o < outer; ++o) {
            const double* g = self.grad.data() + o * ostride + off;
            double* pg = parents[pi]->grad.data() + o * blocks[pi];
            for (std::int64_t i = 0; i < blocks[pi]; ++i) pg[i] += g[i];
          }
        }
        off += blocks[pi];
      }
    };
  }
  return Tensor(out);
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
  const int nd = x.ndim();
  if (axis < 0 || axis >= nd) throw std::invalid_argument("slice: bad axis");
  if (start < 0 || len <= 0 || start + len > x.dim(axis))
    throw std::invalid_argument("slice: range out of bounds");
  Shape os = x.shape();
  os[static_cast<std::size_t>(axis)] = len;
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < nd; ++d) inner *= x.dim(d);
  const std::int64_t xstride = static_cast<std::int64_t>(x.dim(axis)) * inner;
  const std::int64_t ostride = static_cast<std::int64_t>(len) * inner;
  auto xn = x.node();
  auto out = make_node(os);
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy_n(xn->val.data() + o * xstride + static_cast<std::int64_t>(start) * inner, ostride,
                out->val.data() + o * ostride);
  }
  attach(out, {xn}, [xn, outer, inner, xstride, ostride, start](Node& self) {
    for (std::int64_t o = 0; o < outer; ++o) {
      const double* g = self.grad.data() + o * ostride;
      double* gx = xn->grad.data() + o * xstride + static_cast<std::int64_t>(start) * inner;
      for (std::int64_t i = 0; i < ostride; ++i) gx[i] += g[i];
    }
  });
  return Tensor(out);
}

Tensor transpose12(const Tensor& x) {
  if (x.ndim() != 3) throw std::invalid_argument("transpose12: need 3-D input");
  const int A = x.dim(0), B = x.dim(1), C = x.dim(2);
  auto xn = x.node();
  auto out = make_node({A, C, B});
  for (int a = 0; a < A; ++a) {
    const double* xa = xn->val.data() + static_cast<std::size_t>(a) * B * C;
    double* oa = out->val.data() + static_cast<std::size_t>(a) * B * C;
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c)
        oa[static_cast<std::size_t>(c) * B + b] = xa[static_cast<std::size_t>(b) * C + c];
  }
  attach(out, {xn}, [xn, A, B, C](Node& self) {
    for (int a = 0; a < A; ++a) {
      const double* ga = self.grad.data() + static_cast<std::size_t>(a) * B * C;
      double* gxa = xn->grad.data() + static_cast<std::size_t>(a) * B * C;
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
          gxa[static_cast<std::size_t>(b) * C + c] += ga[static_cast<std::size_t>(c) * B + b];
    }
  });
  return Tensor(out);
}

Tensor roll_lastdim(const Tensor& x, int shift) {
  const int L = x.dim(x.ndim() - 1);
  const std::int64_t rows = x.numel() / L;
  int s = ((shift % L) + L) % L;
  auto xn = x.node();
  auto out = make_node(xn->shape);
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = xn->val.data() + r * L;
    double* yr = out->val.data() + r * L;
    for (int l = 0; l < L; ++l) yr[(l + s) % L] = xr[l];
  }
  attach(out, {xn}, [xn, rows, L, s](Node& self) {
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* gr = self.grad.data() + r * L;
      double* gx = xn->grad.data() + r * L;
      for (int l = 0; l < L; ++l) gx[l] += gr[(l + s) % L];
    }
  });
  return Tensor(out);
}

Tensor heads_split_windows(const Tensor& x, int heads, int window) {
  if (x.ndim() != 3) throw std::invalid_argument("heads_split_windows: need (N,E,T)");
  const int N = x.dim(0), E = x.dim(1), T = x.dim(2);
  if (E % heads != 0) throw std::invalid_argument("heads_split_windows: E not divisible by heads");
  if (T % window != 0)
    throw std::invalid_argument("heads_split_windows: T not divisible by window");
  const int hd = E / heads, nW = T / window;
  auto xn = x.node();
  auto out = make_node({N * nW * heads, window, hd});
  for (int n = 0; n < N; ++n)
    for (int h = 0; h < heads; ++h)
      for (int d = 0; d < hd; ++d) {
        const double* xr =
            xn->val.data() + ((static_cast<std::size_t>(n) * E) + h * hd + d) * T;
        for (int iw = 0; iw < nW; ++iw) {
          double* orow =
              out->val.data() +
              ((static_cast<std::size_t>((n * nW + iw)) * heads + h) * window) * hd + d;
          for (int j = 0; j < window; ++j) orow[static_cast<std::size_t>(j) * hd] = xr[iw * window + j];
        }
      }
  attach(out, {xn}, [xn, N, E, T, heads, window, hd, nW](Node& self) {
    for (int n = 0; n < N; ++n)
      for (int h = 0; h < heads; ++h)
        for (int d = 0; d < hd; ++d) {
          double* gx = xn->grad.data() + ((static_cast<std::size_t>(n) * E) + h * hd + d) * T;
          for (int iw = 0; iw < nW; ++iw) {
            const double* grow =
                self.grad.data() +
                ((static_cast<std::size_t>((n * nW + iw)) * heads + h) * window) * hd + d;
            for (int j = 0; j < window; ++j) gx[iw * window + j] += grow[static_cast<std::size_t>(j) * hd];
          }
        }
  });
  return Tensor(out);
}

Tensor heads_merge_windows(const Tensor& x, int n_batch, int heads, int window) {
  if (x.ndim() != 3 || x.dim(1) != window)
    throw std::invalid_argument("heads_merge_windows: need (B',w,hd)");
  const int Bp = x.dim(0), hd = x.dim(2);
  if (Bp % (n_batch * heads) != 0)
    throw std::invalid_argument("heads_merge_windows: batch layout mismatch");
  const int nW = Bp / (n_batch * heads);
  const int E = heads * hd, T = nW * window;
  auto xn = x.node();
  auto out = make_node({n_batch, E, T});
  for (int n = 0; n < n_batch; ++n)
    for (int h = 0; h < heads; ++h)
      for (int d = 0; d < hd; ++d) {
        double* orow = out->val.data() + ((static_cast<std::size_t>(n) * E) + h * hd + d) * T;
        for (int iw = 0; iw < nW; ++iw) {
          const double* xr =
              xn->val.data() +
              ((static_cast<std::size_t>((n * nW + iw)) * heads + h) * window) * hd + d;
          for (int j = 0; j < window; ++j) orow[iw * window + j] = xr[static_cast<std::size_t>(j) * hd];
        }
      }
  attach(out, {xn}, [xn, n_batch, heads, window, hd, nW](Node& self) {
    const int E = heads * hd, T = nW * window;
    for (int n = 0; n < n_batch; ++n)
      for (int h = 0; h < heads; ++h)
        for (int d = 0; d < hd; ++d) {
          const double* grow =
              self.grad.data() + ((static_cast<std::size_t>(n) * E) + h * hd + d) * T;
          for (int iw = 0; iw < nW; ++iw) {
            double* gx = xn->grad.data() +
                         ((static_cast<std::size_t>((n * nW + iw)) * heads + h) * window) * hd + d;
            for (int j = 0; j < window; ++j) gx[static_cast<std::size_t>(j) * hd] += grow[iw * window + j];
          }
        }
  });
  return Tensor(out);
}

Tensor add_window_bias(const Tensor& scores, const Tensor& mask, const Tensor& bias,
                       int n_windows, int heads) {
  if (scores.ndim() != 3) throw std::invalid_argument("add_window_bias: need (B',w,w)");
  const int Bp = scores.dim(0), w = scores.dim(1);
  if (scores.dim(2) != w) throw std::invalid_argument("add_window_bias: scores must be square");
  if (Bp % (n_windows * heads) != 0)
    throw std::invalid_argument("add_window_bias: batch layout mismatch");
  const std::int64_t ww = static_cast<std::int64_t>(w) * w;
  auto sn = scores.node();
  NodePtr mn = mask.defined() ? mask.node() : nullptr;
  NodePtr bn = bias.defined() ? bias.node() : nullptr;
  if (mn && mn->val.size() != static_cast<std::size_t>(n_windows * ww))
    throw std::invalid_argument("add_window_bias: mask must be (nW,w,w)");
  if (bn && bn->val.size() != static_cast<std::size_t>(heads * ww))
    throw std::invalid_argument("add_window_bias: bias must be (H,w,w)");

  auto out = make_node(sn->shape);
  for (int b = 0; b < Bp; ++b) {
    const int iw = (b / heads) % n_windows;
    const int h = b % heads;
    const double* s = sn->val.data() + b * ww;
    const double* m = mn ? mn->val.data() + iw * ww : nullptr;
    const double* bb = bn ? bn->val.data() + h * ww : nullptr;
    double* o = out->val.data() + b * ww;
    for (std::int64_t i = 0; i < ww; ++i) o[i] = s[i] + (m ? m[i] : 0.0) + (bb ? bb[i] : 0.0);
  }
  attach(out, {sn, mn, bn}, [sn, mn, bn, Bp, heads, n_windows, ww](Node& self) {
    for (int b = 0; b < Bp; ++b) {
      const int h = b % heads;
      const double* g = self.grad.data() + b * ww;
      if (sn->requires_grad) {
        double* gs = sn->grad.data() + b * ww;
        for (std::int64_t i = 0; i < ww; ++i) gs[i] += g[i];
      }
      if (bn && bn->requires_grad) {
        double* gb = bn->grad.data() + h * ww;
        for (std::int64_t i = 0; i < ww; ++i) gb[i] += g[i];
      }
    }
    (void)mn;
    (void)n_windows;
  });
  return Tensor(out);
}

Tensor sdpa(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& add_mask) {
  if (q.ndim() != 3 || k.ndim() != 3 || v.ndim() != 3)
    throw std::invalid_argument("sdpa: need (B,T,D) inputs");
  const int D = q.dim(2);
  Tensor scores = bmm(q, transpose12(k));
  scores = mul_scalar(scores, 1.0 / std::sqrt(static_cast<double>(D)));
  if (add_mask.defined()) scores = add(scores, add_mask);
  Tensor attn = softmax_lastdim(scores);
  return bmm(attn, v);
}

Tensor dropout(const Tensor& x, double p, bool train, Rng& rng) {
  if (!train || p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  auto xn = x.node();
  auto out = make_node(xn->shape);
  auto mask = std::make_shared<std::vector<double>>(xn->val.size());
  const double scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < xn->val.size(); ++i) {
    const double m = rng.uniform() < p ? 0.0 : scale;
    (*mask)[i] = m;
    out->val[i] = xn->val[i] * m;
  }
  attach(out, {xn}, [xn, mask](Node& self) {
    for (std::size_t i = 0; i < self.val.size(); ++i) xn->grad[i] += self.grad[i] * (*mask)[i];
  });
  return Tensor(out);
}

Tensor embedding_mean(const Tensor& table, const std::vector<std::vector<int>>& tokens) {
  if (table.ndim() != 2) throw std::invalid_argument("embedding_mean: table must be (V,D)");
  const int V = table.dim(0), D = table.dim(1);
  const int N = static_cast<int>(tokens.size());
  auto tn = table.node();
  auto out = make_node({N, D});
  for (int i = 0; i < N; ++i) {
    double* orow = out->val.data() + static_cast<std::size_t>(i) * D;
    if (tokens[static_cast<std::size_t>(i)].empty()) continue;
    for (int id : tokens[static_cast<std::size_t>(i)]) {
      if (id < 0 || id >= V) throw std::invalid_argument("embedding_mean: token id out of range");
      const double* trow = tn->val.data() + static_cast<std::size_t>(id) * D;
      for (int d = 0; d < D; ++d) orow[d] += trow[d];
    }
    const double inv = 1.0 / static_cast<double>(tokens[static_cast<std::size_t>(i)].size());
    for (int d = 0; d < D; ++d) orow[d] *= inv;
  }
  auto toks = std::make_shared<std::vector<std::vector<int>>>(tokens);
  attach(out, {tn}, [tn, toks, D](Node& self) {
    for (std::size_t i = 0; i < toks->size(); ++i) {
      if ((*toks)[i].empty()) continue;
      const double inv = 1.0 / static_cast<double>((*toks)[i].size());
      const double* grow = self.grad.data() + i * D;
      for (int id : (*toks)[i]) {
        double* gt = tn->grad.data() + static_cast<std::size_t>(id) * D;
        for (int d = 0; d < D; ++d) gt[d] += grow[d] * inv;
      }
    }
  });
  return Tensor(out);
}

}  // namespace vsc
