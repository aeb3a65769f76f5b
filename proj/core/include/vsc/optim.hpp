#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vsc/rng.hpp"
#include "vsc/tensor.hpp"

namespace vsc {

// Named trainable tensors in registration order. Registration order is part
// of a model's identity: it fixes both the init stream and the Adam update
// order, which keeps training bit-reproducible.
class ParamStore {
 public:
  // Uniform init in [-bound, bound]; bound 0 gives zero init.
  Tensor create(const std::string& name, Shape shape, double bound, Rng& rng);

  Tensor* find(const std::string& name);
  const std::vector<Tensor>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::int64_t value_count() const;

  // Overwrites values from a name -> values map; throws on missing names or
  // shape mismatch. Unknown map entries are rejected.
  void load_values(const std::unordered_map<std::string, std::vector<double>>& values);
  std::unordered_map<std::string, std::vector<double>> snapshot() const;

 private:
  std::vector<Tensor> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Scales gradients in place so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_grad_norm(ParamStore& params, double max_norm);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update from the gradients currently stored on the params.
  // Parameters without gradients are treated as zero-gradient.
  void step(ParamStore& params);

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  std::int64_t steps_taken() const { return t_; }

 private:
  struct State {
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<State> state_;  // parallel to params in registration order
};

}  // namespace vsc
