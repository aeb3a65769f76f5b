#pragma once

#include <cmath>
#include <string>

#include "vsc/optim.hpp"
#include "vsc/tensor.hpp"

namespace vsc {

// Thin layer wrappers that register their parameters in a ParamStore.
// Weights use uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); biases start at zero.

struct Conv1dLayer {
  Tensor w, b;
  int stride = 1, pad = 0;

  static Conv1dLayer make(ParamStore& ps, const std::string& name, int ci, int co, int k,
                          int stride, int pad, Rng& rng) {
    Conv1dLayer l;
    l.w = ps.create(name + ".w", {co, ci, k}, 1.0 / std::sqrt(static_cast<double>(ci * k)), rng);
    l.b = ps.create(name + ".b", {co}, 0.0, rng);
    l.stride = stride;
    l.pad = pad;
    return l;
  }

  Tensor operator()(const Tensor& x) const { return conv1d(x, w, b, stride, pad); }
};

struct ConvT1dLayer {
  Tensor w, b;
  int stride = 1, pad = 0;

  static ConvT1dLayer make(ParamStore& ps, const std::string& name, int ci, int co, int k,
                           int stride, int pad, Rng& rng) {
    ConvT1dLayer l;
    l.w = ps.create(name + ".w", {ci, co, k}, 1.0 / std::sqrt(static_cast<double>(ci * k)), rng);
    l.b = ps.create(name + ".b", {co}, 0.0, rng);
    l.stride = stride;
    l.pad = pad;
    return l;
  }

  Tensor operator()(const Tensor& x) const { return conv1d_transpose(x, w, b, stride, pad); }
};

struct LinearLayer {
  Tensor w, b;

  static LinearLayer make(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
                          bool zero_init = false) {
    LinearLayer l;
    l.w = ps.create(name + ".w", {out, in},
                    zero_init ? 0.0 : 1.0 / std::sqrt(static_cast<double>(in)), rng);
    l.b = ps.create(name + ".b", {out}, 0.0, rng);
    return l;
  }

  Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
};

}  // namespace vsc
