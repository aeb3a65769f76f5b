#include "vsc/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace vsc {

Tensor ParamStore::create(const std::string& name, Shape shape, double bound, Rng& rng) {
  if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  Tensor t = Tensor::uniform(std::move(shape), bound, rng, /*requires_grad=*/true);
  t.set_name(name);
  index_[name] = params_.size();
  params_.push_back(t);
  return t;
}

Tensor* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

std::int64_t ParamStore::value_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

void ParamStore::load_values(const std::unordered_map<std::string, std::vector<double>>& values) {
  for (const auto& [name, vals] : values) {
    auto it = index_.find(name);
    if (it == index_.end())
      throw std::invalid_argument("ParamStore: unknown parameter in checkpoint: " + name);
    Tensor& p = params_[it->second];
    if (p.data().size() != vals.size())
      throw std::invalid_argument("ParamStore: size mismatch for " + name);
    p.data() = vals;
  }
}

std::unordered_map<std::string, std::vector<double>> ParamStore::snapshot() const {
  std::unordered_map<std::string, std::vector<double>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace(p.name(), p.data());
  return out;
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params.all()) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& p : const_cast<std::vector<Tensor>&>(params.all())) {
      if (!p.has_grad()) continue;
      auto& g = const_cast<std::vector<double>&>(p.grad());
      for (auto& v : g) v *= scale;
    }
  }
  return norm;
}

void Adam::step(ParamStore& params) {
  const auto& ps = params.all();
  if (state_.size() < ps.size()) state_.resize(ps.size());
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Tensor p = ps[i];
    auto& vals = p.data();
    auto& st = state_[i];
    if (st.m.empty()) {
      st.m.assign(vals.size(), 0.0);
      st.v.assign(vals.size(), 0.0);
    }
    if (st.m.size() != vals.size())
      throw std::invalid_argument("Adam: state/parameter shape mismatch for " + p.name());
    const std::vector<double>* grad = p.has_grad() ? &p.grad() : nullptr;
    if (grad && grad->size() != vals.size())
      throw std::invalid_argument("Adam: gradient shape mismatch for " + p.name());
    for (std::size_t j = 0; j < vals.size(); ++j) {
      const double g = grad ? (*grad)[j] : 0.0;
      st.m[j] = cfg_.beta1 * st.m[j] + (1.0 - cfg_.beta1) * g;
      st.v[j] = cfg_.beta2 * st.v[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = st.m[j] / bc1;
      const double vhat = st.v[j] / bc2;
      vals[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace vsc
