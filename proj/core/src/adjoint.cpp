#include "apfit/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "apfit/error.hpp"

namespace apfit {

ParamRegistry::ParamRegistry(const ParamRegistry& other) {
  tensors_.reserve(other.tensors_.size());
  for (const auto& t : other.tensors_)
    tensors_.push_back(std::make_unique<ParamTensor>(*t));
}

ParamRegistry& ParamRegistry::operator=(const ParamRegistry& other) {
  if (this != &other) *this = ParamRegistry(other);
  return *this;
}

ParamId ParamRegistry::register_param(const std::string& name,
    const std::vector<std::size_t>& shape, const Initializer& init,
    bool learnable) {
  if (find(name).valid())
    throw std::invalid_argument("duplicate parameter name: " + name);
  if (shape.empty())
    throw std::invalid_argument("parameter " + name + " has an empty shape");
  std::size_t count = 1;
  for (auto e : shape) {
    if (e == 0)
      throw std::invalid_argument("parameter " + name + " has a zero extent");
    count *= e;
  }

  auto t       = std::make_unique<ParamTensor>();
  t->name      = name;
  t->shape     = shape;
  t->learnable = learnable;
  t->grad.assign(count, 0.0);
  switch (init.kind) {
    case Initializer::Kind::constant: t->values.assign(count, init.value); break;
    case Initializer::Kind::values:
      if (init.data.size() != count)
        throw std::invalid_argument("initializer for " + name +
                                    " does not match its shape");
      t->values = init.data;
      break;
    case Initializer::Kind::uniform: {
      std::mt19937_64                        rng(init.seed);
      std::uniform_real_distribution<double> dist(init.value, init.upper);
      t->values.resize(count);
      for (auto& v : t->values) v = dist(rng);
      break;
    }
  }
  tensors_.push_back(std::move(t));
  return {tensors_.size() - 1};
}

void ParamRegistry::zero_grads() {
  for (auto& t : tensors_) std::fill(t->grad.begin(), t->grad.end(), 0.0);
}

ParamId ParamRegistry::find(const std::string& name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (tensors_[i]->name == name) return {i};
  return {};
}

double FdCheckResult::fraction_within(double tolerance) const {
  if (errors.empty()) return 1.0;
  auto n = std::count_if(
      errors.begin(), errors.end(), [&](double e) { return e <= tolerance; });
  return static_cast<double>(n) / static_cast<double>(errors.size());
}

namespace {

double project(std::span<const double> out, std::span<const double> weights) {
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out[i]))
      throw Error("fd_check: non-finite forward output at index " +
                  std::to_string(i));
    s += out[i] * weights[i];
  }
  return s;
}

}  // namespace

FdCheckResult fd_check(const Stage& stage, std::span<const double> inputs,
    double epsilon, std::size_t sample_count, std::uint64_t seed) {
  if (!(epsilon > 0)) throw std::invalid_argument("fd_check: epsilon <= 0");

  std::mt19937_64 rng(seed);
  auto            base = stage.forward(inputs);

  std::vector<double>                    weights(base.size());
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& w : weights) w = dist(rng);
  project(base, weights);

  std::vector<double> analytic(inputs.size(), 0.0);
  stage.backward(inputs, weights, analytic);

  std::vector<std::size_t> coords(inputs.size());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  if (sample_count < coords.size()) {
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(sample_count);
    std::sort(coords.begin(), coords.end());
  }

  FdCheckResult       result;
  std::vector<double> x(inputs.begin(), inputs.end());
  for (auto c : coords) {
    auto x0 = x[c];
    x[c]    = x0 + epsilon;
    auto plus_cov = stage.coverage ? stage.coverage(x) : 0;
    auto plus     = project(stage.forward(x), weights);
    x[c]          = x0 - epsilon;
    auto minus_cov = stage.coverage ? stage.coverage(x) : 0;
    auto minus     = project(stage.forward(x), weights);
    x[c]           = x0;
    if (plus_cov != minus_cov) {
      result.discontinuous.push_back(c);
      continue;
    }
    auto fd  = (plus - minus) / (2 * epsilon);
    auto err = std::abs(analytic[c] - fd) / std::max(std::abs(fd), 1e-6);
    result.coordinates.push_back(c);
    result.errors.push_back(err);
    result.max_relative_error = std::max(result.max_relative_error, err);
  }
  return result;
}

}  // namespace apfit
