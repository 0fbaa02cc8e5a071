// Parameter registry and the forward/backward contract shared by the
// differentiable stages, plus the central-difference checker used to verify
// every analytic adjoint.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace apfit {

// A named n-dimensional value buffer with a matching gradient buffer.
struct ParamTensor {
  std::string              name;
  std::vector<std::size_t> shape;
  std::vector<double>      values;
  std::vector<double>      grad;
  bool                     learnable = true;

  std::size_t size() const { return values.size(); }
};

// How register_param fills a new tensor.
struct Initializer {
  enum class Kind { constant, values, uniform };
  Kind                kind  = Kind::constant;
  double              value = 0;  // constant fill, or uniform lower bound
  double              upper = 1;  // uniform upper bound
  std::uint64_t       seed  = 0;
  std::vector<double> data;       // Kind::values, must match the shape

  static Initializer constant(double v) { return {Kind::constant, v, 1, 0, {}}; }
  static Initializer from(std::vector<double> v) {
    Initializer i;
    i.kind = Kind::values;
    i.data = std::move(v);
    return i;
  }
  static Initializer uniform(double lo, double hi, std::uint64_t seed) {
    return {Kind::uniform, lo, hi, seed, {}};
  }
};

// Stable handle to a registered tensor.
struct ParamId {
  std::size_t index = static_cast<std::size_t>(-1);
  bool        valid() const { return index != static_cast<std::size_t>(-1); }
  bool        operator==(const ParamId&) const = default;
};

// Owns all tensors of one latent asset. Iteration follows registration order.
// Not thread-safe: one fit loop owns a registry.
class ParamRegistry {
 public:
  ParamRegistry() = default;
  ParamRegistry(const ParamRegistry& other);
  ParamRegistry& operator=(const ParamRegistry& other);
  ParamRegistry(ParamRegistry&&) noexcept            = default;
  ParamRegistry& operator=(ParamRegistry&&) noexcept = default;

  ParamId register_param(const std::string& name,
      const std::vector<std::size_t>& shape, const Initializer& init,
      bool learnable = true);

  void zero_grads();

  std::size_t        size() const { return tensors_.size(); }
  ParamTensor&       operator[](ParamId id) { return *tensors_.at(id.index); }
  const ParamTensor& operator[](ParamId id) const {
    return *tensors_.at(id.index);
  }
  ParamTensor&       at(std::size_t i) { return *tensors_.at(i); }
  const ParamTensor& at(std::size_t i) const { return *tensors_.at(i); }

  // Returns an invalid id when absent.
  ParamId find(const std::string& name) const;

 private:
  std::vector<std::unique_ptr<ParamTensor>> tensors_;
};

// A differentiable stage over flat buffers. backward accumulates into
// input_grad; it never overwrites.
struct Stage {
  std::string name;
  std::function<std::vector<double>(std::span<const double> inputs)> forward;
  std::function<void(std::span<const double> inputs,
      std::span<const double> output_adjoint, std::span<double> input_grad)>
      backward;
  // Optional visibility fingerprint (e.g. a hash of rasterized triangle ids).
  // Coordinates whose two perturbed evaluations disagree are reported as
  // discontinuous instead of being compared.
  std::function<std::uint64_t(std::span<const double> inputs)> coverage;
};

struct FdCheckResult {
  double                   max_relative_error = 0;
  std::vector<std::size_t> coordinates;    // compared coordinates
  std::vector<double>      errors;         // relative error per coordinate
  std::vector<std::size_t> discontinuous;  // excluded coordinates

  double fraction_within(double tolerance) const;
};

// Compares the analytic adjoint against central differences on a random
// projection of the output. Throws Error on non-finite forward output.
FdCheckResult fd_check(const Stage& stage, std::span<const double> inputs,
    double epsilon, std::size_t sample_count, std::uint64_t seed = 1);

}  // namespace apfit
