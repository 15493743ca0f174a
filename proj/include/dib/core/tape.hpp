#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dib/core/rng.hpp"
#include "dib/core/tensor.hpp"

namespace dib {

struct ParamId {
  std::size_t index = 0;
  friend auto operator<=>(const ParamId&, const ParamId&) = default;
};

// Named trainable tensors. Ids are dense indices in insertion order.
class ParameterSet {
 public:
  ParamId add(std::string name, Tensor init);

  std::size_t size() const noexcept { return values_.size(); }
  std::size_t scalar_count() const noexcept;

  Tensor& value(ParamId id) { return values_.at(id.index); }
  const Tensor& value(ParamId id) const { return values_.at(id.index); }
  const std::string& name(ParamId id) const { return names_.at(id.index); }
  std::optional<ParamId> find(std::string_view name) const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

// One gradient tensor per parameter of a ParameterSet, same shapes.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet& params);

  Tensor& operator[](ParamId id) { return grads_.at(id.index); }
  const Tensor& operator[](ParamId id) const { return grads_.at(id.index); }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  std::vector<Tensor> grads_;
};

class Tape;

// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor::Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t node() const noexcept { return node_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t node) : tape_(tape), node_(node) {}

  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

// Passed to an op's backward function while the tape is unwound.
class BackwardContext {
 public:
  const Tensor& grad() const noexcept { return *grad_; }
  const Tensor& output() const;
  const Tensor& input(std::size_t k) const;
  bool wants(std::size_t k) const;
  // Zero-initialized on first access, then accumulated into.
  Tensor& accumulate(std::size_t k);

 private:
  friend class Tape;
  BackwardContext(const Tape& tape, std::size_t node, const Tensor& grad,
                  std::vector<std::optional<Tensor>>& grads)
      : tape_(tape), node_(node), grad_(&grad), grads_(grads) {}

  const Tape& tape_;
  std::size_t node_;
  const Tensor* grad_;
  std::vector<std::optional<Tensor>>& grads_;
};

// Records operations for reverse-mode differentiation. A tape is built per
// loss evaluation and discarded afterwards. Parameter leaves reference the
// ParameterSet storage directly, so parameters must not be mutated while a
// tape that refers to them is alive.
class Tape {
 public:
  using BackwardFn = std::function<void(BackwardContext&)>;

  // With record_gradients off, no backward closures are kept (inference).
  explicit Tape(bool record_gradients = true) : record_gradients_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(const ParameterSet& params, ParamId id);

  // Appends an op node. `backward` is dropped when no input needs a gradient.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  // Gradients of a scalar loss with respect to every parameter in `params`;
  // parameters the loss does not reach get zeros.
  Gradients backward(Var loss, const ParameterSet& params) const;

  const Tensor& value(std::size_t node) const;
  bool requires_grad(std::size_t node) const { return nodes_.at(node).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool recording() const noexcept { return record_gradients_; }

 private:
  friend class BackwardContext;

  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::optional<ParamId> param;
    bool requires_grad = false;
  };

  bool record_gradients_;
  std::vector<Node> nodes_;
  const ParameterSet* bound_params_ = nullptr;
  std::unordered_map<std::size_t, std::size_t> param_nodes_;
};

// ---- differentiable operations -------------------------------------------
// Matrices are [rows, cols]; bias and per-row results are rank-1.

Var matmul(Var a, Var b);
Var add_bias(Var x, Var bias);
Var add(Var a, Var b);
Var scale(Var a, double factor);
Var square(Var a);
Var sum(Var a);
Var mean(Var a);
Var leaky_relu(Var x, double alpha);
Var clamp(Var x, double lo, double hi);
// Inverted dropout; identity when rate == 0.
Var dropout(Var x, double rate, Rng& rng);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);

// u = mean + exp(0.5 * log_variance) * eps.
Var reparameterize(Var mean, Var log_variance, const Tensor& eps);
// Per-row KL(N(mean, exp(log_variance)) || N(0, I)) in nats, shape [rows].
Var kl_standard_normal(Var mean, Var log_variance);
// Per-row softmax cross entropy in nats, shape [rows].
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets);
// Mean squared error over all elements.
Var mse(Var pred, const Tensor& target);

}  // namespace dib
