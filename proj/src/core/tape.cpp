#include "dib/core/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

#include "dib/errors.hpp"

namespace dib {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

ConstMatrixMap as_matrix(const Tensor& t) {
  return ConstMatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

MatrixMap as_matrix(Tensor& t) {
  return MatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
}

}  // namespace

// ---- ParameterSet / Gradients ---------------------------------------------

ParamId ParameterSet::add(std::string name, Tensor init) {
  if (find(name)) throw ContractError("duplicate parameter name '" + name + "'");
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return ParamId{values_.size() - 1};
}

std::size_t ParameterSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::optional<ParamId> ParameterSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return ParamId{i};
  }
  return std::nullopt;
}

Gradients::Gradients(const ParameterSet& params) {
  grads_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    grads_.emplace_back(params.value(ParamId{i}).shape(), 0.0);
  }
}

// ---- Var / BackwardContext -------------------------------------------------

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(node_);
}

const Tensor& BackwardContext::output() const { return tape_.value(node_); }

const Tensor& BackwardContext::input(std::size_t k) const {
  return tape_.value(tape_.nodes_[node_].inputs.at(k));
}

bool BackwardContext::wants(std::size_t k) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(k)].requires_grad;
}

Tensor& BackwardContext::accumulate(std::size_t k) {
  const std::size_t target = tape_.nodes_[node_].inputs.at(k);
  auto& slot = grads_[target];
  if (!slot) slot.emplace(tape_.value(target).shape(), 0.0);
  return *slot;
}

// ---- Tape ------------------------------------------------------------------

const Tensor& Tape::value(std::size_t node) const {
  const Node& n = nodes_.at(node);
  return n.external ? *n.external : n.value;
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const ParameterSet& params, ParamId id) {
  if (bound_params_ && bound_params_ != &params) {
    throw ContractError("a tape can only reference one ParameterSet");
  }
  bound_params_ = &params;
  if (auto it = param_nodes_.find(id.index); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  Node node;
  node.external = &params.value(id);
  node.param = id;
  node.requires_grad = record_gradients_;
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(id.index, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw ContractError("operand recorded on a different tape");
    node.inputs.push_back(in.node());
    node.requires_grad = node.requires_grad || nodes_[in.node()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var loss, const ParameterSet& params) const {
  if (&loss.tape() != this) throw ContractError("loss recorded on a different tape");
  if (loss.value().rank() != 0) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_string(loss.value().shape()));
  }
  if (bound_params_ && bound_params_ != &params) {
    throw ContractError("backward called with a different ParameterSet than the tape references");
  }
  Gradients out(params);
  if (!nodes_[loss.node()].requires_grad) return out;

  std::vector<std::optional<Tensor>> grads(loss.node() + 1);
  grads[loss.node()].emplace(Tensor::scalar(1.0));
  for (std::size_t i = loss.node() + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!grads[i] || !node.requires_grad) continue;
    if (node.param) {
      Tensor& dst = out[*node.param];
      const Tensor& src = *grads[i];
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      continue;
    }
    if (node.backward) {
      BackwardContext ctx(*this, i, *grads[i], grads);
      node.backward(ctx);
    }
    grads[i].reset();
  }
  return out;
}

// ---- operations --------------------------------------------------------------

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));
  }
  Tensor out({av.rows(), bv.cols()});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    const auto g = as_matrix(ctx.grad());
    if (ctx.wants(0)) {
      as_matrix(ctx.accumulate(0)).noalias() += g * as_matrix(ctx.input(1)).transpose();
    }
    if (ctx.wants(1)) {
      as_matrix(ctx.accumulate(1)).noalias() += as_matrix(ctx.input(0)).transpose() * g;
    }
  });
}

Var add_bias(Var x, Var bias) {
  require_same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "add_bias");
  if (bv.rank() != 1 || bv.size() != xv.cols()) {
    throw DimensionError("add_bias: bias shape " + shape_string(bv.shape()) +
                         " does not match width of " + shape_string(xv.shape()));
  }
  Tensor out = xv;
  const std::size_t n = xv.rows(), m = xv.cols();
  for (std::size_t r = 0; r < n; ++r) {
    double* row = out.data() + r * m;
    for (std::size_t c = 0; c < m; ++c) row[c] += bv[c];
  }
  return x.tape().record(std::move(out), {x, bias}, [n, m](BackwardContext& ctx) {
    const Tensor& g = ctx.grad();
    if (ctx.wants(0)) {
      Tensor& dx = ctx.accumulate(0);
      for (std::size_t k = 0; k < g.size(); ++k) dx[k] += g[k];
    }
    if (ctx.wants(1)) {
      Tensor& db = ctx.accumulate(1);
      for (std::size_t r = 0; r < n; ++r) {
        const double* row = g.data() + r * m;
        for (std::size_t c = 0; c < m; ++c) db[c] += row[c];
      }
    }
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += bv[k];
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad();
    for (std::size_t s = 0; s < 2; ++s) {
      if (!ctx.wants(s)) continue;
      Tensor& d = ctx.accumulate(s);
      for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return a.tape().record(std::move(out), {a}, [factor](BackwardContext& ctx) {
    const Tensor& g = ctx.grad();
    Tensor& d = ctx.accumulate(0);
    for (std::size_t k = 0; k < g.size(); ++k) d[k] += factor * g[k];
  });
}

Var square(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= v;
  return a.tape().record(std::move(out), {a}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad();
    const Tensor& x = ctx.input(0);
    Tensor& d = ctx.accumulate(0);
    for (std::size_t k = 0; k < g.size(); ++k) d[k] += 2.0 * x[k] * g[k];
  });
}

Var sum(Var a) {
  const auto vals = a.value().values();
  const double total = std::accumulate(vals.begin(), vals.end(), 0.0);
  return a.tape().record(Tensor::scalar(total), {a}, [](BackwardContext& ctx) {
    const double g = ctx.grad()[0];
    for (double& v : ctx.accumulate(0).values()) v += g;
  });
}

Var mean(Var a) {
  const auto vals = a.value().values();
  if (vals.empty()) throw ContractError("mean of an empty tensor");
  const double n = static_cast<double>(vals.size());
  const double total = std::accumulate(vals.begin(), vals.end(), 0.0);
  return a.tape().record(Tensor::scalar(total / n), {a}, [n](BackwardContext& ctx) {
    const double g = ctx.grad()[0] / n;
    for (double& v : ctx.accumulate(0).values()) v += g;
  });
}

Var leaky_relu(Var x, double alpha) {
  Tensor out = x.value();
  for (double& v : out.values()) {
    if (!(v > 0.0)) v *= alpha;
  }
  return x.tape().record(std::move(out), {x}, [alpha](BackwardContext& ctx) {
    const Tensor& g = ctx.grad();
    const Tensor& in = ctx.input(0);
    Tensor& d = ctx.accumulate(0);
    for (std::size_t k = 0; k < g.size(); ++k) d[k] += in[k] > 0.0 ? g[k] : alpha * g[k];
  });
}

Var clamp(Var x, double lo, double hi) {
  Tensor out = x.value();
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return x.tape().record(std::move(out), {x}, [lo, hi](BackwardContext& ctx) {
    const Tensor& g = ctx.grad();
    const Tensor& in = ctx.input(0);
    Tensor& d = ctx.accumulate(0);
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (in[k] >= lo && in[k] <= hi) d[k] += g[k];
    }
  });
}

Var dropout(Var x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout rate must be in [0, 1)");
  if (rate == 0.0) return x;
  const Tensor& xv = x.value();
  Tensor mask(xv.shape());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.values()) m = rng.uniform() >= rate ? keep_scale : 0.0;
  Tensor out = xv;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= mask[k];
  return x.tape().record(std::move(out), {x}, [mask = std::move(mask)](BackwardContext& ctx) {
    const Tensor& g = ctx.grad();
    Tensor& d = ctx.accumulate(0);
    for (std::size_t k = 0; k < g.size(); ++k) d[k] += mask[k] * g[k];
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require_matrix(xv, "slice_cols");
  if (begin >= end || end > xv.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") outside width " + std::to_string(xv.cols()));
  }
  const std::size_t n = xv.rows(), m = xv.cols(), w = end - begin;
  Tensor out({n, w});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(xv.data() + r * m + begin, w, out.data() + r * w);
  }
  return x.tape().record(std::move(out), {x}, [n, m, w, begin](BackwardContext& ctx) {
    const Tensor& g = ctx.grad();
    Tensor& d = ctx.accumulate(0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < w; ++c) d[r * m + begin + c] += g[r * w + c];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols of zero tensors");
  const std::size_t n = parts.front().value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p);
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != n) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out({n, total});
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(v.data() + r * widths[p], widths[p], out.data() + r * total + offset);
    }
    offset += widths[p];
  }
  return parts.front().tape().record(
      std::move(out), std::vector<Var>(parts.begin(), parts.end()),
      [n, total, widths = std::move(widths)](BackwardContext& ctx) {
        const Tensor& g = ctx.grad();
        std::size_t off = 0;
        for (std::size_t p = 0; p < widths.size(); ++p) {
          if (ctx.wants(p)) {
            Tensor& d = ctx.accumulate(p);
            for (std::size_t r = 0; r < n; ++r) {
              for (std::size_t c = 0; c < widths[p]; ++c) {
                d[r * widths[p] + c] += g[r * total + off + c];
              }
            }
          }
          off += widths[p];
        }
      });
}

Var reparameterize(Var mean, Var log_variance, const Tensor& eps) {
  require_same_tape(mean, log_variance);
  require_same_shape(mean.value(), log_variance.value(), "reparameterize");
  require_same_shape(mean.value(), eps, "reparameterize");
  const Tensor& mu = mean.value();
  const Tensor& lv = log_variance.value();
  Tensor out(mu.shape());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = mu[k] + std::exp(0.5 * lv[k]) * eps[k];
  return mean.tape().record(std::move(out), {mean, log_variance}, [eps](BackwardContext& ctx) {
    const Tensor& g = ctx.grad();
    if (ctx.wants(0)) {
      Tensor& d = ctx.accumulate(0);
      for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k];
    }
    if (ctx.wants(1)) {
      const Tensor& lv = ctx.input(1);
      Tensor& d = ctx.accumulate(1);
      for (std::size_t k = 0; k < g.size(); ++k) {
        d[k] += g[k] * 0.5 * std::exp(0.5 * lv[k]) * eps[k];
      }
    }
  });
}

Var kl_standard_normal(Var mean, Var log_variance) {
  require_same_tape(mean, log_variance);
  require_same_shape(mean.value(), log_variance.value(), "kl_standard_normal");
  const Tensor& mu = mean.value();
  const Tensor& lv = log_variance.value();
  require_matrix(mu, "kl_standard_normal");
  const std::size_t n = mu.rows(), d = mu.cols();
  Tensor out({n});
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double m = mu[r * d + j], l = lv[r * d + j];
      acc += m * m + std::exp(l) - 1.0 - l;
    }
    out[r] = 0.5 * acc;
  }
  return mean.tape().record(std::move(out), {mean, log_variance}, [n, d](BackwardContext& ctx) {
    const Tensor& g = ctx.grad();
    if (ctx.wants(0)) {
      const Tensor& mu = ctx.input(0);
      Tensor& dm = ctx.accumulate(0);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < d; ++j) dm[r * d + j] += g[r] * mu[r * d + j];
      }
    }
    if (ctx.wants(1)) {
      const Tensor& lv = ctx.input(1);
      Tensor& dl = ctx.accumulate(1);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          dl[r * d + j] += g[r] * 0.5 * (std::exp(lv[r * d + j]) - 1.0);
        }
      }
    }
  });
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets) {
  const Tensor& z = logits.value();
  require_matrix(z, "softmax_cross_entropy");
  const std::size_t n = z.rows(), k = z.cols();
  if (targets.size() != n) throw DimensionError("softmax_cross_entropy: one target per row");
  Tensor probs({n, k});
  Tensor out({n});
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] >= k) {
      throw ContractError("softmax_cross_entropy: class index " + std::to_string(targets[r]) +
                          " >= class count " + std::to_string(k));
    }
    const double* row = z.data() + r * k;
    const double shift = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) total += std::exp(row[c] - shift);
    const double log_total = std::log(total);
    for (std::size_t c = 0; c < k; ++c) probs[r * k + c] = std::exp(row[c] - shift - log_total);
    out[r] = log_total - (row[targets[r]] - shift);
  }
  std::vector<std::size_t> labels(targets.begin(), targets.end());
  return logits.tape().record(
      std::move(out), {logits},
      [n, k, probs = std::move(probs), labels = std::move(labels)](BackwardContext& ctx) {
        const Tensor& g = ctx.grad();
        Tensor& d = ctx.accumulate(0);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < k; ++c) {
            const double onehot = c == labels[r] ? 1.0 : 0.0;
            d[r * k + c] += g[r] * (probs[r * k + c] - onehot);
          }
        }
      });
}

Var mse(Var pred, const Tensor& target) {
  require_same_shape(pred.value(), target, "mse");
  const Tensor& p = pred.value();
  if (p.size() == 0) throw ContractError("mse of empty tensors");
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double e = p[k] - target[k];
    acc += e * e;
  }
  const double n = static_cast<double>(p.size());
  return pred.tape().record(Tensor::scalar(acc / n), {pred}, [target, n](BackwardContext& ctx) {
    const double g = ctx.grad()[0];
    const Tensor& p = ctx.input(0);
    Tensor& d = ctx.accumulate(0);
    for (std::size_t k = 0; k < p.size(); ++k) d[k] += g * 2.0 * (p[k] - target[k]) / n;
  });
}

}  // namespace dib
