#pragma once

// Reverse-mode autodiff. A Tape records every op application in execution
// order; backward() replays the record once, in reverse, accumulating
// gradients into parent nodes. Leaves (parameters, inputs) live outside the
// tape and persist across forwards.

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "plnet/ops.hpp"
#include "plnet/tensor.hpp"

namespace plnet {

template <typename T>
struct VarNode {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first contribution
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<VarNode<T>>> parents;
  std::function<void(VarNode<T>&)> backward;

  void accumulate(const Tensor<T>& g) {
    if (grad.empty()) grad = Tensor<T>(value.n, value.c, value.h, value.w, T(0));
    for (size_t i = 0; i < g.size(); ++i) grad.data[i] += g.data[i];
  }
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.n, value.c, value.h, value.w, T(0));
    return grad;
  }
};

template <typename T>
struct Var {
  std::shared_ptr<VarNode<T>> n;

  Var() = default;
  explicit Var(std::shared_ptr<VarNode<T>> node) : n(std::move(node)) {}

  static Var leaf(Tensor<T> value, bool requires_grad) {
    auto node = std::make_shared<VarNode<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var(std::move(node));
  }

  bool defined() const { return n != nullptr; }
  Tensor<T>& value() const { return n->value; }
  const Tensor<T>& grad() const { return n->grad; }
  bool requires_grad() const { return n->requires_grad; }
  void zero_grad() const { n->grad = Tensor<T>(); }
  double scalar() const { return double(n->value.data[0]); }
};

// A named handle on a learnable leaf; optimizers and the checkpoint format
// address parameters this way.
template <typename T>
struct ParamRef {
  std::string name;
  Var<T> var;
};

template <typename T>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }
  void set_trace(std::vector<std::string>* sink) { trace_ = sink; }

  Var<T> record(Tensor<T> value, const char* op, std::vector<Var<T>> parents,
                std::function<void(VarNode<T>&)> backward) {
    if (trace_) trace_->push_back(op);
    auto node = std::make_shared<VarNode<T>>();
    node->value = std::move(value);
    node->op = op;
    if (grad_enabled_) {
      bool req = false;
      for (const auto& p : parents) req = req || p.n->requires_grad;
      if (req) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.n);
        node->backward = std::move(backward);
      }
    }
    order_.push_back(node);
    return Var<T>(node);
  }

  // Seeds d(loss)/d(loss) = 1 and replays the record backwards. Every recorded
  // op is visited exactly once; returns how many propagated a gradient.
  size_t backward(const Var<T>& loss) {
    if (loss.value().size() != 1) throw ConfigError("backward: loss must be scalar");
    loss.n->grad_buffer();
    loss.n->grad.data[0] = T(1);
    size_t invoked = 0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      VarNode<T>& node = **it;
      if (node.backward && !node.grad.empty()) {
        node.backward(node);
        ++invoked;
      }
    }
    return invoked;
  }

  size_t size() const { return order_.size(); }

 private:
  std::vector<std::shared_ptr<VarNode<T>>> order_;
  bool grad_enabled_ = true;
  std::vector<std::string>* trace_ = nullptr;
};

namespace ag {

template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b,
              const std::string& where = "conv2d") {
  Tensor<T> out = ops::conv2d(x.value(), w.value(), b.value(), where);
  return tape.record(std::move(out), "conv2d", {x, w, b}, [](VarNode<T>& node) {
    auto& xn = *node.parents[0];
    auto& wn = *node.parents[1];
    auto& bn = *node.parents[2];
    if (xn.requires_grad) {
      Tensor<T> gx = ops::conv2d_backward_input(node.grad, wn.value, xn.value.h, xn.value.w);
      xn.accumulate(gx);
    }
    if (wn.requires_grad) {
      ops::conv2d_backward_params(node.grad, xn.value, wn.value, wn.grad_buffer(),
                                  bn.grad_buffer());
    }
  });
}

template <typename T>
Var<T> batchnorm(Tape<T>& tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                 ops::BnState<T>& state, bool train, const std::string& where = "batchnorm") {
  auto saved = std::make_shared<ops::BnSaved<T>>();
  Tensor<T> out = ops::batchnorm(x.value(), gamma.value(), beta.value(), state, train,
                                 tape.grad_enabled() ? saved.get() : nullptr, where);
  return tape.record(std::move(out), "batchnorm", {x, gamma, beta}, [saved](VarNode<T>& node) {
    auto& xn = *node.parents[0];
    auto& gn = *node.parents[1];
    auto& bn = *node.parents[2];
    ops::batchnorm_backward(node.grad, xn.value, gn.value, *saved, xn.grad_buffer(),
                            gn.grad_buffer(), bn.grad_buffer());
    if (!xn.requires_grad) xn.grad = Tensor<T>();
  });
}

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
  return tape.record(ops::relu(x.value()), "relu", {x}, [](VarNode<T>& node) {
    auto& xn = *node.parents[0];
    if (xn.requires_grad) ops::relu_backward(node.grad, xn.value, xn.grad_buffer());
  });
}

template <typename T>
Var<T> sigmoid(Tape<T>& tape, const Var<T>& x) {
  return tape.record(ops::sigmoid(x.value()), "sigmoid", {x}, [](VarNode<T>& node) {
    auto& xn = *node.parents[0];
    if (xn.requires_grad) ops::sigmoid_backward(node.grad, node.value, xn.grad_buffer());
  });
}

template <typename T>
Var<T> maxpool2(Tape<T>& tape, const Var<T>& x, const std::string& where = "maxpool2") {
  auto argmax = std::make_shared<std::vector<std::uint8_t>>();
  Tensor<T> out = ops::maxpool2(x.value(), argmax.get(), where);
  return tape.record(std::move(out), "maxpool2", {x}, [argmax](VarNode<T>& node) {
    auto& xn = *node.parents[0];
    if (xn.requires_grad) ops::maxpool2_backward(node.grad, *argmax, xn.grad_buffer());
  });
}

template <typename T>
Var<T> upsample2(Tape<T>& tape, const Var<T>& x) {
  return tape.record(ops::upsample2(x.value()), "upsample2", {x}, [](VarNode<T>& node) {
    auto& xn = *node.parents[0];
    if (xn.requires_grad) ops::upsample2_backward(node.grad, xn.grad_buffer());
  });
}

template <typename T>
Var<T> concat(Tape<T>& tape, const Var<T>& a, const Var<T>& b, const std::string& where_a = "lhs",
              const std::string& where_b = "rhs") {
  Tensor<T> out = ops::concat_channels(a.value(), b.value(), where_a, where_b);
  return tape.record(std::move(out), "concat", {a, b}, [](VarNode<T>& node) {
    auto& an = *node.parents[0];
    auto& bn = *node.parents[1];
    if (an.requires_grad) ops::slice_channels_add(node.grad, 0, an.grad_buffer());
    if (bn.requires_grad) ops::slice_channels_add(node.grad, an.value.c, bn.grad_buffer());
  });
}

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  return tape.record(ops::add(a.value(), b.value()), "add", {a, b}, [](VarNode<T>& node) {
    for (auto& p : node.parents) {
      if (p->requires_grad) p->accumulate(node.grad);
    }
  });
}

template <typename T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  return tape.record(ops::mul(a.value(), b.value()), "mul", {a, b}, [](VarNode<T>& node) {
    auto& an = *node.parents[0];
    auto& bn = *node.parents[1];
    if (an.requires_grad) an.accumulate(ops::mul(node.grad, bn.value));
    if (bn.requires_grad) bn.accumulate(ops::mul(node.grad, an.value));
  });
}

// Reduces a tensor to a (1,1,1,1) scalar by summation (double accumulator).
template <typename T>
Var<T> sum(Tape<T>& tape, const Var<T>& x) {
  Tensor<T> out(1, 1, 1, 1);
  out.data[0] = T(ops::sum_all(x.value()));
  return tape.record(std::move(out), "sum", {x}, [](VarNode<T>& node) {
    auto& xn = *node.parents[0];
    if (!xn.requires_grad) return;
    const T g = node.grad.data[0];
    Tensor<T>& gx = xn.grad_buffer();
    for (size_t i = 0; i < gx.size(); ++i) gx.data[i] += g;
  });
}

// ------------------------------------------------- scalar (1,1,1,1) algebra --

template <typename T>
Var<T> s_add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  return add(tape, a, b);
}

// k*a + c
template <typename T>
Var<T> s_affine(Tape<T>& tape, const Var<T>& a, double k, double c) {
  Tensor<T> out(1, 1, 1, 1);
  out.data[0] = T(k * a.scalar() + c);
  return tape.record(std::move(out), "s_affine", {a}, [k](VarNode<T>& node) {
    auto& an = *node.parents[0];
    if (an.requires_grad) {
      Tensor<T> g(1, 1, 1, 1);
      g.data[0] = T(k) * node.grad.data[0];
      an.accumulate(g);
    }
  });
}

template <typename T>
Var<T> s_div(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  Tensor<T> out(1, 1, 1, 1);
  out.data[0] = T(a.scalar() / b.scalar());
  return tape.record(std::move(out), "s_div", {a, b}, [](VarNode<T>& node) {
    auto& an = *node.parents[0];
    auto& bn = *node.parents[1];
    const double g = double(node.grad.data[0]);
    const double av = double(an.value.data[0]), bv = double(bn.value.data[0]);
    if (an.requires_grad) {
      Tensor<T> ga(1, 1, 1, 1);
      ga.data[0] = T(g / bv);
      an.accumulate(ga);
    }
    if (bn.requires_grad) {
      Tensor<T> gb(1, 1, 1, 1);
      gb.data[0] = T(-g * av / (bv * bv));
      bn.accumulate(gb);
    }
  });
}

}  // namespace ag
}  // namespace plnet
