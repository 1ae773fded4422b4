#include "sdan/autograd.hpp"

#include <unordered_set>
#include <utility>

#include "sdan/errors.hpp"

namespace sdan::ag {

namespace {

thread_local bool t_grad_enabled = true;

bool any_requires_grad(std::initializer_list<const Var*> vars) {
  for (const Var* v : vars) {
    if (v && v->requires_grad()) return true;
  }
  return false;
}

// Wraps a freshly computed value; records parents and the backward closure
// only when recording is on and some parent needs a gradient.
Var make_result(Tensor value, std::string tag, std::vector<NodePtr> parents,
                std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op_tag = std::move(tag);
  bool needs = false;
  for (const NodePtr& p : parents) needs = needs || p->requires_grad;
  if (t_grad_enabled && needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(fn);
  }
  return Var::from_node(std::move(node));
}

}  // namespace

void Node::accumulate_grad(const Tensor& g) {
  if (g.shape() != value.shape()) {
    throw UsageError("gradient of shape " + g.shape().str() + " for " + op_tag +
                     " value of shape " + value.shape().str());
  }
  if (grad.empty() && !value.empty()) {
    grad = g;
    return;
  }
  sdan::accumulate(grad, g);
}

Var::Var(Tensor value, bool requires_grad, std::string tag) {
  node_ = std::make_shared<Node>();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  node_->op_tag = std::move(tag);
}

const Tensor& Var::grad() const {
  if (node_->grad.shape() != node_->value.shape() ||
      node_->grad.dtype() != node_->value.dtype()) {
    node_->grad = Tensor(node_->value.shape(), node_->value.dtype());
  }
  return node_->grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
  t_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void backward(const Var& loss) {
  if (!loss) throw UsageError("backward: empty loss");
  if (loss.shape() != Shape{1, 1, 1, 1}) {
    throw UsageError("backward: loss must be scalar-shaped, got " +
                     loss.shape().str());
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order of the graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate_grad(Tensor::full(Shape{1, 1, 1, 1}, 1.0,
                                            loss.dtype()));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->is_leaf() || !node->backward) continue;
    if (node->grad.empty()) continue;  // unreachable from the loss
    node->backward(*node);
    node->grad = Tensor();
  }
}

Var conv2d(const Var& x, const Var& weight, const Var* bias,
           const ConvSpec& spec) {
  Tensor out = sdan::conv2d(x.value(), weight.value(),
                            bias ? &bias->value() : nullptr, spec);
  std::vector<NodePtr> parents{x.node(), weight.node()};
  if (bias) parents.push_back(bias->node());
  return make_result(std::move(out), "conv2d", std::move(parents),
                     [spec](Node& self) {
                       Node& in = *self.parents[0];
                       Node& w = *self.parents[1];
                       if (in.requires_grad) {
                         in.accumulate_grad(sdan::conv2d_backward_input(
                             self.grad, w.value, spec, in.value.shape()));
                       }
                       if (w.requires_grad) {
                         w.accumulate_grad(sdan::conv2d_backward_weight(
                             self.grad, in.value, spec));
                       }
                       if (self.parents.size() > 2 &&
                           self.parents[2]->requires_grad) {
                         self.parents[2]->accumulate_grad(
                             sdan::conv2d_backward_bias(self.grad, spec));
                       }
                     });
}

Var add(const Var& a, const Var& b) {
  return make_result(sdan::add(a.value(), b.value()), "add",
                     {a.node(), b.node()}, [](Node& self) {
                       for (const NodePtr& p : self.parents) {
                         if (p->requires_grad) p->accumulate_grad(self.grad);
                       }
                     });
}

Var star_product(const Var& a, const Var& b) {
  return make_result(
      sdan::star_product(a.value(), b.value()), "star_product",
      {a.node(), b.node()}, [](Node& self) {
        Node& lhs = *self.parents[0];
        Node& rhs = *self.parents[1];
        if (lhs.requires_grad) {
          lhs.accumulate_grad(sdan::star_product(self.grad, rhs.value));
        }
        if (rhs.requires_grad) {
          rhs.accumulate_grad(sdan::star_product(self.grad, lhs.value));
        }
      });
}

Var gelu(const Var& x) {
  return make_result(sdan::gelu(x.value()), "gelu", {x.node()},
                     [](Node& self) {
                       Node& in = *self.parents[0];
                       in.accumulate_grad(
                           sdan::gelu_backward(in.value, self.grad));
                     });
}

Var pixel_shuffle(const Var& x, int r) {
  return make_result(sdan::pixel_shuffle(x.value(), r), "pixel_shuffle",
                     {x.node()}, [r](Node& self) {
                       self.parents[0]->accumulate_grad(
                           sdan::pixel_unshuffle(self.grad, r));
                     });
}

Var pixel_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  auto cache = std::make_shared<PixelNormCache>();
  const bool record = grad_enabled() && any_requires_grad({&x, &gamma, &beta});
  Tensor out = sdan::pixel_norm(x.value(), gamma.value(), beta.value(), eps,
                                record ? cache.get() : nullptr);
  return make_result(std::move(out), "pixel_norm",
                     {x.node(), gamma.node(), beta.node()},
                     [cache](Node& self) {
                       Node& g = *self.parents[1];
                       PixelNormGrads grads =
                           sdan::pixel_norm_backward(self.grad, *cache, g.value);
                       if (self.parents[0]->requires_grad) {
                         self.parents[0]->accumulate_grad(grads.input);
                       }
                       if (g.requires_grad) {
                         g.accumulate_grad(grads.gamma.reshaped(g.value.shape()));
                       }
                       Node& b = *self.parents[2];
                       if (b.requires_grad) {
                         b.accumulate_grad(grads.beta.reshaped(b.value.shape()));
                       }
                     });
}

Var concat_channels(std::span<const Var> parts) {
  std::vector<Tensor> values;
  std::vector<NodePtr> parents;
  values.reserve(parts.size());
  for (const Var& p : parts) {
    values.push_back(p.value());
    parents.push_back(p.node());
  }
  return make_result(sdan::concat_channels(values), "concat_channels",
                     std::move(parents), [](Node& self) {
                       std::vector<std::size_t> sizes;
                       for (const NodePtr& p : self.parents) {
                         sizes.push_back(p->value.shape().c);
                       }
                       auto grads = sdan::split_channels(self.grad, sizes);
                       for (std::size_t i = 0; i < grads.size(); ++i) {
                         if (self.parents[i]->requires_grad) {
                           self.parents[i]->accumulate_grad(grads[i]);
                         }
                       }
                     });
}

std::vector<Var> split_channels(const Var& x,
                                std::span<const std::size_t> sizes) {
  std::vector<Tensor> values = sdan::split_channels(x.value(), sizes);
  std::vector<Var> out;
  std::size_t offset = 0;
  for (Tensor& v : values) {
    const std::size_t width = v.shape().c;
    out.push_back(make_result(std::move(v), "split_channels", {x.node()},
                              [offset](Node& self) {
                                Node& in = *self.parents[0];
                                Tensor padded(in.value.shape(), in.value.dtype());
                                sdan::accumulate_channels(padded, self.grad,
                                                          offset);
                                in.accumulate_grad(padded);
                              }));
    offset += width;
  }
  return out;
}

Var sum(const Var& x) {
  return make_result(Tensor::scalar(sdan::sum_all(x.value()), x.dtype()), "sum",
                     {x.node()}, [](Node& self) {
                       Node& in = *self.parents[0];
                       in.accumulate_grad(Tensor::full(
                           in.value.shape(), self.grad.flat(0), in.value.dtype()));
                     });
}

Var l1_loss(const Var& pred, const Var& target) {
  const double loss = sdan::mean_abs_diff(pred.value(), target.value());
  return make_result(Tensor::scalar(loss, pred.dtype()), "l1_loss",
                     {pred.node(), target.node()}, [](Node& self) {
                       Node& p = *self.parents[0];
                       Node& t = *self.parents[1];
                       const double up = self.grad.flat(0);
                       Tensor g = sdan::mean_abs_diff_backward(p.value, t.value, up);
                       if (t.requires_grad) t.accumulate_grad(sdan::scale(g, -1.0));
                       if (p.requires_grad) p.accumulate_grad(g);
                     });
}

}  // namespace sdan::ag
