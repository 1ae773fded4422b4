#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sdan/ops.hpp"
#include "sdan/tensor.hpp"

namespace sdan::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation; see Var::grad()
  std::string op_tag;
  std::vector<NodePtr> parents;
  // Pushes this node's grad into its parents' grads.
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  bool is_leaf() const { return parents.empty(); }
  void accumulate_grad(const Tensor& g);
};

// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false,
               std::string tag = "leaf");
  static Var from_node(NodePtr node) {
    Var v;
    v.node_ = std::move(node);
    return v;
  }

  const Tensor& value() const { return node_->value; }
  // Mutable access for optimizers and finite-difference probes.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  DType dtype() const { return node_->value.dtype(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::string& op_tag() const { return node_->op_tag; }

  // Zero-filled tensor of the value's shape until something accumulates.
  const Tensor& grad() const;
  void zero_grad();

  const NodePtr& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

bool grad_enabled();

// Disables graph recording on this thread for the guard's lifetime. Values
// computed under the guard are bit-identical to graph-mode values.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Reverse-mode sweep from a (1,1,1,1) loss. Leaf grads accumulate; grads of
// interior nodes are released once propagated.
void backward(const Var& loss);

Var conv2d(const Var& x, const Var& weight, const Var* bias,
           const ConvSpec& spec);
Var add(const Var& a, const Var& b);
Var star_product(const Var& a, const Var& b);
Var gelu(const Var& x);
Var pixel_shuffle(const Var& x, int r);
Var pixel_norm(const Var& x, const Var& gamma, const Var& beta,
               double eps = kPixelNormEps);
Var concat_channels(std::span<const Var> parts);
std::vector<Var> split_channels(const Var& x,
                                std::span<const std::size_t> sizes);
Var sum(const Var& x);
Var l1_loss(const Var& pred, const Var& target);

}  // namespace sdan::ag
