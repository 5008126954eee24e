#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace crossmodal {

namespace detail {
inline void check_failed(const char* expr, const std::string& msg) {
  std::ostringstream oss;
  oss << "check failed (" << expr << "): " << msg;
  throw std::runtime_error(oss.str());
}
}  // namespace detail

#define CM_CHECK(cond, msg)                              \
  do {                                                   \
    if (!(cond)) {                                       \
      std::ostringstream cm_oss_;                        \
      cm_oss_ << msg;                                    \
      ::crossmodal::detail::check_failed(#cond, cm_oss_.str()); \
    }                                                    \
  } while (0)

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// One vertex of the differentiation graph. Holds the forward value, the
// accumulated gradient, and a closure that pushes this node's gradient into
// its parents.
template <class T>
struct Node {
  Shape shape;
  std::vector<T> val;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void()> backprop;  // may be empty for leaves

  void ensure_grad() {
    if (grad.empty()) grad.assign(val.size(), T(0));
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
  }
};

// Value-semantic handle to a graph node.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : node_(std::make_shared<Node<T>>()) {
    node_->shape = std::move(shape);
    node_->val.assign(static_cast<size_t>(numel(node_->shape)), fill);
  }
  Tensor(Shape shape, std::vector<T> values)
      : node_(std::make_shared<Node<T>>()) {
    node_->shape = std::move(shape);
    CM_CHECK(static_cast<int64_t>(values.size()) == numel(node_->shape),
             "value count " << values.size() << " vs shape "
                            << shape_str(node_->shape));
    node_->val = std::move(values);
  }

  static Tensor param(Shape shape, std::vector<T> values) {
    Tensor t(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return static_cast<int64_t>(node_->val.size()); }
  int64_t dim(int i) const {
    int n = static_cast<int>(node_->shape.size());
    if (i < 0) i += n;
    return node_->shape[static_cast<size_t>(i)];
  }
  int rank() const { return static_cast<int>(node_->shape.size()); }

  T* data() { return node_->val.data(); }
  const T* data() const { return node_->val.data(); }
  std::vector<T>& values() { return node_->val; }
  const std::vector<T>& values() const { return node_->val; }
  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->zero_grad(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  T item() const {
    CM_CHECK(size() == 1, "item() on tensor of shape " << shape_str(shape()));
    return node_->val[0];
  }

  std::shared_ptr<Node<T>> node() const { return node_; }

  // Builds a result node wired to its inputs. The backprop closure receives
  // the raw output node pointer; input nodes are kept alive by the parents
  // vector.
  static Tensor make_op(Shape shape, std::vector<Tensor> inputs,
                        std::function<void(Node<T>&)> backprop) {
    Tensor out(std::move(shape));
    bool rg = false;
    for (auto& in : inputs) {
      out.node_->parents.push_back(in.node_);
      rg = rg || in.node_->requires_grad;
    }
    out.node_->requires_grad = rg;
    if (rg && backprop) {
      Node<T>* self = out.node_.get();
      out.node_->backprop = [self, fn = std::move(backprop)]() { fn(*self); };
    }
    return out;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Reverse topological sweep from a scalar loss. Gradients accumulate
// additively across fan-out; non-leaf grads are freshly zeroed, leaf
// (parameter) grads accumulate across calls until zero_grad.
template <class T>
inline void backward(const Tensor<T>& loss) {
  CM_CHECK(loss.size() == 1, "backward requires a scalar loss, got "
                                 << shape_str(loss.shape()));
  CM_CHECK(loss.requires_grad(), "loss is not connected to any parameter");

  // Iterative post-order DFS.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior nodes start from zero each backward pass; leaves keep
  // accumulating so repeated subgraphs sum their contributions.
  for (Node<T>* n : order) {
    if (n->backprop) {
      n->ensure_grad();
      if (n != loss.node().get()) n->zero_grad();
    } else {
      n->ensure_grad();
    }
  }
  loss.node()->grad[0] = T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop();
  }
}

}  // namespace crossmodal
