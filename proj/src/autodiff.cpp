#include "maeast/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace maeast::nn {

namespace {
thread_local bool t_grad_enabled = true;
std::atomic<std::uint64_t> g_node_counter{1};

template <typename T>
void accumulate(Tensor<T>& dst, Tensor<T> g) {
  if (!dst.defined()) {
    dst = std::move(g);
    return;
  }
  if (!dst.unique()) dst = dst.clone();
  add_inplace(dst, g);
}
}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

std::uint64_t next_node_id() { return g_node_counter.fetch_add(1); }

template <typename T>
bool GradSink<T>::needs(std::size_t input) const {
  return input < node_.inputs.size() && node_.inputs[input] != nullptr;
}

template <typename T>
void GradSink<T>::add(std::size_t input, Tensor<T> grad) {
  if (!needs(input)) return;
  Node<T>& dst = *node_.inputs[input];
  Index expected = 1;
  for (Index d : dst.shape) expected *= d;
  if (grad.size() != expected)
    throw std::logic_error("gradient shape mismatch in backward of " + std::string(node_.op));
  accumulate(dst.grad, std::move(grad));
}

template <typename T>
Var<T> Param<T>::var() {
  if (!grad_enabled()) return Var<T>(value);
  if (!leaf_) {
    leaf_ = std::make_shared<Node<T>>();
    leaf_->id = next_node_id();
    leaf_->op = "param";
    leaf_->shape = value.shape();
    leaf_->param = this;
  }
  return Var<T>(value, leaf_);
}

template <typename T>
void Param<T>::zero_grad() {
  if (grad.defined()) std::fill_n(grad.data(), grad.size(), T(0));
  has_grad = false;
}

template <typename T>
void backward(const Var<T>& root) {
  if (!root.requires_grad()) throw std::invalid_argument("backward: root does not require grad");
  if (root.value().size() != 1) throw std::invalid_argument("backward: root must be a scalar");

  using NodePtr = std::shared_ptr<Node<T>>;
  std::vector<NodePtr> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<NodePtr> stack{root.node()};
  while (!stack.empty()) {
    NodePtr n = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    for (const auto& in : n->inputs)
      if (in) stack.push_back(in);
    order.push_back(std::move(n));
  }
  std::sort(order.begin(), order.end(), [](const NodePtr& a, const NodePtr& b) { return a->id > b->id; });

  root.node()->grad = Tensor<T>::full(root.value().shape(), T(1));
  for (NodePtr& owned : order) {
    NodePtr n = std::move(owned);
    if (!n->grad.defined()) continue;
    if (n->param != nullptr) {
      Param<T>& p = *n->param;
      ensure_finite(n->grad, "gradient of " + p.name);
      if (!p.grad.defined()) p.grad = Tensor<T>::zeros(p.value.shape());
      add_inplace(p.grad, n->grad);
      p.has_grad = true;
      n->grad = Tensor<T>();
      continue;
    }
    if (n->backward) {
      GradSink<T> sink(*n);
      n->backward(n->grad, sink);
    }
    n->grad = Tensor<T>();
    n->backward = nullptr;
    n->inputs.clear();
  }
}

template struct Param<float>;
template struct Param<double>;
template class GradSink<float>;
template class GradSink<double>;
template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);

}  // namespace maeast::nn
