#include "poseref/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace poseref {
namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;
bool g_checked_mode = false;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("tensor shape has negative extent");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::vector<double>& TensorImpl::grad_buffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor make_tensor(Shape shape) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data.assign(shape_numel(impl->shape), 0.0);
  impl->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(impl));
}

Tensor::Tensor() = default;

Tensor Tensor::zeros(const Shape& shape) { return make_tensor(shape); }

Tensor Tensor::full(const Shape& shape, double value) {
  Tensor t = make_tensor(shape);
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values) {
  if (values.size() != shape_numel(shape))
    throw std::invalid_argument("Tensor::from: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  Tensor t = make_tensor(shape);
  t.impl_->data = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

int Tensor::rank() const { return static_cast<int>(shape().size()); }

const Shape& Tensor::shape() const {
  if (!impl_) throw std::logic_error("shape() on empty tensor");
  return impl_->shape;
}

int Tensor::size(int axis) const {
  const Shape& s = shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw std::out_of_range("tensor axis out of range");
  return s[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

double* Tensor::data() { return values().data(); }
const double* Tensor::data() const { return values().data(); }

std::vector<double>& Tensor::values() {
  if (!impl_) throw std::logic_error("values() on empty tensor");
  return impl_->data;
}

const std::vector<double>& Tensor::values() const {
  if (!impl_) throw std::logic_error("values() on empty tensor");
  return impl_->data;
}

double& Tensor::at(std::initializer_list<int> index) {
  const Shape& s = shape();
  if (index.size() != s.size())
    throw std::invalid_argument("at(): index rank mismatch");
  std::size_t flat = 0;
  int axis = 0;
  for (int i : index) {
    if (i < 0 || i >= s[axis]) throw std::out_of_range("at(): index out of range");
    flat = flat * static_cast<std::size_t>(s[axis]) + static_cast<std::size_t>(i);
    ++axis;
  }
  return impl_->data[flat];
}

double Tensor::at(std::initializer_list<int> index) const {
  return const_cast<Tensor*>(this)->at(index);
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on non-scalar tensor");
  return values()[0];
}

Tensor& Tensor::set_requires_grad(bool enabled) {
  if (!impl_) throw std::logic_error("set_requires_grad on empty tensor");
  impl_->requires_grad = enabled;
  return *this;
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

bool Tensor::tracked() const {
  return impl_ && (impl_->requires_grad || impl_->node != nullptr);
}

const std::vector<double>& Tensor::grad() const {
  static const std::vector<double> empty;
  if (!impl_) return empty;
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::detach() const {
  Tensor t = make_tensor(shape());
  t.impl_->data = values();
  return t;
}

void Tensor::backward() {
  if (!impl_) throw std::logic_error("backward() on empty tensor");
  if (numel() != 1) throw std::invalid_argument("backward() requires a scalar tensor");

  // Gather every impl reachable through tape nodes. Creation ids give a valid
  // topological order because an op's output is always created after its inputs.
  std::vector<TensorImpl*> order;
  std::unordered_set<const TensorImpl*> seen;
  std::vector<TensorImpl*> stack{impl_.get()};
  seen.insert(impl_.get());
  while (!stack.empty()) {
    TensorImpl* cur = stack.back();
    stack.pop_back();
    if (!cur->node) continue;
    order.push_back(cur);
    for (const auto& in : cur->node->inputs) {
      if (seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const TensorImpl* a, const TensorImpl* b) { return a->id > b->id; });

  // Interior grads are scratch space for this pass; only leaf grads accumulate
  // across repeated backward() calls.
  for (TensorImpl* node_impl : order) node_impl->grad.assign(node_impl->data.size(), 0.0);
  impl_->grad_buffer()[0] += 1.0;
  for (TensorImpl* node_impl : order) node_impl->node->backprop(*node_impl);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool checked_mode() { return g_checked_mode; }
void set_checked_mode(bool enabled) { g_checked_mode = enabled; }

}  // namespace poseref
