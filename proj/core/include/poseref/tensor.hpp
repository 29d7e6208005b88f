#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace poseref {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

// Dense double-precision tensor with reverse-mode autodiff. Every op creates a new
// tensor; ops that see a tracked input attach a tape node holding the backward rule.
// backward() walks the recorded nodes in reverse creation order, so gradients
// accumulate into every tracked leaf reachable from the loss.
class Tensor {
 public:
  Tensor();  // empty (rank 0, no storage)
  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor from(const Shape& shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  int rank() const;
  const Shape& shape() const;
  int size(int axis) const;
  std::size_t numel() const;

  double* data();
  const double* data() const;
  std::vector<double>& values();
  const std::vector<double>& values() const;
  double& at(std::initializer_list<int> index);
  double at(std::initializer_list<int> index) const;
  double item() const;  // scalar tensors only

  Tensor& set_requires_grad(bool enabled);
  bool requires_grad() const;
  bool tracked() const;  // requires_grad or produced by a recorded op

  const std::vector<double>& grad() const;  // empty until backward reaches it
  void zero_grad();
  // Value copy detached from the graph.
  Tensor detach() const;

  // Scalar tensors only; repeated calls keep accumulating into leaf grads.
  void backward();

  TensorImpl* impl() const { return impl_.get(); }
  std::shared_ptr<TensorImpl> impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
  friend Tensor make_tensor(Shape shape);
};

struct TapeNode {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // Reads the output's grad and accumulates into the inputs' grads.
  std::function<void(const TensorImpl& out)> backprop;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t id = 0;  // creation order; consumers always have larger ids
  std::unique_ptr<TapeNode> node;

  std::vector<double>& grad_buffer();  // lazily sized to match data
};

Tensor make_tensor(Shape shape);

// Recording can be suspended for inference passes.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// When checked mode is on, ops reject non-finite inputs and the model rejects
// non-finite activations. Off by default.
bool checked_mode();
void set_checked_mode(bool enabled);

}  // namespace poseref
