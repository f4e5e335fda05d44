#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tagan::ad {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A named trainable grid. Gradients accumulate into `grad` on every Backward()
// until ZeroGrad().
template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix<T>::Zero(rows, cols)), grad(Matrix<T>::Zero(rows, cols)) {}

  Eigen::Index size() const { return value.size(); }
  void ZeroGrad() { grad.setZero(); }
};

// Non-owning view of parameters in declaration order.
template <typename T>
class ParameterSet {
 public:
  ParameterSet() = default;
  explicit ParameterSet(std::vector<Parameter<T>*> items) : items_(std::move(items)) {}

  void Add(Parameter<T>& p) { items_.push_back(&p); }
  void Append(const ParameterSet& other) {
    items_.insert(items_.end(), other.items_.begin(), other.items_.end());
  }

  std::size_t size() const { return items_.size(); }
  Parameter<T>& operator[](std::size_t i) const { return *items_[i]; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  std::int64_t ValueCount() const;
  void ZeroGrad() const;
  bool Contains(const Parameter<T>* p) const;

 private:
  std::vector<Parameter<T>*> items_;
};

template <typename T>
class Tape;

// Handle to a node on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::uint32_t id = 0;

  const Matrix<T>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  T scalar() const { return value()(0, 0); }
};

// Records a computation over dense row-major matrices and replays it in
// reverse. Nodes are appended in evaluation order, which is a topological
// order, so Backward() walks the node list once from the root down.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> Constant(Matrix<T> value);
  Var<T> Leaf(Parameter<T>& param);
  // Leaf when trainable, otherwise a constant copy of the current value.
  Var<T> Bind(Parameter<T>& param, bool trainable) {
    return trainable ? Leaf(param) : Constant(param.value);
  }

  Var<T> MatMul(Var<T> a, Var<T> b);
  Var<T> Add(Var<T> a, Var<T> b);
  Var<T> Sub(Var<T> a, Var<T> b);
  Var<T> Mul(Var<T> a, Var<T> b);
  // x * w + b, with b a 1 x n row broadcast over rows.
  Var<T> Affine(Var<T> x, Var<T> w, Var<T> b);
  Var<T> Sigmoid(Var<T> x);
  Var<T> Tanh(Var<T> x);
  Var<T> Log(Var<T> x);
  Var<T> Square(Var<T> x);
  Var<T> Scale(Var<T> x, T factor);
  Var<T> AddScalar(Var<T> x, T offset);
  // Gradient passes where lo <= x <= hi.
  Var<T> Clamp(Var<T> x, T lo, T hi);
  Var<T> Sum(Var<T> x);
  Var<T> Mean(Var<T> x);
  // Per-row sum: r x c -> r x 1.
  Var<T> RowSum(Var<T> x);
  Var<T> ConcatCols(std::span<const Var<T>> parts);
  Var<T> SliceCols(Var<T> x, Eigen::Index begin, Eigen::Index count);

  // Root must be 1 x 1. Adds d(root)/d(leaf) into each reachable parameter's
  // grad; calling twice adds twice.
  void Backward(Var<T> root);

  const Matrix<T>& value(Var<T> v) const { return nodes_[v.id].value; }
  // Adjoint from the last Backward(); empty if the node was not reached.
  const Matrix<T>& adjoint(Var<T> v) const { return nodes_[v.id].adjoint; }
  bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> adjoint;
    bool requires_grad = false;
    bool reached = false;
    Parameter<T>* sink = nullptr;
    std::function<void(Tape&, const Node&)> backward;
  };

  Var<T> Push(Matrix<T> value, bool requires_grad,
              std::function<void(Tape&, const Node&)> backward = {});
  template <typename Expr>
  void Accumulate(std::uint32_t id, const Expr& grad);
  bool Needs(Var<T> v) const { return nodes_[v.id].requires_grad; }
  void CheckSameShape(Var<T> a, Var<T> b, const char* op) const;

  std::vector<Node> nodes_;
};

template <typename T>
const Matrix<T>& Var<T>::value() const {
  return tape->value(*this);
}

template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) { return a.tape->Add(a, b); }
template <typename T>
Var<T> operator-(Var<T> a, Var<T> b) { return a.tape->Sub(a, b); }
template <typename T>
Var<T> operator*(Var<T> a, Var<T> b) { return a.tape->Mul(a, b); }

template <typename T>
Var<T> MatMul(Var<T> a, Var<T> b) { return a.tape->MatMul(a, b); }
template <typename T>
Var<T> Sigmoid(Var<T> x) { return x.tape->Sigmoid(x); }
template <typename T>
Var<T> Tanh(Var<T> x) { return x.tape->Tanh(x); }

struct GradientCheckResult {
  double max_relative_error = 0.0;
  int probes = 0;
};

// Compares reverse-mode gradients against central differences
// (f(p+h) - f(p-h)) / 2h at `probes` uniformly drawn coordinates of `params`.
// `loss` must build a scalar on the given tape deterministically.
// Relative error is |a - n| / max(|a|, |n|, s) with s = max(1e-7, 1e5 eps |f| / h),
// so coordinates lost in rounding noise are compared in absolute terms.
GradientCheckResult GradientCheck(const std::function<Var<double>(Tape<double>&)>& loss,
                                  const ParameterSet<double>& params, int probes,
                                  std::uint64_t seed, double step = 1e-5);

extern template class Tape<float>;
extern template class Tape<double>;
extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace tagan::ad
