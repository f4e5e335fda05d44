#include "tagan/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tagan/error.hpp"
#include "tagan/rng.hpp"

namespace tagan::ad {

namespace {

std::string ShapeString(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

template <typename T>
std::int64_t ParameterSet<T>::ValueCount() const {
  std::int64_t n = 0;
  for (const auto* p : items_) n += p->size();
  return n;
}

template <typename T>
void ParameterSet<T>::ZeroGrad() const {
  for (auto* p : items_) p->ZeroGrad();
}

template <typename T>
bool ParameterSet<T>::Contains(const Parameter<T>* p) const {
  return std::find(items_.begin(), items_.end(), p) != items_.end();
}

template <typename T>
Var<T> Tape<T>::Push(Matrix<T> value, bool requires_grad,
                     std::function<void(Tape&, const Node&)> backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
template <typename Expr>
void Tape<T>::Accumulate(std::uint32_t id, const Expr& grad) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!n.reached) {
    n.adjoint = grad;
    n.reached = true;
  } else {
    n.adjoint += grad;
  }
}

template <typename T>
void Tape<T>::CheckSameShape(Var<T> a, Var<T> b, const char* op) const {
  const auto& x = value(a);
  const auto& y = value(b);
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw Error(ErrorKind::kShapeMismatch, std::string(op) + ": " + ShapeString(x.rows(), x.cols()) +
                                               " vs " + ShapeString(y.rows(), y.cols()));
  }
}

template <typename T>
Var<T> Tape<T>::Constant(Matrix<T> value) {
  return Push(std::move(value), false);
}

template <typename T>
Var<T> Tape<T>::Leaf(Parameter<T>& param) {
  Var<T> v = Push(param.value, true, [](Tape&, const Node&) {});
  nodes_[v.id].sink = &param;
  return v;
}

template <typename T>
Var<T> Tape<T>::MatMul(Var<T> a, Var<T> b) {
  const auto& x = value(a);
  const auto& y = value(b);
  if (x.cols() != y.rows()) {
    throw Error(ErrorKind::kShapeMismatch, "matmul: " + ShapeString(x.rows(), x.cols()) + " * " +
                                               ShapeString(y.rows(), y.cols()));
  }
  Matrix<T> out = x * y;
  const std::uint32_t ia = a.id, ib = b.id;
  return Push(std::move(out), Needs(a) || Needs(b), [ia, ib](Tape& t, const Node& n) {
    if (t.nodes_[ia].requires_grad) t.Accumulate(ia, n.adjoint * t.nodes_[ib].value.transpose());
    if (t.nodes_[ib].requires_grad) t.Accumulate(ib, t.nodes_[ia].value.transpose() * n.adjoint);
  });
}

template <typename T>
Var<T> Tape<T>::Add(Var<T> a, Var<T> b) {
  CheckSameShape(a, b, "add");
  const std::uint32_t ia = a.id, ib = b.id;
  return Push(value(a) + value(b), Needs(a) || Needs(b), [ia, ib](Tape& t, const Node& n) {
    t.Accumulate(ia, n.adjoint);
    t.Accumulate(ib, n.adjoint);
  });
}

template <typename T>
Var<T> Tape<T>::Sub(Var<T> a, Var<T> b) {
  CheckSameShape(a, b, "sub");
  const std::uint32_t ia = a.id, ib = b.id;
  return Push(value(a) - value(b), Needs(a) || Needs(b), [ia, ib](Tape& t, const Node& n) {
    t.Accumulate(ia, n.adjoint);
    t.Accumulate(ib, -n.adjoint);
  });
}

template <typename T>
Var<T> Tape<T>::Mul(Var<T> a, Var<T> b) {
  CheckSameShape(a, b, "mul");
  const std::uint32_t ia = a.id, ib = b.id;
  Matrix<T> out = value(a).cwiseProduct(value(b));
  return Push(std::move(out), Needs(a) || Needs(b), [ia, ib](Tape& t, const Node& n) {
    if (t.nodes_[ia].requires_grad) t.Accumulate(ia, n.adjoint.cwiseProduct(t.nodes_[ib].value));
    if (t.nodes_[ib].requires_grad) t.Accumulate(ib, n.adjoint.cwiseProduct(t.nodes_[ia].value));
  });
}

template <typename T>
Var<T> Tape<T>::Affine(Var<T> x, Var<T> w, Var<T> b) {
  const auto& xv = value(x);
  const auto& wv = value(w);
  const auto& bv = value(b);
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw Error(ErrorKind::kShapeMismatch, "affine: x " + ShapeString(xv.rows(), xv.cols()) + ", w " +
                                               ShapeString(wv.rows(), wv.cols()) + ", b " +
                                               ShapeString(bv.rows(), bv.cols()));
  }
  Matrix<T> out = xv * wv;
  out.rowwise() += bv.row(0);
  const std::uint32_t ix = x.id, iw = w.id, ib = b.id;
  return Push(std::move(out), Needs(x) || Needs(w) || Needs(b), [ix, iw, ib](Tape& t, const Node& n) {
    if (t.nodes_[ix].requires_grad) t.Accumulate(ix, n.adjoint * t.nodes_[iw].value.transpose());
    if (t.nodes_[iw].requires_grad) t.Accumulate(iw, t.nodes_[ix].value.transpose() * n.adjoint);
    if (t.nodes_[ib].requires_grad) t.Accumulate(ib, n.adjoint.colwise().sum());
  });
}

template <typename T>
Var<T> Tape<T>::Sigmoid(Var<T> x) {
  Matrix<T> out = (T(1) + (-value(x).array()).exp()).inverse().matrix();
  const std::uint32_t ix = x.id;
  return Push(std::move(out), Needs(x), [ix](Tape& t, const Node& n) {
    t.Accumulate(ix, (n.adjoint.array() * n.value.array() * (T(1) - n.value.array())).matrix());
  });
}

template <typename T>
Var<T> Tape<T>::Tanh(Var<T> x) {
  Matrix<T> out = value(x).array().tanh().matrix();
  const std::uint32_t ix = x.id;
  return Push(std::move(out), Needs(x), [ix](Tape& t, const Node& n) {
    t.Accumulate(ix, (n.adjoint.array() * (T(1) - n.value.array().square())).matrix());
  });
}

template <typename T>
Var<T> Tape<T>::Log(Var<T> x) {
  Matrix<T> out = value(x).array().log().matrix();
  const std::uint32_t ix = x.id;
  return Push(std::move(out), Needs(x), [ix](Tape& t, const Node& n) {
    t.Accumulate(ix, (n.adjoint.array() / t.nodes_[ix].value.array()).matrix());
  });
}

template <typename T>
Var<T> Tape<T>::Square(Var<T> x) {
  Matrix<T> out = value(x).array().square().matrix();
  const std::uint32_t ix = x.id;
  return Push(std::move(out), Needs(x), [ix](Tape& t, const Node& n) {
    t.Accumulate(ix, (T(2) * n.adjoint.array() * t.nodes_[ix].value.array()).matrix());
  });
}

template <typename T>
Var<T> Tape<T>::Scale(Var<T> x, T factor) {
  const std::uint32_t ix = x.id;
  return Push(value(x) * factor, Needs(x), [ix, factor](Tape& t, const Node& n) {
    t.Accumulate(ix, n.adjoint * factor);
  });
}

template <typename T>
Var<T> Tape<T>::AddScalar(Var<T> x, T offset) {
  const std::uint32_t ix = x.id;
  Matrix<T> out = (value(x).array() + offset).matrix();
  return Push(std::move(out), Needs(x), [ix](Tape& t, const Node& n) { t.Accumulate(ix, n.adjoint); });
}

template <typename T>
Var<T> Tape<T>::Clamp(Var<T> x, T lo, T hi) {
  const std::uint32_t ix = x.id;
  Matrix<T> out = value(x).cwiseMax(lo).cwiseMin(hi);
  return Push(std::move(out), Needs(x), [ix, lo, hi](Tape& t, const Node& n) {
    const auto& in = t.nodes_[ix].value.array();
    t.Accumulate(ix, ((in >= lo && in <= hi).template cast<T>() * n.adjoint.array()).matrix());
  });
}

template <typename T>
Var<T> Tape<T>::Sum(Var<T> x) {
  const std::uint32_t ix = x.id;
  Matrix<T> out(1, 1);
  out(0, 0) = value(x).sum();
  return Push(std::move(out), Needs(x), [ix](Tape& t, const Node& n) {
    const auto& in = t.nodes_[ix].value;
    t.Accumulate(ix, Matrix<T>::Constant(in.rows(), in.cols(), n.adjoint(0, 0)));
  });
}

template <typename T>
Var<T> Tape<T>::Mean(Var<T> x) {
  const std::uint32_t ix = x.id;
  Matrix<T> out(1, 1);
  out(0, 0) = value(x).mean();
  return Push(std::move(out), Needs(x), [ix](Tape& t, const Node& n) {
    const auto& in = t.nodes_[ix].value;
    t.Accumulate(ix, Matrix<T>::Constant(in.rows(), in.cols(), n.adjoint(0, 0) / static_cast<T>(in.size())));
  });
}

template <typename T>
Var<T> Tape<T>::RowSum(Var<T> x) {
  const std::uint32_t ix = x.id;
  Matrix<T> out = value(x).rowwise().sum();
  return Push(std::move(out), Needs(x), [ix](Tape& t, const Node& n) {
    const auto cols = t.nodes_[ix].value.cols();
    t.Accumulate(ix, n.adjoint.replicate(1, cols));
  });
}

template <typename T>
Var<T> Tape<T>::ConcatCols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw Error(ErrorKind::kShapeMismatch, "concat: no inputs");
  const Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (value(p).rows() != rows) {
      throw Error(ErrorKind::kShapeMismatch, "concat: row counts differ");
    }
    cols += value(p).cols();
    needs = needs || Needs(p);
  }
  Matrix<T> out(rows, cols);
  std::vector<std::uint32_t> ids;
  std::vector<Eigen::Index> widths;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    const auto& v = value(p);
    out.middleCols(offset, v.cols()) = v;
    offset += v.cols();
    ids.push_back(p.id);
    widths.push_back(v.cols());
  }
  return Push(std::move(out), needs, [ids = std::move(ids), widths = std::move(widths)](Tape& t, const Node& n) {
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (t.nodes_[ids[i]].requires_grad) t.Accumulate(ids[i], n.adjoint.middleCols(off, widths[i]));
      off += widths[i];
    }
  });
}

template <typename T>
Var<T> Tape<T>::SliceCols(Var<T> x, Eigen::Index begin, Eigen::Index count) {
  const auto& v = value(x);
  if (begin < 0 || count <= 0 || begin + count > v.cols()) {
    throw Error(ErrorKind::kShapeMismatch, "slice [" + std::to_string(begin) + ", +" + std::to_string(count) +
                                               ") of " + ShapeString(v.rows(), v.cols()));
  }
  const std::uint32_t ix = x.id;
  Matrix<T> out = v.middleCols(begin, count);
  return Push(std::move(out), Needs(x), [ix, begin, count](Tape& t, const Node& n) {
    Node& in = t.nodes_[ix];
    if (!in.reached) {
      in.adjoint = Matrix<T>::Zero(in.value.rows(), in.value.cols());
      in.reached = true;
    }
    in.adjoint.middleCols(begin, count) += n.adjoint;
  });
}

template <typename T>
void Tape<T>::Backward(Var<T> root) {
  Node& r = nodes_.at(root.id);
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw Error(ErrorKind::kNonScalarRoot, "root is " + ShapeString(r.value.rows(), r.value.cols()));
  }
  for (auto& n : nodes_) {
    n.reached = false;
    n.adjoint.resize(0, 0);
  }
  if (!r.requires_grad) return;
  r.adjoint = Matrix<T>::Ones(1, 1);
  r.reached = true;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.reached || !n.backward) continue;
    n.backward(*this, n);
  }
  for (auto& n : nodes_) {
    if (n.sink != nullptr && n.reached) n.sink->grad += n.adjoint;
  }
}

template class Tape<float>;
template class Tape<double>;
template class ParameterSet<float>;
template class ParameterSet<double>;

GradientCheckResult GradientCheck(const std::function<Var<double>(Tape<double>&)>& loss,
                                  const ParameterSet<double>& params, int probes,
                                  std::uint64_t seed, double step) {
  params.ZeroGrad();
  double value = 0.0;
  {
    Tape<double> tape;
    Var<double> root = loss(tape);
    value = root.scalar();
    tape.Backward(root);
  }
  // Central differences carry roughly eps * |f| / h of rounding noise; below
  // 1e5 times that the comparison is absolute, allowing 10x the noise at 1e-4.
  const double floor =
      std::max(1e-7, 1e5 * std::numeric_limits<double>::epsilon() * std::abs(value) / step);
  const std::int64_t total = params.ValueCount();
  GradientCheckResult result;
  if (total == 0) return result;
  Rng rng(seed);
  auto evaluate = [&] {
    Tape<double> tape;
    return loss(tape).scalar();
  };
  for (int k = 0; k < probes; ++k) {
    auto flat = static_cast<std::int64_t>(rng.Index(static_cast<std::uint64_t>(total)));
    std::size_t pi = 0;
    while (flat >= params[pi].size()) {
      flat -= params[pi].size();
      ++pi;
    }
    Parameter<double>& p = params[pi];
    double& coord = p.value.data()[flat];
    const double saved = coord;
    coord = saved + step;
    const double up = evaluate();
    coord = saved - step;
    const double down = evaluate();
    coord = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = p.grad.data()[flat];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
    ++result.probes;
  }
  return result;
}

}  // namespace tagan::ad
