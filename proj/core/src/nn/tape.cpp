#include "habi/nn/tape.hpp"

#include <cmath>
#include <string>

#include "habi/errors.hpp"
#include "habi/nn/product.hpp"

namespace habi::nn {

template <class Real>
void Tape<Real>::check(Var v) const {
  if (v.id >= nodes_.size()) {
    throw UsageError("tape: variable " + std::to_string(v.id) + " is not on this tape");
  }
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::emit(Mat value, bool needs_grad,
                                          std::function<void(Tape&, const Mat&)> push) {
  Node node;
  node.owned = std::move(value);
  node.needs_grad = needs_grad;
  if (needs_grad) node.push = std::move(push);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <class Real>
void Tape<Real>::accumulate(Var target, const Mat& g) {
  Node& node = nodes_[target.id];
  if (!node.needs_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::constant(Mat value) {
  return emit(std::move(value), false, nullptr);
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::parameter(const Mat& value, Mat* grad_sink) {
  if (grad_sink != nullptr &&
      (grad_sink->rows() != value.rows() || grad_sink->cols() != value.cols())) {
    if (grad_sink->size() != 0) throw ConfigError("tape.parameter: gradient sink shape mismatch");
    *grad_sink = Mat::Zero(value.rows(), value.cols());
  }
  Node node;
  node.external = &value;
  node.sink = grad_sink;
  node.needs_grad = grad_sink != nullptr;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::parameter(const Vector<Real>& value, Vector<Real>* grad_sink) {
  if (grad_sink != nullptr && grad_sink->size() != value.size()) {
    if (grad_sink->size() != 0) throw ConfigError("tape.parameter: gradient sink shape mismatch");
    *grad_sink = Vector<Real>::Zero(value.size());
  }
  Node node;
  node.owned = value;
  node.vec_sink = grad_sink;
  node.needs_grad = grad_sink != nullptr;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::detach(Var x) {
  check(x);
  return constant(value(x));
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::matmul(Var a, Var b) {
  check(a);
  check(b);
  if (value(a).cols() != value(b).rows()) {
    throw ConfigError("tape.matmul: inner dimensions differ (" + std::to_string(value(a).cols()) +
                      " vs " + std::to_string(value(b).rows()) + ")");
  }
  Mat out;
  product_into(value(a), value(b), out);
  return emit(std::move(out), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
    if (t.needs(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.needs(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::add_bias(Var x, Var b) {
  check(x);
  check(b);
  const Mat& bv = value(b);
  if (bv.cols() != 1 || bv.rows() != value(x).rows()) {
    throw ConfigError("tape.add_bias: bias must be a column matching the row count");
  }
  Mat out = value(x).colwise() + bv.col(0);
  return emit(std::move(out), needs(x) || needs(b), [x, b](Tape& t, const Mat& g) {
    if (t.needs(x)) t.accumulate(x, g);
    if (t.needs(b)) t.accumulate(b, g.rowwise().sum());
  });
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::add(Var a, Var b) {
  check(a);
  check(b);
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw ConfigError("tape.add: shape mismatch");
  }
  Mat out = value(a) + value(b);
  return emit(std::move(out), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::sub(Var a, Var b) {
  check(a);
  check(b);
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw ConfigError("tape.sub: shape mismatch");
  }
  Mat out = value(a) - value(b);
  return emit(std::move(out), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    if (t.needs(b)) t.accumulate(b, -g);
  });
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::mul(Var a, Var b) {
  check(a);
  check(b);
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw ConfigError("tape.mul: shape mismatch");
  }
  Mat out = value(a).cwiseProduct(value(b));
  return emit(std::move(out), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
    if (t.needs(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.needs(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::div(Var a, Var b) {
  check(a);
  check(b);
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw ConfigError("tape.div: shape mismatch");
  }
  Mat out = value(a).cwiseQuotient(value(b));
  Var result = emit(std::move(out), needs(a) || needs(b), nullptr);
  if (needs(result)) {
    nodes_[result.id].push = [a, b, result](Tape& t, const Mat& g) {
      const Mat& bv = t.value(b);
      if (t.needs(a)) t.accumulate(a, g.cwiseQuotient(bv));
      if (t.needs(b)) t.accumulate(b, -g.cwiseProduct(t.value(result)).cwiseQuotient(bv));
    };
  }
  return result;
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::scale(Var x, Real factor) {
  check(x);
  Mat out = value(x) * factor;
  return emit(std::move(out), needs(x),
              [x, factor](Tape& t, const Mat& g) { t.accumulate(x, g * factor); });
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::add_scalar(Var x, Real offset) {
  check(x);
  Mat out = value(x).array() + offset;
  return emit(std::move(out), needs(x), [x](Tape& t, const Mat& g) { t.accumulate(x, g); });
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::relu(Var x) {
  check(x);
  Mat out = value(x).cwiseMax(Real(0));
  return emit(std::move(out), needs(x), [x](Tape& t, const Mat& g) {
    t.accumulate(x, (t.value(x).array() > Real(0)).select(g, Real(0)));
  });
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::tanh(Var x) {
  check(x);
  Mat out = value(x).array().tanh();
  Var result = emit(std::move(out), needs(x), nullptr);
  if (needs(result)) {
    nodes_[result.id].push = [x, result](Tape& t, const Mat& g) {
      const auto y = t.value(result).array();
      t.accumulate(x, (g.array() * (Real(1) - y * y)).matrix());
    };
  }
  return result;
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::softplus(Var x) {
  check(x);
  // max(x, 0) + log1p(exp(-|x|))
  Mat out = value(x).unaryExpr([](Real v) {
    return std::max(v, Real(0)) + std::log1p(std::exp(-std::abs(v)));
  });
  return emit(std::move(out), needs(x), [x](Tape& t, const Mat& g) {
    Mat sig = t.value(x).unaryExpr([](Real v) {
      return v >= Real(0) ? Real(1) / (Real(1) + std::exp(-v))
                          : std::exp(v) / (Real(1) + std::exp(v));
    });
    t.accumulate(x, g.cwiseProduct(sig));
  });
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::exp(Var x) {
  check(x);
  Mat out = value(x).array().exp();
  Var result = emit(std::move(out), needs(x), nullptr);
  if (needs(result)) {
    nodes_[result.id].push = [x, result](Tape& t, const Mat& g) {
      t.accumulate(x, g.cwiseProduct(t.value(result)));
    };
  }
  return result;
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::log(Var x) {
  check(x);
  Mat out = value(x).array().log();
  return emit(std::move(out), needs(x),
              [x](Tape& t, const Mat& g) { t.accumulate(x, g.cwiseQuotient(t.value(x))); });
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::square(Var x) {
  check(x);
  Mat out = value(x).array().square();
  return emit(std::move(out), needs(x), [x](Tape& t, const Mat& g) {
    t.accumulate(x, Real(2) * g.cwiseProduct(t.value(x)));
  });
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::sqrt(Var x) {
  check(x);
  Mat out = value(x).array().sqrt();
  Var result = emit(std::move(out), needs(x), nullptr);
  if (needs(result)) {
    nodes_[result.id].push = [x, result](Tape& t, const Mat& g) {
      t.accumulate(x, (g.array() / (Real(2) * t.value(result).array())).matrix());
    };
  }
  return result;
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::sum(Var x) {
  check(x);
  Mat out(1, 1);
  out(0, 0) = value(x).sum();
  return emit(std::move(out), needs(x), [x](Tape& t, const Mat& g) {
    const Mat& xv = t.value(x);
    t.accumulate(x, Mat::Constant(xv.rows(), xv.cols(), g(0, 0)));
  });
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::mean(Var x) {
  check(x);
  const auto n = static_cast<Real>(value(x).size());
  if (value(x).size() == 0) throw UsageError("tape.mean: empty input");
  return scale(sum(x), Real(1) / n);
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::col_sum(Var x) {
  check(x);
  Mat out = value(x).colwise().sum();
  return emit(std::move(out), needs(x), [x](Tape& t, const Mat& g) {
    t.accumulate(x, g.replicate(t.value(x).rows(), 1));
  });
}

template <class Real>
typename Tape<Real>::Var Tape<Real>::vcat(Var a, Var b) {
  check(a);
  check(b);
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.cols() != bv.cols()) throw ConfigError("tape.vcat: column counts differ");
  Mat out(av.rows() + bv.rows(), av.cols());
  out.topRows(av.rows()) = av;
  out.bottomRows(bv.rows()) = bv;
  const Index split = av.rows();
  return emit(std::move(out), needs(a) || needs(b), [a, b, split](Tape& t, const Mat& g) {
    if (t.needs(a)) t.accumulate(a, g.topRows(split));
    if (t.needs(b)) t.accumulate(b, g.bottomRows(g.rows() - split));
  });
}

template <class Real>
const typename Tape<Real>::Mat& Tape<Real>::value(Var v) const {
  check(v);
  return nodes_[v.id].value();
}

template <class Real>
Real Tape<Real>::scalar(Var v) const {
  const Mat& m = value(v);
  if (m.rows() != 1 || m.cols() != 1) throw UsageError("tape.scalar: node is not 1x1");
  return m(0, 0);
}

template <class Real>
const typename Tape<Real>::Mat& Tape<Real>::grad(Var v) const {
  check(v);
  return nodes_[v.id].grad;
}

template <class Real>
void Tape<Real>::backward(Var loss) {
  check(loss);
  const Mat& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw UsageError("tape.backward: loss must be a scalar, got " + std::to_string(lv.rows()) +
                     "x" + std::to_string(lv.cols()));
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.id].needs_grad) return;
  nodes_[loss.id].grad = Mat::Ones(1, 1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.size() == 0) continue;
    if (node.push) {
      // push only touches earlier nodes; nodes_ is not resized during backward.
      node.push(*this, node.grad);
    }
    if (node.sink != nullptr) *node.sink += node.grad;
    if (node.vec_sink != nullptr) *node.vec_sink += node.grad.col(0);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace habi::nn
