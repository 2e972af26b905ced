#include "cee/tape.hpp"

#include <algorithm>
#include <cmath>

#include "cee/errors.hpp"

namespace cee {

Tape::Node Tape::push(Record r) {
  r.grad.assign(r.value.size(), 0.0);
  nodes_.push_back(std::move(r));
  return Node{nodes_.size() - 1};
}

const Tape::Record& Tape::at(Node n) const {
  if (n.index >= nodes_.size()) throw UsageError("Tape: node does not belong to this tape");
  return nodes_[n.index];
}

double Tape::scalar(Node n) const {
  const Record& r = at(n);
  if (r.value.size() != 1) throw UsageError("Tape::scalar: node is not a scalar");
  return r.value[0];
}

Tape::Node Tape::constant(Vec value) {
  Record r;
  r.op = Op::Constant;
  r.value = std::move(value);
  return push(std::move(r));
}

Tape::Node Tape::affine(Parameter& weight, Parameter& bias, Node x) {
  Record r;
  r.op = Op::Affine;
  r.value = cee::affine(weight, bias, at(x).value);
  r.lhs = x.index;
  r.weight = &weight;
  r.bias = &bias;
  return push(std::move(r));
}

Tape::Node Tape::relu(Node x) {
  Record r;
  r.op = Op::Relu;
  r.value = cee::relu(at(x).value);
  r.lhs = x.index;
  return push(std::move(r));
}

Tape::Node Tape::add(Node a, Node b) {
  const Vec& av = at(a).value;
  const Vec& bv = at(b).value;
  if (av.size() != bv.size()) throw ConfigError("Tape::add: length mismatch");
  Record r;
  r.op = Op::Add;
  r.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) r.value[i] = av[i] + bv[i];
  r.lhs = a.index;
  r.rhs = b.index;
  return push(std::move(r));
}

Tape::Node Tape::softmax_cross_entropy(Node logits, std::size_t label) {
  Record r;
  r.op = Op::SoftmaxXent;
  r.aux = cee::softmax(at(logits).value);
  r.value = {cross_entropy(label, r.aux)};
  r.lhs = logits.index;
  r.index = label;
  return push(std::move(r));
}

Tape::Node Tape::log_softmax_at(Node logits, std::size_t index) {
  const Vec& z = at(logits).value;
  if (index >= z.size()) throw UsageError("Tape::log_softmax_at: index out of range");
  Record r;
  r.op = Op::LogSoftmaxAt;
  r.aux = cee::softmax(z);
  const double hi = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - hi);
  r.value = {z[index] - hi - std::log(total)};
  r.lhs = logits.index;
  r.index = index;
  return push(std::move(r));
}

Tape::Node Tape::softmax_at(Node logits, std::size_t index) {
  const Vec& z = at(logits).value;
  if (index >= z.size()) throw UsageError("Tape::softmax_at: index out of range");
  Record r;
  r.op = Op::SoftmaxAt;
  r.aux = cee::softmax(z);
  r.value = {r.aux[index]};
  r.lhs = logits.index;
  r.index = index;
  return push(std::move(r));
}

Tape::Node Tape::scale_shift(Node x, double scale, double shift) {
  Record r;
  r.op = Op::ScaleShift;
  r.value = at(x).value;
  for (double& v : r.value) v = scale * v + shift;
  r.lhs = x.index;
  r.scale = scale;
  return push(std::move(r));
}

Tape::Node Tape::mul(Node a, Node b) {
  const Vec& av = at(a).value;
  const Vec& bv = at(b).value;
  if (av.size() != bv.size()) throw ConfigError("Tape::mul: length mismatch");
  Record r;
  r.op = Op::Mul;
  r.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) r.value[i] = av[i] * bv[i];
  r.lhs = a.index;
  r.rhs = b.index;
  return push(std::move(r));
}

Tape::Node Tape::weighted_sum(std::span<const Node> terms, std::span<const double> weights) {
  if (terms.empty() || terms.size() != weights.size()) {
    throw UsageError("Tape::weighted_sum: need matching non-empty terms and weights");
  }
  Record r;
  r.op = Op::WeightedSum;
  r.value.assign(at(terms[0]).value.size(), 0.0);
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const Vec& v = at(terms[k]).value;
    if (v.size() != r.value.size()) throw ConfigError("Tape::weighted_sum: length mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) r.value[i] += weights[k] * v[i];
    r.terms.push_back(terms[k].index);
  }
  r.aux.assign(weights.begin(), weights.end());
  return push(std::move(r));
}

void Tape::backward(Node loss, double seed) {
  if (nodes_.empty()) throw UsageError("Tape::backward: no forward pass recorded");
  if (loss.index >= nodes_.size() || nodes_[loss.index].value.size() != 1) {
    throw UsageError("Tape::backward: loss must be a scalar node of this tape");
  }
  for (Record& r : nodes_) std::fill(r.grad.begin(), r.grad.end(), 0.0);
  std::vector<char> reached(nodes_.size(), 0);
  nodes_[loss.index].grad[0] = seed;
  reached[loss.index] = 1;

  for (std::size_t k = loss.index + 1; k-- > 0;) {
    if (!reached[k]) continue;
    Record& r = nodes_[k];
    const Vec& g = r.grad;
    switch (r.op) {
      case Op::Constant:
        break;
      case Op::Affine: {
        Record& in = nodes_[r.lhs];
        Parameter& w = *r.weight;
        Parameter& b = *r.bias;
        const std::size_t rows = w.rows;
        const std::size_t cols = w.cols;
        for (std::size_t i = 0; i < rows; ++i) {
          const double gi = g[i];
          if (gi == 0.0) continue;
          b.grad[i] += gi;
          double* wg = w.grad.data() + i * cols;
          const double* wv = w.value.data() + i * cols;
          for (std::size_t j = 0; j < cols; ++j) {
            wg[j] += gi * in.value[j];
            in.grad[j] += gi * wv[j];
          }
        }
        reached[r.lhs] = 1;
        break;
      }
      case Op::Relu: {
        Record& in = nodes_[r.lhs];
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (in.value[i] > 0.0) in.grad[i] += g[i];
        }
        reached[r.lhs] = 1;
        break;
      }
      case Op::Add: {
        for (std::size_t i = 0; i < g.size(); ++i) {
          nodes_[r.lhs].grad[i] += g[i];
          nodes_[r.rhs].grad[i] += g[i];
        }
        reached[r.lhs] = reached[r.rhs] = 1;
        break;
      }
      case Op::SoftmaxXent: {
        if (r.aux[r.index] > kProbFloor) {
          Record& in = nodes_[r.lhs];
          for (std::size_t i = 0; i < r.aux.size(); ++i) {
            in.grad[i] += g[0] * (r.aux[i] - (i == r.index ? 1.0 : 0.0));
          }
          reached[r.lhs] = 1;
        }
        break;
      }
      case Op::LogSoftmaxAt: {
        Record& in = nodes_[r.lhs];
        for (std::size_t i = 0; i < r.aux.size(); ++i) {
          in.grad[i] += g[0] * ((i == r.index ? 1.0 : 0.0) - r.aux[i]);
        }
        reached[r.lhs] = 1;
        break;
      }
      case Op::SoftmaxAt: {
        Record& in = nodes_[r.lhs];
        const double p = r.aux[r.index];
        for (std::size_t i = 0; i < r.aux.size(); ++i) {
          in.grad[i] += g[0] * p * ((i == r.index ? 1.0 : 0.0) - r.aux[i]);
        }
        reached[r.lhs] = 1;
        break;
      }
      case Op::ScaleShift: {
        Record& in = nodes_[r.lhs];
        for (std::size_t i = 0; i < g.size(); ++i) in.grad[i] += r.scale * g[i];
        reached[r.lhs] = 1;
        break;
      }
      case Op::Mul: {
        Record& a = nodes_[r.lhs];
        Record& b = nodes_[r.rhs];
        for (std::size_t i = 0; i < g.size(); ++i) {
          a.grad[i] += g[i] * b.value[i];
          b.grad[i] += g[i] * a.value[i];
        }
        reached[r.lhs] = reached[r.rhs] = 1;
        break;
      }
      case Op::WeightedSum: {
        for (std::size_t t = 0; t < r.terms.size(); ++t) {
          Record& in = nodes_[r.terms[t]];
          for (std::size_t i = 0; i < g.size(); ++i) in.grad[i] += r.aux[t] * g[i];
          reached[r.terms[t]] = 1;
        }
        break;
      }
    }
  }
}

double finite_diff_check(const LossBuilder& loss, std::span<Parameter* const> params, double h) {
  if (!(h >= 1e-6 && h <= 1e-3)) throw ConfigError("finite_diff_check: step must lie in [1e-6, 1e-3]");
  zero_grads(params);
  {
    Tape tape;
    const Tape::Node out = loss(tape);
    tape.backward(out);
  }
  auto evaluate = [&] {
    Tape tape;
    return tape.scalar(loss(tape));
  };

  double worst = 0.0;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      // Divide by the step actually taken, not the nominal 2h.
      const double hi = saved + h, lo = saved - h;
      p->value[i] = hi;
      const double up = evaluate();
      p->value[i] = lo;
      const double down = evaluate();
      p->value[i] = saved;
      const double numeric = (up - down) / (hi - lo);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace cee
