#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cee/numeric.hpp"

namespace cee {

// Records a forward pass over the fixed op set and replays it backwards,
// accumulating exact gradients into the Parameter::grad of every parameter
// the loss reaches. Scalars are nodes of length one.
class Tape {
 public:
  struct Node {
    std::size_t index = 0;
  };

  Node constant(Vec value);
  Node affine(Parameter& weight, Parameter& bias, Node x);
  Node relu(Node x);
  Node add(Node a, Node b);
  // -log softmax(logits)[label], floored like cross_entropy().
  Node softmax_cross_entropy(Node logits, std::size_t label);
  Node log_softmax_at(Node logits, std::size_t index);
  Node softmax_at(Node logits, std::size_t index);
  // scale * x + shift, elementwise.
  Node scale_shift(Node x, double scale, double shift);
  Node mul(Node a, Node b);
  // sum_k weights[k] * terms[k]; all terms share one length.
  Node weighted_sum(std::span<const Node> terms, std::span<const double> weights);

  const Vec& value(Node n) const { return nodes_.at(n.index).value; }
  double scalar(Node n) const;
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = seed and propagates to parameters.
  void backward(Node loss, double seed = 1.0);
  void clear() { nodes_.clear(); }

 private:
  enum class Op { Constant, Affine, Relu, Add, SoftmaxXent, LogSoftmaxAt, SoftmaxAt, ScaleShift, Mul, WeightedSum };

  struct Record {
    Op op = Op::Constant;
    Vec value;
    Vec grad;
    std::size_t lhs = 0;
    std::size_t rhs = 0;
    Parameter* weight = nullptr;
    Parameter* bias = nullptr;
    std::size_t index = 0;
    double scale = 0.0;
    Vec aux;  // softmax probabilities, or weights for WeightedSum
    std::vector<std::size_t> terms;
  };

  Node push(Record r);
  const Record& at(Node n) const;

  std::vector<Record> nodes_;
};

// Worst relative error between the analytic gradient of `loss` and central
// differences (f(w+h) - f(w-h)) / 2h over every scalar of `params`, with
// denominator max(|analytic|, |numeric|, 1e-8). `loss` records its forward
// pass on the given tape and returns the scalar loss node. On return the
// grad fields hold the analytic gradient.
using LossBuilder = std::function<Tape::Node(Tape&)>;
double finite_diff_check(const LossBuilder& loss, std::span<Parameter* const> params, double h = 1e-5);

}  // namespace cee
