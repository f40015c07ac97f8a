#pragma once

// Two-layer perceptron numerics, templated on the scalar so the gradient
// check can run the same code in double precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace artsig {

template <typename T>
struct BasicClassifier {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t classes = 0;
  std::vector<T> w1;  // input_dim x hidden_dim, row-major
  std::vector<T> b1;  // hidden_dim
  std::vector<T> w2;  // hidden_dim x classes, row-major
  std::vector<T> b2;  // classes

  BasicClassifier() = default;
  BasicClassifier(std::size_t d, std::size_t h, std::size_t a)
      : input_dim(d), hidden_dim(h), classes(a), w1(d * h), b1(h), w2(h * a), b2(a) {}

  template <typename U>
  BasicClassifier<U> cast() const {
    BasicClassifier<U> out(input_dim, hidden_dim, classes);
    std::copy(w1.begin(), w1.end(), out.w1.begin());
    std::copy(b1.begin(), b1.end(), out.b1.begin());
    std::copy(w2.begin(), w2.end(), out.w2.begin());
    std::copy(b2.begin(), b2.end(), out.b2.begin());
    return out;
  }

  friend bool operator==(const BasicClassifier&, const BasicClassifier&) = default;
};

// Same shapes as the classifier parameters.
template <typename T>
using Gradients = BasicClassifier<T>;

template <typename T>
struct Activations {
  std::vector<T> hidden;  // after the rectifier
  std::vector<T> logits;
  std::vector<T> probs;
  std::vector<T> grad_hidden;

  explicit Activations(const BasicClassifier<T>& c)
      : hidden(c.hidden_dim), logits(c.classes), probs(c.classes), grad_hidden(c.hidden_dim) {}
};

// Numerically stable softmax.
template <typename T>
void softmax(std::span<const T> logits, std::span<T> probs) {
  const T peak = *std::max_element(logits.begin(), logits.end());
  T total = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(logits[k] - peak);
    total += probs[k];
  }
  for (auto& p : probs) p /= total;
}

// logits = W2^T relu(W1^T x + b1) + b2; fills act.hidden, act.logits, act.probs.
template <typename T>
void forward_pass(const BasicClassifier<T>& c, std::span<const T> x, Activations<T>& act) {
  std::copy(c.b1.begin(), c.b1.end(), act.hidden.begin());
  for (std::size_t i = 0; i < c.input_dim; ++i) {
    const T xi = x[i];
    if (xi == T(0)) continue;
    const T* row = c.w1.data() + i * c.hidden_dim;
    for (std::size_t j = 0; j < c.hidden_dim; ++j) act.hidden[j] += xi * row[j];
  }
  for (auto& v : act.hidden) v = v > T(0) ? v : T(0);

  std::copy(c.b2.begin(), c.b2.end(), act.logits.begin());
  for (std::size_t j = 0; j < c.hidden_dim; ++j) {
    const T hj = act.hidden[j];
    if (hj == T(0)) continue;
    const T* row = c.w2.data() + j * c.classes;
    for (std::size_t k = 0; k < c.classes; ++k) act.logits[k] += hj * row[k];
  }
  softmax<T>(act.logits, act.probs);
}

// Adds scale * d(cross-entropy)/d(params) for one example to grad and returns
// the example's cross-entropy loss.
template <typename T>
T accumulate_gradient(const BasicClassifier<T>& c, std::span<const T> x, std::size_t label, T scale,
                      Gradients<T>& grad, Activations<T>& act) {
  forward_pass(c, x, act);
  const T loss = -std::log(std::max(act.probs[label], T(1e-30)));

  // d loss / d logits = p - onehot(label)
  auto& dlogits = act.probs;
  dlogits[label] -= T(1);
  for (auto& g : dlogits) g *= scale;

  for (std::size_t k = 0; k < c.classes; ++k) grad.b2[k] += dlogits[k];
  std::fill(act.grad_hidden.begin(), act.grad_hidden.end(), T(0));
  for (std::size_t j = 0; j < c.hidden_dim; ++j) {
    const T hj = act.hidden[j];
    if (hj == T(0)) continue;  // rectifier gate: inactive units pass no gradient
    const T* w_row = c.w2.data() + j * c.classes;
    T* g_row = grad.w2.data() + j * c.classes;
    T back = 0;
    for (std::size_t k = 0; k < c.classes; ++k) {
      g_row[k] += hj * dlogits[k];
      back += w_row[k] * dlogits[k];
    }
    act.grad_hidden[j] = back;
  }
  for (std::size_t j = 0; j < c.hidden_dim; ++j) grad.b1[j] += act.grad_hidden[j];
  for (std::size_t i = 0; i < c.input_dim; ++i) {
    const T xi = x[i];
    if (xi == T(0)) continue;
    T* g_row = grad.w1.data() + i * c.hidden_dim;
    for (std::size_t j = 0; j < c.hidden_dim; ++j) g_row[j] += xi * act.grad_hidden[j];
  }
  return loss;
}

// Mean cross-entropy over a batch and its gradient (grad is overwritten).
template <typename T>
T loss_and_gradient(const BasicClassifier<T>& c, std::span<const T> inputs, std::span<const std::size_t> labels,
                    Gradients<T>& grad) {
  grad = Gradients<T>(c.input_dim, c.hidden_dim, c.classes);
  Activations<T> act(c);
  const T scale = T(1) / static_cast<T>(labels.size());
  T total = 0;
  for (std::size_t e = 0; e < labels.size(); ++e) {
    total += accumulate_gradient(c, inputs.subspan(e * c.input_dim, c.input_dim), labels[e], scale, grad, act);
  }
  return total * scale;
}

template <typename T>
T mean_loss(const BasicClassifier<T>& c, std::span<const T> inputs, std::span<const std::size_t> labels) {
  Activations<T> act(c);
  T total = 0;
  for (std::size_t e = 0; e < labels.size(); ++e) {
    forward_pass(c, inputs.subspan(e * c.input_dim, c.input_dim), act);
    total += -std::log(std::max(act.probs[labels[e]], T(1e-30)));
  }
  return total / static_cast<T>(labels.size());
}

}  // namespace artsig
