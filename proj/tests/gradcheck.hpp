#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "affect/nn.hpp"

namespace testing_support {

// sum(a .* r) as a 1x1 node, to reduce any output to a scalar loss.
inline affect::nn::Var weighted_sum(affect::nn::Tape& t, affect::nn::Var a, const affect::nn::Matrix& r) {
  const double v = t.value(a).cwiseProduct(r).sum();
  return t.push(affect::nn::Matrix::Constant(1, 1, v), t.needs_grad(a), [a, r](affect::nn::Tape& t, std::uint32_t self) {
    t.grad_ref(a.id) += r * t.grad_ref(self)(0, 0);
  });
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

// Compares backprop gradients with the five-point central difference (error
// O(h^4); the two-point rule's rounding noise swamps exactly-zero gradients such
// as attention key biases). `build(tape)` must return the scalar loss.
// probes == 0 checks every parameter entry; otherwise that many entries are
// drawn uniformly at random.
template <class Build>
GradCheck grad_check(const affect::nn::ParameterRefs& params, Build build, std::size_t probes = 0,
                     std::uint64_t seed = 1, double h = 3e-3, double floor = 1e-6) {
  using namespace affect::nn;
  zero_grads(params);
  {
    Tape tape;
    tape.backward(build(tape));
  }
  auto eval = [&] {
    Tape tape(false);
    return tape.scalar(build(tape));
  };
  const std::size_t total = parameter_count(params);
  std::mt19937_64 rng(seed);
  GradCheck out;
  const std::size_t n = probes == 0 ? total : probes;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t flat = probes == 0 ? k : rng() % total;
    Parameter* p = nullptr;
    for (Parameter* q : params) {
      if (flat < static_cast<std::size_t>(q->size())) {
        p = q;
        break;
      }
      flat -= static_cast<std::size_t>(q->size());
    }
    double& x = p->value.data()[flat];
    const double saved = x;
    auto at = [&](double offset) {
      x = saved + offset;
      return eval();
    };
    const double numeric = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
    x = saved;
    out.max_rel_error = std::max(out.max_rel_error, relative_error(p->grad.data()[flat], numeric, floor));
    ++out.probes;
  }
  return out;
}

}  // namespace testing_support
