#pragma once

// Finite-difference gradient checking against the reverse-mode result.
// Test-only; stays independent of the backward implementations it audits.

#include <cmath>
#include <functional>
#include <vector>

#include "mogen/autodiff/ops.hpp"
#include "mogen/autodiff/rng.hpp"
#include "mogen/autodiff/tensor.hpp"

namespace gradcheck {

using mogen::ad::Tape;
using mogen::ad::Var;

inline constexpr double kPerturbation = 1e-5;
inline constexpr double kTolerance = 1e-4;

// Builds the loss from the (captured) leaf variables through a fresh tape.
using LossFn = std::function<Var<double>(Tape<double>&)>;

// Max relative error between analytic and central-difference gradients over
// every element of every listed parameter.
inline double max_rel_error(const LossFn& build, std::vector<Var<double>> params,
                            double h = kPerturbation) {
  for (auto& p : params) p.zero_grad();
  {
    Tape<double> tape;
    auto loss = build(tape);
    tape.backward(loss);
  }
  double worst = 0.0;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.val().size(); ++i) {
      const double saved = p.val()[i];
      p.val()[i] = saved + h;
      double fp;
      {
        Tape<double> tape;
        fp = build(tape).item();
      }
      p.val()[i] = saved - h;
      double fm;
      {
        Tape<double> tape;
        fm = build(tape).item();
      }
      p.val()[i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = p.grad()[i];
      const double denom = std::max({1.0, std::fabs(fd), std::fabs(an)});
      const double rel = std::fabs(fd - an) / denom;
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

inline Var<double> randn_leaf(mogen::ad::Shape shape, mogen::Rng& rng,
                              bool requires_grad = true, double scl = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(mogen::ad::numel_of(shape)));
  for (auto& x : v) x = rng.normal() * scl;
  return Var<double>::leaf(std::move(shape), std::move(v), requires_grad);
}

}  // namespace gradcheck
