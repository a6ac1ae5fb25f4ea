#pragma once

// Continuous-time memory decay: closed forms for dh/dt = -c h and
// dh/dt = -|h|^r h, their sensitivities, a forward-Euler integrator and the
// leaky-unit characteristic time.

#include <cstddef>
#include <functional>
#include <vector>

#include "polyrnn/cells.hpp"
#include "polyrnn/linalg.hpp"

namespace polyrnn {

struct DecayLaw {
  enum class Kind { Exponential, Polynomial };
  Kind kind = Kind::Exponential;
  double rate = 1.0;  // c for exponential, r for polynomial

  static DecayLaw exponential(double c);  // throws DomainError unless c > 0
  static DecayLaw polynomial(double r);   // throws DomainError unless r > 0
};

// e^{-c·dt}·h0. Throws DomainError if dt < 0.
double exp_decay_solution(double h0, double c, double dt);

// (r·dt + h0^{-r})^{-1/r}. Requires h0 > 0, r > 0, dt >= 0 (DomainError).
double poly_decay_solution(double h0, double r, double dt);

// dh(t)/dh(t0) of the polynomial law: (1 + r·h0^r·dt)^{-(r+1)/r}.
double poly_decay_sensitivity(double h0, double r, double dt);

// The same expression without the factor r in front of h0^r·dt. Agrees with
// poly_decay_sensitivity only at r = 1; kept for the erratum comparison in
// `polyrnn ode-check`.
double poly_decay_sensitivity_unscaled(double h0, double r, double dt);

// Right-hand side f(h) of dh/dt = f(h).
using OdeRhs = std::function<Vec(const Vec&)>;

// Elementwise law: -c·h, or -|h|^r ⊙ h (odd-symmetric, so h < 0 is fine).
OdeRhs decay_rhs(const DecayLaw& law);

// α(tanh(U h + W x + b) - |h|^r ⊙ h) with the input held at x; one Euler
// step of size 1 is exactly the leaky cell update.
OdeRhs leaky_rhs(const LeakyParams& params, const Vec& x);

// Forward Euler: h_{k+1} = h_k + step·f(h_k). Returns n_steps + 1 states.
// Throws DomainError if step <= 0 and DivergenceError (with the step index)
// on a non-finite state.
std::vector<Vec> euler_integrate(const OdeRhs& rhs, const Vec& h0, double step,
                                 std::size_t n_steps);

// Final state only, without storing the path.
Vec euler_final(const OdeRhs& rhs, const Vec& h0, double step, std::size_t n_steps);

// τ = -1/log(1 - α). Throws DomainError unless 0 < α < 1.
double characteristic_time(double alpha);

}  // namespace polyrnn
