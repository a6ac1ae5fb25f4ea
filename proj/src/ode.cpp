#include "polyrnn/ode.hpp"

#include <cmath>

#include "polyrnn/errors.hpp"

namespace polyrnn {

namespace {

void require_poly_domain(double h0, double r, double dt) {
  if (!(h0 > 0.0)) throw DomainError("polynomial decay needs h0 > 0");
  if (!(r > 0.0)) throw DomainError("polynomial decay needs r > 0");
  if (!(dt >= 0.0)) throw DomainError("elapsed time must be >= 0");
}

}  // namespace

DecayLaw DecayLaw::exponential(double c) {
  if (!(c > 0.0)) throw DomainError("exponential decay rate must be > 0");
  return {Kind::Exponential, c};
}

DecayLaw DecayLaw::polynomial(double r) {
  if (!(r > 0.0)) throw DomainError("polynomial decay exponent must be > 0");
  return {Kind::Polynomial, r};
}

double exp_decay_solution(double h0, double c, double dt) {
  if (!(dt >= 0.0)) throw DomainError("elapsed time must be >= 0");
  return std::exp(-c * dt) * h0;
}

double poly_decay_solution(double h0, double r, double dt) {
  require_poly_domain(h0, r, dt);
  if (dt == 0.0) return h0;
  return std::pow(r * dt + std::pow(h0, -r), -1.0 / r);
}

double poly_decay_sensitivity(double h0, double r, double dt) {
  require_poly_domain(h0, r, dt);
  return std::pow(1.0 + r * std::pow(h0, r) * dt, -(r + 1.0) / r);
}

double poly_decay_sensitivity_unscaled(double h0, double r, double dt) {
  require_poly_domain(h0, r, dt);
  return std::pow(1.0 + std::pow(h0, r) * dt, -(r + 1.0) / r);
}

OdeRhs decay_rhs(const DecayLaw& law) {
  if (law.kind == DecayLaw::Kind::Exponential) {
    const double c = law.rate;
    return [c](const Vec& h) { return -c * h; };
  }
  const double r = law.rate;
  return [r](const Vec& h) { return -1.0 * decay_term(h, r); };
}

OdeRhs leaky_rhs(const LeakyParams& params, const Vec& x) {
  return [params, x](const Vec& h) {
    const Vec cand = tanh_vec(affine(params.U, h, params.W, x, params.b));
    const Vec decay = decay_term(h, params.rate_r);
    Vec out(h.dim());
    for (std::size_t k = 0; k < h.dim(); ++k) out[k] = params.alpha * (cand[k] - decay[k]);
    return out;
  };
}

std::vector<Vec> euler_integrate(const OdeRhs& rhs, const Vec& h0, double step,
                                 std::size_t n_steps) {
  if (!(step > 0.0)) throw DomainError("Euler step must be > 0");
  std::vector<Vec> path;
  path.reserve(n_steps + 1);
  path.push_back(h0);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const Vec& h = path.back();
    const Vec f = rhs(h);
    Vec next(h.dim());
    for (std::size_t i = 0; i < h.dim(); ++i) next[i] = h[i] + step * f[i];
    if (!all_finite(next.values())) throw DivergenceError("Euler integration diverged", k + 1);
    path.push_back(std::move(next));
  }
  return path;
}

Vec euler_final(const OdeRhs& rhs, const Vec& h0, double step, std::size_t n_steps) {
  if (!(step > 0.0)) throw DomainError("Euler step must be > 0");
  Vec h = h0;
  for (std::size_t k = 0; k < n_steps; ++k) {
    const Vec f = rhs(h);
    for (std::size_t i = 0; i < h.dim(); ++i) h[i] = h[i] + step * f[i];
    if (!all_finite(h.values())) throw DivergenceError("Euler integration diverged", k + 1);
  }
  return h;
}

double characteristic_time(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  return -1.0 / std::log1p(-alpha);
}

}  // namespace polyrnn
