#include "polyrnn/bptt.hpp"

#include <string>

#include "polyrnn/errors.hpp"

namespace polyrnn {

Trajectory forward_sequence(const CellParams& params, const Vec& h0, std::span<const Vec> xs) {
  validate(params);
  const std::size_t n = hidden_dim(params);
  const std::size_t d = input_dim(params);
  if (h0.dim() != n) throw DimensionError("initial state has dimension " + std::to_string(h0.dim()));
  Trajectory traj;
  traj.states.reserve(xs.size() + 1);
  traj.caches.reserve(xs.size());
  traj.inputs.assign(xs.begin(), xs.end());
  traj.states.push_back(h0);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    if (xs[t].dim() != d)
      throw DimensionError("input " + std::to_string(t + 1) + " has dimension " +
                           std::to_string(xs[t].dim()));
    StepResult s = step(params, traj.states.back(), xs[t]);
    if (!all_finite(s.h.values())) throw DivergenceError("non-finite hidden state", t + 1);
    traj.states.push_back(std::move(s.h));
    traj.caches.push_back(std::move(s.cache));
  }
  return traj;
}

Gradients backward_sequence(const CellParams& params, const Trajectory& traj, const Vec& dL_dhT) {
  const std::size_t T = traj.inputs.size();
  if (traj.states.size() != T + 1 || traj.caches.size() != T)
    throw IntegrityError("trajectory lengths are inconsistent");
  if (dL_dhT.dim() != hidden_dim(params))
    throw DimensionError("dL/dh_T has dimension " + std::to_string(dL_dhT.dim()));
  for (std::size_t t = 0; t < T; ++t) {
    if (!(traj.caches[t].h_prev == traj.states[t]) || !(traj.caches[t].x == traj.inputs[t]))
      throw IntegrityError("step cache " + std::to_string(t + 1) + " does not match the trajectory");
  }

  Gradients g;
  g.params = zeros_like(params);
  g.input_grads.resize(T);
  g.state_grads.resize(T + 1);
  g.state_grads[T] = dL_dhT;
  for (std::size_t t = T; t-- > 0;) {
    StepGradients sg = backward_step(params, traj.caches[t], g.state_grads[t + 1], g.params);
    g.state_grads[t] = std::move(sg.dh_prev);
    g.input_grads[t] = std::move(sg.dx);
  }
  return g;
}

GradProfile input_gradient_norms(const CellParams& params, const Trajectory& traj,
                                 const LinearHead& head, std::size_t target) {
  const HeadLoss hl = cross_entropy_head(traj.final_state(), head, target);
  const Gradients g = backward_sequence(params, traj, hl.dL_dh);
  GradProfile profile;
  profile.meta.cell = std::string(to_string(kind_of(params)));
  profile.meta.rate_r = rate_of(params);
  profile.norms.reserve(g.input_grads.size());
  for (const auto& dx : g.input_grads) profile.norms.push_back(norm2(dx));
  return profile;
}

}  // namespace polyrnn
