#pragma once

// Full-length backpropagation through time for a single recurrent layer with
// the loss attached to the final state.

#include <cstddef>
#include <span>
#include <vector>

#include "polyrnn/cells.hpp"
#include "polyrnn/diagnostics.hpp"
#include "polyrnn/head.hpp"

namespace polyrnn {

// states[0] is h0 and states[t] follows inputs[t-1]; caches[t-1] produced states[t].
struct Trajectory {
  std::vector<Vec> states;
  std::vector<StepCache> caches;
  std::vector<Vec> inputs;

  std::size_t length() const noexcept { return inputs.size(); }
  const Vec& final_state() const { return states.back(); }
};

struct Gradients {
  CellParams params;             // dL/dθ, same kind and shapes as the cell
  std::vector<Vec> input_grads;  // dL/dx_t, t = 1..T
  std::vector<Vec> state_grads;  // dL/dh_t, t = 0..T
};

// Throws DimensionError on shape mismatch and DivergenceError carrying the
// first timestep (1-based) whose state is not finite.
Trajectory forward_sequence(const CellParams& params, const Vec& h0, std::span<const Vec> xs);

// Throws IntegrityError if `traj` is not consistent with `params`.
Gradients backward_sequence(const CellParams& params, const Trajectory& traj, const Vec& dL_dhT);

// ||dL/dx_t||₂ for t = 1..T under cross-entropy at the final step.
GradProfile input_gradient_norms(const CellParams& params, const Trajectory& traj,
                                 const LinearHead& head, std::size_t target);

}  // namespace polyrnn
