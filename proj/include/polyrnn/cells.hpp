#pragma once

// One-step state transitions for the leaky, generic gated and GRU cells,
// their polynomial-decay variants (rate_r > 0), exact per-step backward
// passes, and analytic one-step Jacobians dh_t/dh_{t-1}.
//
// The polynomial variants replace the linear decay of the previous state with
// |h|^r ⊙ h:
//   leaky:  h = h_prev + α (tanh(U h_prev + W x + b) - |h_prev|^r ⊙ h_prev)
//   gated:  h = h_prev - (1 - f) ⊙ |h_prev|^r ⊙ h_prev + i ⊙ h̃
//   gru:    h = h_prev - z ⊙ |h_prev|^r ⊙ h_prev + z ⊙ h̃
// With rate_r = 0 each reduces to the ordinary cell.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "polyrnn/linalg.hpp"

namespace polyrnn {

enum class CellKind { Leaky, Gated, Gru };

std::string_view to_string(CellKind kind) noexcept;
// Accepts "leaky", "gated", "gru"; throws ConfigError otherwise.
CellKind parse_cell_kind(std::string_view name);

struct LeakyParams {
  double alpha = 0.5;
  Mat U;  // n×n
  Mat W;  // n×d
  Vec b;  // n
  double rate_r = 0.0;

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("alpha", self.alpha);
    f("U", self.U);
    f("W", self.W);
    f("b", self.b);
  }
};

struct GatedParams {
  Mat U_f, W_f;
  Vec b_f;
  Mat U_i, W_i;
  Vec b_i;
  Mat U, W;  // candidate h̃
  Vec b;
  double rate_r = 0.0;

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("U_f", self.U_f);
    f("W_f", self.W_f);
    f("b_f", self.b_f);
    f("U_i", self.U_i);
    f("W_i", self.W_i);
    f("b_i", self.b_i);
    f("U", self.U);
    f("W", self.W);
    f("b", self.b);
  }
};

struct GruParams {
  Mat U_z, W_z;
  Vec b_z;
  Mat U_r, W_r;
  Vec b_r;
  Mat U, W;
  Vec b;
  double rate_r = 0.0;

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("U_z", self.U_z);
    f("W_z", self.W_z);
    f("b_z", self.b_z);
    f("U_r", self.U_r);
    f("W_r", self.W_r);
    f("b_r", self.b_r);
    f("U", self.U);
    f("W", self.W);
    f("b", self.b);
  }
};

using CellParams = std::variant<LeakyParams, GatedParams, GruParams>;

// Named view of one trainable array. Vectors are n×1, scalars 1×1.
struct TensorRef {
  std::string name;
  std::span<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

struct ConstTensorRef {
  std::string name;
  std::span<const double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

std::vector<TensorRef> tensors(CellParams& params);
std::vector<ConstTensorRef> tensors(const CellParams& params);

CellKind kind_of(const CellParams& params) noexcept;
double rate_of(const CellParams& params) noexcept;
std::size_t hidden_dim(const CellParams& params) noexcept;
std::size_t input_dim(const CellParams& params) noexcept;
// Same kind, shapes and rate, every trainable entry zero.
CellParams zeros_like(const CellParams& params);
// Zero-initialized parameters of the given kind and shape.
CellParams make_params(CellKind kind, std::size_t n, std::size_t d, double rate_r);

// Checks shape conformance, 0 < alpha < 1 and rate_r >= 0.
// Throws DimensionError or DomainError.
void validate(const CellParams& params);

// Elementwise |h|^r ⊙ h. For r = 0 this is h; |h| = 0 maps to 0 when r > 0.
Vec decay_term(const Vec& h, double r);
// Elementwise derivative of |h|^r h: (r + 1)|h|^r, and 0 at h = 0 for r > 0.
Vec decay_slope(const Vec& h, double r);

// Intermediates of one step, enough for the exact backward pass.
// gate_a/gate_b hold (f, i) for the gated cell and (z, r) for the GRU.
struct StepCache {
  Vec h_prev;
  Vec x;
  Vec cand;  // h̃ = tanh(pre-activation)
  Vec gate_a;
  Vec gate_b;
};

struct StepResult {
  Vec h;
  StepCache cache;
};

StepResult leaky_step(const LeakyParams& p, const Vec& h_prev, const Vec& x);
// f ⊙ h_prev decay for rate_r = 0, polynomial decay otherwise.
StepResult gated_step(const GatedParams& p, const Vec& h_prev, const Vec& x);
// Always the polynomial form h_prev - (1 - f) ⊙ |h_prev|^r ⊙ h_prev, even at r = 0.
StepResult poly_gated_step(const GatedParams& p, const Vec& h_prev, const Vec& x);
StepResult gru_step(const GruParams& p, const Vec& h_prev, const Vec& x);
StepResult step(const CellParams& p, const Vec& h_prev, const Vec& x);

struct StepGradients {
  Vec dh_prev;
  Vec dx;
};

// Reverse-mode through one step. Parameter gradients are accumulated into
// `grads`, which must have the same alternative and shapes as `p`.
StepGradients backward_step(const CellParams& p, const StepCache& cache, const Vec& dh,
                            CellParams& grads);

// Exact dh_t/dh_{t-1} at (h_prev, x).
Mat jacobian_step(const CellParams& p, const Vec& h_prev, const Vec& x);

}  // namespace polyrnn
