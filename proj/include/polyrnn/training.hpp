#pragma once

// Desk-scale supervised training of one recurrent layer plus a linear
// softmax head: initialization, RMSprop, global-norm clipping, step-halving
// learning-rate schedule and the epoch loop with best-checkpoint selection.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "polyrnn/cells.hpp"
#include "polyrnn/data.hpp"
#include "polyrnn/diagnostics.hpp"
#include "polyrnn/errors.hpp"
#include "polyrnn/head.hpp"

namespace polyrnn {

struct Model {
  CellParams cell;
  LinearHead head;
};

// Cell arrays named as in the cell struct, then "head.weight", "head.bias".
std::vector<TensorRef> tensors(Model& model);
std::vector<ConstTensorRef> tensors(const Model& model);
Model zeros_like(const Model& model);

struct InitSpec {
  // α = alpha_multiplier / T (leaky cells).
  double alpha_multiplier = 1.0;
  // Recurrent matrices ~ N(0, (weight_std_coeff/√n)²).
  double weight_std_coeff = 0.1;
  // Input matrices ~ N(0, (input_std_coeff/√n)²), scaled by hidden width.
  double input_std_coeff = 1.0;
  // Head weight ~ N(0, (head_std_coeff/√n)²).
  double head_std_coeff = 1.0;
  // Forget-gate bias for gated cells (b_f = v) and GRUs (b_z = -v).
  std::optional<double> forget_bias;
  std::uint64_t seed = 0;
};

// k/T, or ConfigError if it falls outside (0, 1).
double resolve_alpha(double alpha_multiplier, std::size_t T);

// Biases start at zero unless forget_bias is set. Deterministic in spec.seed.
Model initialize(CellKind kind, double rate_r, std::size_t n, std::size_t d, std::size_t T,
                 std::size_t classes, const InitSpec& spec);

// ---- optimizer ----------------------------------------------------------

struct RmsPropConfig {
  double rho = 0.9;
  double eps = 1e-8;
};

struct RmsPropState {
  std::vector<std::vector<double>> mean_square;
};

// v <- ρv + (1-ρ)g²;  p <- p - lr·g/(√v + ε). The state is sized on first use.
// Throws DivergenceError if any updated parameter is non-finite.
void rmsprop_step(std::span<const TensorRef> params, std::span<const ConstTensorRef> grads,
                  RmsPropState& state, double lr, const RmsPropConfig& config = {});
void rmsprop_step(Model& params, const Model& grads, RmsPropState& state, double lr,
                  const RmsPropConfig& config = {});

double global_norm(std::span<const ConstTensorRef> grads);
// Rescales all gradients by max_norm/‖g‖ when ‖g‖ > max_norm; returns ‖g‖
// before clipping. Throws DomainError unless max_norm > 0.
double clip_global_norm(std::span<const TensorRef> grads, double max_norm);
double clip_global_norm(Model& grads, double max_norm);

// base_lr · 0.5^(number of milestones <= epoch), epoch counting completed epochs.
double lr_at_epoch(double base_lr, std::size_t epoch, std::span<const std::size_t> milestones);

// ---- batch evaluation ----------------------------------------------------

struct BatchResult {
  Model grads;  // summed over the batch
  double loss_sum = 0.0;
  std::size_t correct = 0;
};

// Per-sequence forward/backward may run on `threads` workers; per-sequence
// results are always reduced in index order, so the sum does not depend on
// the thread count.
BatchResult batch_gradients(const Model& model, const SequenceDataset& data,
                            std::span<const std::size_t> indices, unsigned threads = 1);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate(const Model& model, const SequenceDataset& data, unsigned threads = 1);

// Mean ||dL/dx_t|| profile over the first `count` sequences of `data`.
GradProfile profile_gradients(const Model& model, const SequenceDataset& data, std::size_t count);

// Mean profile over `seeds` freshly initialized models: model s uses
// base.seed + s and is profiled on sequences [s·count, (s+1)·count) of
// `data`. Throws InsufficientDataError if `data` is too short.
GradProfile initial_profile(CellKind kind, double rate_r, std::size_t n, const SequenceDataset& data,
                            const InitSpec& base, std::size_t seeds, std::size_t count,
                            unsigned threads = 1);

// ---- training loop -------------------------------------------------------

struct TrainConfig {
  double learning_rate = 1e-3;
  double clip_norm = 1.0;
  std::size_t batch_size = 100;
  std::size_t epochs = 10;
  std::vector<std::size_t> lr_milestones{100, 150};
  // Epochs after which a gradient profile is recorded; 0 is the initial model.
  std::vector<std::size_t> profile_epochs;
  std::size_t profile_batch = 32;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  // α of leaky cells stays at its initial value unless set.
  bool train_alpha = false;
  RmsPropConfig rmsprop;
};

// Checks positivity and milestone ordering. Throws ConfigError.
void validate(const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  Model best;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  Model final_model;
  std::vector<GradProfile> profiles;
};

// Index of the record with the lowest validation loss (first on ties).
// Throws InsufficientDataError on an empty log.
std::size_t select_best(std::span<const EpochRecord> log);

class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, std::size_t epoch, std::size_t batch,
                   TrainResult partial);
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }
  const TrainResult& partial() const noexcept { return partial_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
  TrainResult partial_;
};

// Deterministic in config.seed. Throws TrainingDiverged with the 1-based
// epoch and batch of the first non-finite value.
TrainResult train(Model model, const SequenceDataset& train_data, const SequenceDataset& valid_data,
                  const TrainConfig& config);

struct AlphaSearchRun {
  double alpha_multiplier = 0.0;
  std::optional<TrainResult> result;  // empty if the run diverged
  std::optional<std::size_t> diverged_epoch;
};

struct AlphaSearch {
  std::vector<AlphaSearchRun> runs;
  std::size_t best_run = 0;
};

// Trains one model per α multiplier and keeps the lowest best validation loss.
AlphaSearch search_alpha_multipliers(CellKind kind, double rate_r, std::size_t n,
                                     std::span<const double> multipliers, const InitSpec& base,
                                     const SequenceDataset& train_data,
                                     const SequenceDataset& valid_data, const TrainConfig& config);

}  // namespace polyrnn
