#include "polyrnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <thread>

#include "polyrnn/bptt.hpp"
#include "polyrnn/rng.hpp"

namespace polyrnn {

std::vector<TensorRef> tensors(Model& model) {
  auto out = tensors(model.cell);
  out.push_back({"head.weight", model.head.weight.values(), model.head.weight.rows(),
                 model.head.weight.cols()});
  out.push_back({"head.bias", model.head.bias.values(), model.head.bias.dim(), 1});
  return out;
}

std::vector<ConstTensorRef> tensors(const Model& model) {
  auto out = tensors(model.cell);
  out.push_back({"head.weight", model.head.weight.values(), model.head.weight.rows(),
                 model.head.weight.cols()});
  out.push_back({"head.bias", model.head.bias.values(), model.head.bias.dim(), 1});
  return out;
}

Model zeros_like(const Model& model) {
  return {zeros_like(model.cell),
          {Mat(model.head.weight.rows(), model.head.weight.cols()), Vec(model.head.bias.dim())}};
}

double resolve_alpha(double alpha_multiplier, std::size_t T) {
  if (T == 0) throw ConfigError("sequence length must be positive");
  const double alpha = alpha_multiplier / static_cast<double>(T);
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("alpha = k/T = " + std::to_string(alpha) + " is outside (0, 1)");
  return alpha;
}

Model initialize(CellKind kind, double rate_r, std::size_t n, std::size_t d, std::size_t T,
                 std::size_t classes, const InitSpec& spec) {
  if (n == 0 || d == 0 || classes == 0) throw ConfigError("model dimensions must be positive");
  if (!(rate_r >= 0.0)) throw ConfigError("rate r must be >= 0");
  if (kind == CellKind::Leaky && spec.forget_bias)
    throw ConfigError("forget_bias applies to gated and gru cells only");
  Model model{make_params(kind, n, d, rate_r), {Mat(classes, n), Vec(classes)}};
  Rng rng(spec.seed);
  const double rec_std = spec.weight_std_coeff / std::sqrt(static_cast<double>(n));
  const double in_std = spec.input_std_coeff / std::sqrt(static_cast<double>(n));
  const double head_std = spec.head_std_coeff / std::sqrt(static_cast<double>(n));
  for (auto& t : tensors(model.cell)) {
    if (t.name == "alpha") {
      t.values[0] = resolve_alpha(spec.alpha_multiplier, T);
    } else if (t.name.starts_with("U")) {
      for (double& v : t.values) v = rng.normal(0.0, rec_std);
    } else if (t.name.starts_with("W")) {
      for (double& v : t.values) v = rng.normal(0.0, in_std);
    }
  }
  if (spec.forget_bias) {
    if (auto* g = std::get_if<GatedParams>(&model.cell)) {
      for (double& v : g->b_f.values()) v = *spec.forget_bias;
    } else if (auto* q = std::get_if<GruParams>(&model.cell)) {
      for (double& v : q->b_z.values()) v = -*spec.forget_bias;
    }
  }
  for (double& v : model.head.weight.values()) v = rng.normal(0.0, head_std);
  return model;
}

// ---- optimizer ----------------------------------------------------------

void rmsprop_step(std::span<const TensorRef> params, std::span<const ConstTensorRef> grads,
                  RmsPropState& state, double lr, const RmsPropConfig& config) {
  if (params.size() != grads.size()) throw DimensionError("parameter and gradient lists differ");
  if (state.mean_square.empty()) {
    for (const auto& p : params) state.mean_square.emplace_back(p.values.size(), 0.0);
  }
  if (state.mean_square.size() != params.size()) throw DimensionError("optimizer state mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].values;
    auto g = grads[k].values;
    auto& v = state.mean_square[k];
    if (p.size() != g.size() || v.size() != p.size())
      throw DimensionError("tensor '" + params[k].name + "' does not match its gradient");
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = config.rho * v[i] + (1.0 - config.rho) * g[i] * g[i];
      p[i] -= lr * g[i] / (std::sqrt(v[i]) + config.eps);
      if (!std::isfinite(p[i]))
        throw DivergenceError("non-finite parameter after update of '" + params[k].name + "'", 0);
    }
  }
}

void rmsprop_step(Model& params, const Model& grads, RmsPropState& state, double lr,
                  const RmsPropConfig& config) {
  const auto p = tensors(params);
  const auto g = tensors(grads);
  rmsprop_step(p, g, state, lr, config);
}

double global_norm(std::span<const ConstTensorRef> grads) {
  double ss = 0.0;
  for (const auto& g : grads)
    for (double v : g.values) ss += v * v;
  return std::sqrt(ss);
}

double clip_global_norm(std::span<const TensorRef> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw DomainError("clip norm must be > 0");
  double ss = 0.0;
  for (const auto& g : grads)
    for (double v : g.values) ss += v * v;
  const double norm = std::sqrt(ss);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& g : grads)
      for (double& v : g.values) v *= scale;
  }
  return norm;
}

double clip_global_norm(Model& grads, double max_norm) {
  const auto g = tensors(grads);
  return clip_global_norm(g, max_norm);
}

double lr_at_epoch(double base_lr, std::size_t epoch, std::span<const std::size_t> milestones) {
  const auto passed = std::count_if(milestones.begin(), milestones.end(),
                                    [epoch](std::size_t m) { return m <= epoch; });
  return base_lr * std::pow(0.5, static_cast<double>(passed));
}

// ---- batch evaluation ----------------------------------------------------

namespace {

struct SequenceOutcome {
  Model grads;
  double loss = 0.0;
  bool correct = false;
};

std::size_t argmax(const Vec& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

SequenceOutcome run_sequence(const Model& model, const SequenceDataset& data, std::size_t i,
                             bool with_grads) {
  const auto xs = data.inputs(i);
  const Trajectory traj = forward_sequence(model.cell, Vec(hidden_dim(model.cell)), xs);
  const HeadLoss hl = cross_entropy_head(traj.final_state(), model.head, data.label(i));
  SequenceOutcome out;
  out.loss = hl.loss;
  out.correct = argmax(hl.probabilities) == data.label(i);
  if (!std::isfinite(hl.loss)) throw DivergenceError("non-finite loss", data.length());
  if (with_grads) {
    Gradients g = backward_sequence(model.cell, traj, hl.dL_dh);
    out.grads = {std::move(g.params), std::move(hl.grads)};
  }
  return out;
}

void accumulate(Model& into, const Model& g) {
  auto a = tensors(into);
  const auto b = tensors(g);
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].values.size(); ++i) a[k].values[i] += b[k].values[i];
}

// Runs fn(j) for j in [0, count) on up to `threads` workers, contiguous chunks.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t j = 0; j < count; ++j) fn(j);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, count);
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t j = w * count / workers; j < (w + 1) * count / workers; ++j) fn(j);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

BatchResult batch_gradients(const Model& model, const SequenceDataset& data,
                            std::span<const std::size_t> indices, unsigned threads) {
  BatchResult out{zeros_like(model), 0.0, 0};
  if (threads <= 1) {
    for (std::size_t i : indices) {
      const SequenceOutcome s = run_sequence(model, data, i, true);
      accumulate(out.grads, s.grads);
      out.loss_sum += s.loss;
      out.correct += s.correct ? 1 : 0;
    }
    return out;
  }
  std::vector<SequenceOutcome> per(indices.size());
  parallel_for(indices.size(), threads,
               [&](std::size_t j) { per[j] = run_sequence(model, data, indices[j], true); });
  for (const auto& s : per) {
    accumulate(out.grads, s.grads);
    out.loss_sum += s.loss;
    out.correct += s.correct ? 1 : 0;
  }
  return out;
}

Evaluation evaluate(const Model& model, const SequenceDataset& data, unsigned threads) {
  if (data.size() == 0) return {};
  std::vector<SequenceOutcome> per(data.size());
  parallel_for(data.size(), threads, [&](std::size_t j) { per[j] = run_sequence(model, data, j, false); });
  Evaluation ev;
  std::size_t correct = 0;
  for (const auto& s : per) {
    ev.loss += s.loss;
    correct += s.correct ? 1 : 0;
  }
  ev.loss /= static_cast<double>(data.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return ev;
}

GradProfile profile_gradients(const Model& model, const SequenceDataset& data, std::size_t count) {
  count = std::min(count, data.size());
  if (count == 0) throw InsufficientDataError("no sequences to profile");
  std::vector<GradProfile> profiles;
  profiles.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto xs = data.inputs(i);
    const Trajectory traj = forward_sequence(model.cell, Vec(hidden_dim(model.cell)), xs);
    profiles.push_back(input_gradient_norms(model.cell, traj, model.head, data.label(i)));
  }
  return mean_profile(profiles);
}

GradProfile initial_profile(CellKind kind, double rate_r, std::size_t n, const SequenceDataset& data,
                            const InitSpec& base, std::size_t seeds, std::size_t count, unsigned threads) {
  if (seeds == 0 || count == 0) throw ConfigError("need at least one seed and one sequence");
  if (data.size() < seeds * count)
    throw InsufficientDataError("profiling " + std::to_string(seeds) + " x " + std::to_string(count) +
                                " sequences needs that many, have " + std::to_string(data.size()));
  std::vector<GradProfile> profiles(seeds * count);
  for (std::size_t s = 0; s < seeds; ++s) {
    InitSpec spec = base;
    spec.seed = base.seed + s;
    const Model model = initialize(kind, rate_r, n, data.input_dim(), data.length(), data.classes(), spec);
    parallel_for(count, threads, [&](std::size_t j) {
      const std::size_t i = s * count + j;
      const Trajectory traj = forward_sequence(model.cell, Vec(n), data.inputs(i));
      profiles[i] = input_gradient_norms(model.cell, traj, model.head, data.label(i));
    });
  }
  GradProfile out = mean_profile(profiles);
  out.meta.seed = base.seed;
  return out;
}

// ---- training loop -------------------------------------------------------

void validate(const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(config.clip_norm > 0.0)) throw ConfigError("clip norm must be > 0");
  if (config.batch_size == 0) throw ConfigError("batch size must be > 0");
  if (!std::is_sorted(config.lr_milestones.begin(), config.lr_milestones.end()))
    throw ConfigError("learning-rate milestones must be increasing");
  if (!(config.rmsprop.rho > 0.0 && config.rmsprop.rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
}

std::size_t select_best(std::span<const EpochRecord> log) {
  if (log.empty()) throw InsufficientDataError("empty training log");
  std::size_t best = 0;
  for (std::size_t i = 1; i < log.size(); ++i)
    if (log[i].val_loss < log[best].val_loss) best = i;
  return best;
}

TrainingDiverged::TrainingDiverged(const std::string& what, std::size_t epoch, std::size_t batch,
                                   TrainResult partial)
    : DivergenceError(Verbatim{}, what + " in epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch),
                      epoch),
      epoch_(epoch),
      batch_(batch),
      partial_(std::move(partial)) {}

namespace {

void freeze_alpha(Model& grads) {
  if (auto* g = std::get_if<LeakyParams>(&grads.cell)) g->alpha = 0.0;
}

void keep_alpha_in_range(Model& model) {
  if (auto* p = std::get_if<LeakyParams>(&model.cell)) p->alpha = std::clamp(p->alpha, 1e-6, 1.0 - 1e-6);
}

bool wants_profile(const TrainConfig& config, std::size_t epoch) {
  return std::find(config.profile_epochs.begin(), config.profile_epochs.end(), epoch) !=
         config.profile_epochs.end();
}

GradProfile snapshot(const Model& model, const SequenceDataset& data, const TrainConfig& config,
                     std::size_t epoch) {
  GradProfile p = profile_gradients(model, data, config.profile_batch);
  p.meta.epoch = static_cast<int>(epoch);
  p.meta.seed = config.seed;
  return p;
}

}  // namespace

TrainResult train(Model model, const SequenceDataset& train_data, const SequenceDataset& valid_data,
                  const TrainConfig& config) {
  validate(config);
  validate(model.cell);
  if (train_data.size() == 0 && config.epochs > 0) throw ConfigError("training set is empty");
  TrainResult result;
  result.best = model;
  const SequenceDataset& probe = valid_data.size() ? valid_data : train_data;

  auto diverged = [&](const std::string& what, std::size_t epoch, std::size_t batch) {
    result.final_model = model;
    if (!result.log.empty()) result.best_epoch = result.log[select_best(result.log)].epoch;
    return TrainingDiverged(what, epoch, batch, result);
  };

  try {
    if (wants_profile(config, 0)) result.profiles.push_back(snapshot(model, probe, config, 0));
  } catch (const DivergenceError& e) {
    throw diverged(e.what(), 0, 0);
  }

  Rng rng(config.seed);
  RmsPropState opt;
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best_loss = 0.0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = lr_at_epoch(config.learning_rate, epoch - 1, config.lr_milestones);
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      ++batch_no;
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const auto idx = std::span<const std::size_t>(order).subspan(start, stop - start);
      try {
        BatchResult br = batch_gradients(model, train_data, idx, config.threads);
        const double scale = 1.0 / static_cast<double>(idx.size());
        for (auto& t : tensors(br.grads))
          for (double& v : t.values) v *= scale;
        if (!config.train_alpha) freeze_alpha(br.grads);
        if (!std::isfinite(global_norm(tensors(std::as_const(br.grads)))))
          throw DivergenceError("non-finite gradient", 0);
        clip_global_norm(br.grads, config.clip_norm);
        rmsprop_step(model, br.grads, opt, lr, config.rmsprop);
        if (config.train_alpha) keep_alpha_in_range(model);
        loss_sum += br.loss_sum;
      } catch (const DivergenceError& e) {
        throw diverged(e.what(), epoch, batch_no);
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size());
    rec.lr = lr;
    try {
      const Evaluation ev = evaluate(model, valid_data, config.threads);
      rec.val_loss = ev.loss;
      rec.val_acc = ev.accuracy;
      if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss))
        throw DivergenceError("non-finite loss", 0);
      if (wants_profile(config, epoch)) result.profiles.push_back(snapshot(model, probe, config, epoch));
    } catch (const DivergenceError& e) {
      throw diverged(e.what(), epoch, batch_no);
    }
    result.log.push_back(rec);
    if (result.log.size() == 1 || rec.val_loss < best_loss) {
      best_loss = rec.val_loss;
      result.best = model;
      result.best_epoch = epoch;
    }
  }
  result.final_model = std::move(model);
  return result;
}

AlphaSearch search_alpha_multipliers(CellKind kind, double rate_r, std::size_t n,
                                     std::span<const double> multipliers, const InitSpec& base,
                                     const SequenceDataset& train_data,
                                     const SequenceDataset& valid_data, const TrainConfig& config) {
  if (multipliers.empty()) throw ConfigError("no alpha multipliers to search");
  AlphaSearch search;
  double best_loss = 0.0;
  bool have_best = false;
  for (double k : multipliers) {
    InitSpec spec = base;
    spec.alpha_multiplier = k;
    Model model = initialize(kind, rate_r, n, train_data.input_dim(), train_data.length(),
                             train_data.classes(), spec);
    AlphaSearchRun run;
    run.alpha_multiplier = k;
    try {
      run.result = train(std::move(model), train_data, valid_data, config);
      if (!run.result->log.empty()) {
        const double loss = run.result->log[select_best(run.result->log)].val_loss;
        if (!have_best || loss < best_loss) {
          best_loss = loss;
          have_best = true;
          search.best_run = search.runs.size();
        }
      }
    } catch (const TrainingDiverged& e) {
      run.diverged_epoch = e.epoch();
    }
    search.runs.push_back(std::move(run));
  }
  if (!have_best) throw DivergenceError("every alpha multiplier diverged", 0);
  return search;
}

}  // namespace polyrnn
