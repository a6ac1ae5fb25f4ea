#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "polyrnn/checkpoint.hpp"
#include "polyrnn/data.hpp"
#include "polyrnn/diagnostics.hpp"
#include "polyrnn/errors.hpp"
#include "polyrnn/io.hpp"
#include "polyrnn/ode.hpp"
#include "polyrnn/training.hpp"

namespace polyrnn::cli {

namespace fs = std::filesystem;

namespace {

// ---- shared option groups -----------------------------------------------

struct TaskOptions {
  std::string task = "adding";
  std::size_t T = 100;
  std::string data_dir;
  std::size_t downscale = 1;
  std::uint64_t permutation_seed = 0;
  std::size_t train_count = 1000;
  std::size_t valid_count = 200;
  std::size_t test_count = 200;
  std::size_t mnist_valid_split = 10000;
};

void add_task_options(CLI::App& app, TaskOptions& o) {
  app.add_option("--task", o.task, "adding | copy | noise | smnist | psmnist | har")
      ->check(CLI::IsMember({"adding", "copy", "noise", "smnist", "psmnist", "har"}))
      ->capture_default_str();
  app.add_option("--T", o.T, "sequence length of synthetic tasks")->capture_default_str();
  app.add_option("--data-dir", o.data_dir, "directory holding the MNIST or HAR files");
  app.add_option("--downscale", o.downscale, "MNIST pooling factor: 1 (T=784) or 2 (T=196)")
      ->check(CLI::IsMember({1, 2}))
      ->capture_default_str();
  app.add_option("--permutation-seed", o.permutation_seed, "fixed pixel permutation for psmnist")
      ->capture_default_str();
  app.add_option("--train-count", o.train_count, "training sequences (a limit for real data, 0 = all)")
      ->capture_default_str();
  app.add_option("--valid-count", o.valid_count, "validation sequences (limit for real data)")
      ->capture_default_str();
  app.add_option("--test-count", o.test_count, "test sequences (limit for real data)")->capture_default_str();
  app.add_option("--mnist-valid-split", o.mnist_valid_split, "training images held out for validation")
      ->capture_default_str();
}

bool is_synthetic(const std::string& task) { return task == "adding" || task == "copy" || task == "noise"; }

TaskSplits load_task(const TaskOptions& o, std::uint64_t seed) {
  if (is_synthetic(o.task))
    return synthetic_splits(parse_synthetic_task(o.task), o.T, o.train_count, o.valid_count, o.test_count, seed);
  if (o.data_dir.empty()) throw ConfigError("--task " + o.task + " needs --data-dir");
  if (o.task == "har") {
    HarOptions h;
    h.split_seed = seed;
    h.train_limit = o.train_count;
    h.valid_limit = o.valid_count;
    h.test_limit = o.test_count;
    return load_har(o.data_dir, h);
  }
  MnistOptions m;
  m.permuted = o.task == "psmnist";
  m.permutation_seed = o.permutation_seed;
  m.split_seed = seed;
  m.valid_count = o.mnist_valid_split;
  m.downscale = o.downscale;
  m.train_limit = o.train_count;
  m.valid_limit = o.valid_count;
  m.test_limit = o.test_count;
  return load_mnist(o.data_dir, m);
}

void record_task(KeyValues& kv, const TaskOptions& o, const SequenceDataset& ds) {
  kv["task"] = o.task;
  kv["T"] = std::to_string(ds.length());
  kv["input_dim"] = std::to_string(ds.input_dim());
  kv["classes"] = std::to_string(ds.classes());
  if (!is_synthetic(o.task)) {
    kv["data_dir"] = o.data_dir;
    if (o.task != "har") {
      kv["downscale"] = std::to_string(o.downscale);
      kv["mnist_valid_split"] = std::to_string(o.mnist_valid_split);
    }
    if (o.task == "psmnist") kv["permutation_seed"] = std::to_string(o.permutation_seed);
  }
}

struct ModelOptions {
  std::string cell = "leaky";
  double rate_r = 0.0;
  std::size_t hidden = 64;
  double weight_std = 0.1;
  double input_std = 1.0;
  std::optional<double> forget_bias;
};

void add_model_options(CLI::App& app, ModelOptions& o) {
  app.add_option("--cell", o.cell, "leaky | gated | gru")
      ->check(CLI::IsMember({"leaky", "gated", "gru"}))
      ->capture_default_str();
  app.add_option("--r", o.rate_r, "decay rate parameter r >= 0 (0 = ordinary cell)")->capture_default_str();
  app.add_option("--hidden", o.hidden, "hidden units n")->capture_default_str();
  app.add_option("--weight-std", o.weight_std, "recurrent init std times sqrt(n)")->capture_default_str();
  app.add_option("--input-std", o.input_std, "input-matrix init std times sqrt(n)")->capture_default_str();
  app.add_option("--forget-bias", o.forget_bias, "initial forget-gate bias (gated, gru)");
}

void check_model(const ModelOptions& o) {
  if (!(o.rate_r >= 0.0) || !std::isfinite(o.rate_r))
    throw ConfigError("--r must be >= 0, got " + format_double(o.rate_r));
  if (o.hidden == 0) throw ConfigError("--hidden must be positive");
}

InitSpec init_spec(const ModelOptions& o, double alpha_multiplier, std::uint64_t seed) {
  InitSpec spec;
  spec.alpha_multiplier = alpha_multiplier;
  spec.weight_std_coeff = o.weight_std;
  spec.input_std_coeff = o.input_std;
  spec.forget_bias = o.forget_bias;
  spec.seed = seed;
  return spec;
}

void record_model(KeyValues& kv, const ModelOptions& o) {
  kv["cell"] = o.cell;
  kv["r"] = format_double(o.rate_r);
  kv["hidden"] = std::to_string(o.hidden);
  kv["weight_std"] = format_double(o.weight_std);
  kv["input_std"] = format_double(o.input_std);
  if (o.forget_bias) kv["forget_bias"] = format_double(*o.forget_bias);
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

void write_log_csv(const fs::path& path, const std::vector<EpochRecord>& log) {
  std::string text = "epoch,train_loss,val_loss,val_acc,lr\n";
  for (const auto& r : log)
    text += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," + format_double(r.val_loss) + "," +
            format_double(r.val_acc) + "," + format_double(r.lr) + "\n";
  write_text_file(path, text);
}

KeyValues fit_summary(const DecayReport& rep) {
  KeyValues kv;
  kv["exponential_slope"] = format_double(rep.exponential.slope);
  kv["exponential_r2"] = format_double(rep.exponential.r_squared);
  kv["polynomial_slope"] = format_double(rep.polynomial.slope);
  kv["polynomial_r2"] = format_double(rep.polynomial.r_squared);
  kv["classification"] = std::string(to_string(rep.model));
  kv["excluded_zeros"] = std::to_string(rep.exponential.excluded_zeros);
  kv["window_begin"] = std::to_string(rep.exponential.window.begin + 1);
  kv["window_end"] = std::to_string(rep.exponential.window.end);
  kv["degenerate"] = rep.exponential.degenerate || rep.polynomial.degenerate ? "true" : "false";
  return kv;
}

void print_fit(std::ostream& out, const DecayReport& rep) {
  const auto line = [&](const char* name, const DecayFit& f) {
    out << name << " slope=" << format_double(f.slope) << " r2=" << format_double(f.r_squared)
        << " points=" << f.points << (f.degenerate ? " (degenerate)" : "") << "\n";
  };
  out << "window: t=" << rep.exponential.window.begin + 1 << ".." << rep.exponential.window.end << "\n";
  line("exponential", rep.exponential);
  line("polynomial ", rep.polynomial);
  out << "excluded zeros: " << rep.exponential.excluded_zeros << "\n";
  out << "classification: " << to_string(rep.model) << "\n";
}

FitWindow window_for(std::size_t length, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("--window-frac must lie in (0, 1]");
  return earliest_window(length, fraction);
}

// ---- train ----------------------------------------------------------------

struct TrainOptions {
  TaskOptions task;
  ModelOptions model;
  std::vector<double> alpha_mults{1.0};
  std::size_t epochs = 10;
  double lr = 1e-3;
  double clip = 1.0;
  std::size_t batch = 100;
  std::vector<std::size_t> milestones{100, 150};
  std::vector<std::size_t> profile_epochs;
  std::size_t profile_batch = 32;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool train_alpha = false;
  std::string out = "run";
};

void profile_path_note(std::ostream& out, const fs::path& p) { out << "wrote " << p.string() << "\n"; }

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  check_model(o.model);
  for (double k : o.alpha_mults)
    if (!(k > 0.0)) throw ConfigError("--alpha-mult values must be > 0");
  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.clip_norm = o.clip;
  cfg.batch_size = o.batch;
  cfg.epochs = o.epochs;
  cfg.lr_milestones = o.milestones;
  cfg.profile_epochs = o.profile_epochs;
  cfg.profile_batch = o.profile_batch;
  cfg.seed = o.seed;
  cfg.threads = std::max(1u, o.threads);
  cfg.train_alpha = o.train_alpha;
  validate(cfg);

  const CellKind kind = parse_cell_kind(o.model.cell);
  const TaskSplits data = load_task(o.task, o.seed);
  const std::size_t T = data.train.length();
  for (double k : o.alpha_mults) resolve_alpha(k, T);

  const fs::path dir = o.out;
  fs::create_directories(dir);

  KeyValues config;
  config["command"] = "train";
  record_task(config, o.task, data.train);
  record_model(config, o.model);
  config["train_count"] = std::to_string(data.train.size());
  config["valid_count"] = std::to_string(data.valid.size());
  config["test_count"] = std::to_string(data.test.size());
  config["alpha_mult"] = join(o.alpha_mults);
  config["epochs"] = std::to_string(o.epochs);
  config["lr"] = format_double(o.lr);
  config["clip"] = format_double(o.clip);
  config["batch"] = std::to_string(o.batch);
  config["milestones"] = join(o.milestones);
  config["profile_epochs"] = join(o.profile_epochs);
  config["profile_batch"] = std::to_string(o.profile_batch);
  config["seed"] = std::to_string(o.seed);
  config["threads"] = std::to_string(cfg.threads);
  config["train_alpha"] = o.train_alpha ? "true" : "false";
  config["rmsprop_rho"] = format_double(cfg.rmsprop.rho);
  config["rmsprop_eps"] = format_double(cfg.rmsprop.eps);
  if (kind == CellKind::Leaky && o.alpha_mults.size() == 1)
    config["alpha"] = format_double(resolve_alpha(o.alpha_mults[0], T));
  write_key_values(dir / "config.txt", config);

  if (kind == CellKind::Leaky) {
    for (double k : o.alpha_mults)
      out << "alpha = " << format_double(k) << "/" << T << " = " << format_double(resolve_alpha(k, T)) << "\n";
  }

  auto write_outputs = [&](const TrainResult& r, double k) {
    write_log_csv(dir / "train_log.csv", r.log);
    for (const auto& p : r.profiles) {
      const fs::path path = dir / ("profile_epoch" + std::to_string(p.meta.epoch) + ".csv");
      write_profile_csv(path, p);
    }
    Checkpoint ck{r.best, {}};
    ck.meta["task"] = o.task.task;
    ck.meta["epoch"] = std::to_string(r.best_epoch);
    ck.meta["seed"] = std::to_string(o.seed);
    ck.meta["alpha_mult"] = format_double(k);
    save_checkpoint(dir / "best.ckpt", ck);

    KeyValues results;
    results["best_epoch"] = std::to_string(r.best_epoch);
    results["alpha_mult"] = format_double(k);
    if (!r.log.empty()) {
      const EpochRecord& best = r.log[select_best(r.log)];
      results["best_val_loss"] = format_double(best.val_loss);
      results["best_val_acc"] = format_double(best.val_acc);
    }
    if (data.test.size() > 0) {
      const Evaluation ev = evaluate(r.best, data.test, cfg.threads);
      results["test_loss"] = format_double(ev.loss);
      results["test_acc"] = format_double(ev.accuracy);
    }
    write_key_values(dir / "results.txt", results);
    for (const auto& [key, value] : results) out << key << " = " << value << "\n";
  };

  if (o.alpha_mults.size() == 1) {
    const double k = o.alpha_mults[0];
    Model model = initialize(kind, o.model.rate_r, o.model.hidden, data.train.input_dim(), T,
                             data.train.classes(), init_spec(o.model, k, o.seed));
    try {
      const TrainResult r = train(std::move(model), data.train, data.valid, cfg);
      write_outputs(r, k);
    } catch (const TrainingDiverged& e) {
      write_log_csv(dir / "train_log.csv", e.partial().log);
      KeyValues status;
      status["status"] = "diverged";
      status["epoch"] = std::to_string(e.epoch());
      status["batch"] = std::to_string(e.batch());
      write_key_values(dir / "results.txt", status);
      err << "polyrnn: training diverged: " << e.what() << "\n";
      return kDiverged;
    }
    return kOk;
  }

  if (kind != CellKind::Leaky) throw ConfigError("an --alpha-mult grid applies to leaky cells only");
  const AlphaSearch s = search_alpha_multipliers(kind, o.model.rate_r, o.model.hidden, o.alpha_mults,
                                                 init_spec(o.model, 1.0, o.seed), data.train, data.valid, cfg);
  std::string grid = "alpha_mult,alpha,status,best_epoch,best_val_loss,best_val_acc\n";
  for (const auto& run : s.runs) {
    grid += format_double(run.alpha_multiplier) + "," + format_double(resolve_alpha(run.alpha_multiplier, T)) + ",";
    if (run.result && !run.result->log.empty()) {
      const EpochRecord& b = run.result->log[select_best(run.result->log)];
      grid += "ok," + std::to_string(b.epoch) + "," + format_double(b.val_loss) + "," + format_double(b.val_acc) + "\n";
    } else {
      grid += "diverged," + std::to_string(run.diverged_epoch.value_or(0)) + ",,\n";
    }
  }
  write_text_file(dir / "alpha_search.csv", grid);
  const auto& best = s.runs[s.best_run];
  out << "best alpha multiplier: " << format_double(best.alpha_multiplier) << "\n";
  write_outputs(*best.result, best.alpha_multiplier);
  return kOk;
}

// ---- grad-profile -----------------------------------------------------------

struct ProfileOptions {
  TaskOptions task;
  ModelOptions model;
  std::string checkpoint;
  bool init_only = false;
  double alpha_mult = 1.0;
  std::size_t count = 32;
  std::size_t seeds = 4;
  double window_frac = 0.25;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out = "profile";
};

int cmd_grad_profile(ProfileOptions o, std::ostream& out, std::ostream&) {
  if (o.init_only == !o.checkpoint.empty()) throw ConfigError("give exactly one of --checkpoint or --init-only");
  if (o.count == 0 || o.seeds == 0) throw ConfigError("--count and --seeds must be positive");
  check_model(o.model);
  std::optional<Checkpoint> ck;
  if (!o.init_only) {
    if (!fs::exists(o.checkpoint)) throw FileError("checkpoint not found: " + o.checkpoint);
    ck = load_checkpoint(o.checkpoint);
    o.seeds = 1;
  }
  // profiles use the validation split
  const std::size_t needed = o.count * o.seeds;
  TaskOptions t = o.task;
  t.valid_count = needed;
  if (is_synthetic(t.task)) {
    t.train_count = 0;
    t.test_count = 0;
  } else {
    t.train_count = 1;
    t.test_count = 1;
  }
  const TaskSplits data = load_task(t, o.seed);
  const SequenceDataset& probe = data.valid;

  KeyValues config;
  config["command"] = "grad-profile";
  record_task(config, t, probe);
  config["count"] = std::to_string(o.count);
  config["seeds"] = std::to_string(o.seeds);
  config["window_frac"] = format_double(o.window_frac);
  config["seed"] = std::to_string(o.seed);

  GradProfile profile;
  if (ck) {
    const Model& m = ck->model;
    if (input_dim(m.cell) != probe.input_dim() || m.head.bias.dim() != probe.classes())
      throw ConfigError("checkpoint dimensions do not match --task " + t.task);
    config["checkpoint"] = o.checkpoint;
    config["cell"] = std::string(to_string(kind_of(m.cell)));
    config["r"] = format_double(rate_of(m.cell));
    profile = profile_gradients(m, probe, o.count);
    if (auto it = ck->meta.find("epoch"); it != ck->meta.end())
      profile.meta.epoch = static_cast<int>(parse_integer(it->second).value_or(0));
    profile.meta.seed = o.seed;
  } else {
    const CellKind kind = parse_cell_kind(o.model.cell);
    record_model(config, o.model);
    config["alpha_mult"] = format_double(o.alpha_mult);
    if (kind == CellKind::Leaky) config["alpha"] = format_double(resolve_alpha(o.alpha_mult, probe.length()));
    profile = initial_profile(kind, o.model.rate_r, o.model.hidden, probe, init_spec(o.model, o.alpha_mult, o.seed),
                              o.seeds, o.count, std::max(1u, o.threads));
  }

  const DecayReport rep = analyze_decay(profile, window_for(profile.length(), o.window_frac));
  const fs::path dir = o.out;
  fs::create_directories(dir);
  write_key_values(dir / "config.txt", config);
  write_profile_csv(dir / "profile.csv", profile);
  write_key_values(dir / "fit.txt", fit_summary(rep));
  print_fit(out, rep);
  profile_path_note(out, dir / "profile.csv");
  return kOk;
}

// ---- ode-check --------------------------------------------------------------

struct OdeOptions {
  std::optional<double> r, h0, dt;
  std::string out;
};

struct CheckRow {
  std::string check;
  double r = 0.0, h0 = 0.0, dt = 0.0;
  double value = 0.0, reference = 0.0, error = 0.0, tolerance = 0.0;
  bool informational = false;
  bool pass() const { return informational || error <= tolerance; }
};

double rel(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-300); }

std::vector<CheckRow> ode_grid() {
  std::vector<CheckRow> rows;
  const double rs[] = {0.5, 1.0, 2.0, 4.0};
  const double h0s[] = {0.25, 1.0, 2.0};
  const double dts[] = {0.5, 1.0, 2.5, 5.0, 10.0};

  for (double r : rs) {
    for (double h0 : h0s) {
      // closed form vs Euler with step 1e-4, sampled along one integration
      const OdeRhs rhs = decay_rhs(DecayLaw::polynomial(r));
      Vec h{h0};
      std::size_t done = 0;
      for (double dt : dts) {
        const auto target = static_cast<std::size_t>(std::llround(dt / 1e-4));
        h = euler_final(rhs, h, 1e-4, target - done);
        done = target;
        const double exact = poly_decay_solution(h0, r, dt);
        rows.push_back({"euler_vs_closed_form", r, h0, dt, h[0], exact, rel(h[0], exact), 1e-3});
      }
      for (double dt : dts) {
        const double s = 1e-5 * h0;
        const double fd = (poly_decay_solution(h0 + s, r, dt) - poly_decay_solution(h0 - s, r, dt)) / (2.0 * s);
        const double v = poly_decay_sensitivity(h0, r, dt);
        rows.push_back({"sensitivity_vs_fd", r, h0, dt, v, fd, rel(v, fd), 1e-7});
        const double u = poly_decay_sensitivity_unscaled(h0, r, dt);
        CheckRow info{"unscaled_sensitivity_vs_fd", r, h0, dt, u, fd, rel(u, fd), 0.0};
        info.informational = true;
        rows.push_back(info);
      }
      for (double s : {0.5, 3.0}) {
        for (double dt : dts) {
          const double two = poly_decay_solution(poly_decay_solution(h0, r, s), r, dt);
          const double one = poly_decay_solution(h0, r, s + dt);
          rows.push_back({"semigroup", r, h0, dt, two, one, rel(two, one), 1e-12});
        }
      }
    }
    // first-order convergence: halving the step halves the error
    const OdeRhs rhs = decay_rhs(DecayLaw::polynomial(r));
    const double exact = poly_decay_solution(1.0, r, 1.0);
    const double e1 = std::fabs(euler_final(rhs, Vec{1.0}, 1e-3, 1000)[0] - exact);
    const double e2 = std::fabs(euler_final(rhs, Vec{1.0}, 5e-4, 2000)[0] - exact);
    const double ratio = e1 / e2;
    rows.push_back({"euler_convergence_ratio", r, 1.0, 1.0, ratio, 2.0, std::fabs(ratio - 2.0), 0.2});
  }
  for (double r : {1.0, 2.0}) {
    for (double dt : {1.0, 2.0, 5.0, 10.0}) {
      const double p = poly_decay_solution(1.0, r, dt), e = exp_decay_solution(1.0, 1.0, dt);
      // error > 0 exactly when the polynomial solution fails to dominate
      rows.push_back({"poly_slower_than_exp", r, 1.0, dt, p, e, p > e ? 0.0 : e - p + 1.0, 0.0});
    }
  }
  return rows;
}

int cmd_ode_check(const OdeOptions& o, std::ostream& out) {
  if (o.r || o.h0 || o.dt) {
    const double r = o.r.value_or(1.0), h0 = o.h0.value_or(1.0), dt = o.dt.value_or(1.0);
    out << "r = " << format_double(r) << ", h0 = " << format_double(h0) << ", dt = " << format_double(dt) << "\n";
    out << "solution = " << format_double(poly_decay_solution(h0, r, dt)) << "\n";
    out << "sensitivity = " << format_double(poly_decay_sensitivity(h0, r, dt)) << "\n";
    out << "sensitivity_unscaled = " << format_double(poly_decay_sensitivity_unscaled(h0, r, dt)) << "\n";
    return kOk;
  }
  const std::vector<CheckRow> rows = ode_grid();
  std::string csv = "check,r,h0,dt,value,reference,error,tolerance,pass\n";
  struct Summary {
    std::size_t cases = 0, failed = 0;
    double worst = 0.0, tolerance = 0.0;
    bool informational = false;
  };
  std::vector<std::string> order;
  std::map<std::string, Summary> summary;
  for (const auto& row : rows) {
    csv += row.check + "," + format_double(row.r) + "," + format_double(row.h0) + "," + format_double(row.dt) + "," +
           format_double(row.value) + "," + format_double(row.reference) + "," + format_double(row.error) + "," +
           (row.informational ? std::string("") : format_double(row.tolerance)) + "," +
           (row.informational ? "info" : row.pass() ? "pass" : "fail") + "\n";
    if (!summary.count(row.check)) order.push_back(row.check);
    Summary& s = summary[row.check];
    ++s.cases;
    s.failed += row.pass() ? 0 : 1;
    s.worst = std::max(s.worst, row.error);
    s.tolerance = row.tolerance;
    s.informational = row.informational;
  }
  bool ok = true;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-28s %6s %12s %12s  %s\n", "check", "cases", "max error", "tolerance", "result");
  out << buf;
  for (const auto& name : order) {
    const Summary& s = summary[name];
    const char* verdict = s.informational ? "INFO" : s.failed ? "FAIL" : "PASS";
    ok = ok && (s.informational || s.failed == 0);
    std::snprintf(buf, sizeof buf, "%-28s %6zu %12.3e %12s  %s\n", name.c_str(), s.cases, s.worst,
                  s.informational ? "-" : format_double(s.tolerance).c_str(), verdict);
    out << buf;
  }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_text_file(fs::path(o.out) / "ode_check.csv", csv);
    KeyValues config{{"command", "ode-check"}};
    write_key_values(fs::path(o.out) / "config.txt", config);
  }
  out << (ok ? "all checks passed" : "some checks failed") << "\n";
  return ok ? kOk : kCheckFailed;
}

// ---- fit-decay ----------------------------------------------------------------

struct FitOptions {
  std::string csv;
  double window_frac = 0.25;
};

int cmd_fit_decay(const FitOptions& o, std::ostream& out) {
  const GradProfile p = read_profile_csv(o.csv);
  const DecayReport rep = analyze_decay(p, window_for(p.length(), o.window_frac));
  print_fit(out, rep);
  return kOk;
}

// Expands `--config FILE` into ordinary options placed ahead of the command
// line ones, so explicit arguments win. Keys may use '_' for '-'; keys the
// subcommand does not know are ignored, which lets a run's config.txt be
// fed back in.
std::vector<std::string> expand_config(CLI::App& app, const std::vector<std::string>& args) {
  std::size_t sub_pos = 0;
  while (sub_pos < args.size() && !args[sub_pos].empty() && args[sub_pos][0] == '-') ++sub_pos;
  if (sub_pos == args.size()) return args;
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[sub_pos]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  std::optional<std::string> file;
  std::vector<std::string> rest;
  for (std::size_t i = sub_pos + 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 == args.size()) throw ConfigError("--config needs a file name");
      file = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!file) return args;

  const auto given = [&](const std::string& name) {
    return std::any_of(rest.begin(), rest.end(),
                       [&](const std::string& a) { return a == name || a.rfind(name + "=", 0) == 0; });
  };
  std::vector<std::string> out(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1);
  for (const auto& [raw_key, value] : read_key_values(*file)) {
    std::string key = raw_key;
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string name = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(name);
    if (opt == nullptr || value.empty() || given(name)) continue;
    out.push_back(name + "=" + value);
  }
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  std::string config_path;
  CLI::App app{"Leaky and gated RNNs with polynomial memory decay", "polyrnn"};
  app.require_subcommand(1);

  TrainOptions train_opt;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model and write logs, checkpoint and profiles");
  train_cmd->add_option("--config", config_path, "key=value file of option defaults");
  add_task_options(*train_cmd, train_opt.task);
  add_model_options(*train_cmd, train_opt.model);
  train_cmd->add_option("--alpha-mult", train_opt.alpha_mults, "alpha = k/T; several values run the grid")
      ->delimiter(',')
      ->capture_default_str();
  train_cmd->add_option("--epochs", train_opt.epochs)->capture_default_str();
  train_cmd->add_option("--lr", train_opt.lr)->capture_default_str();
  train_cmd->add_option("--clip", train_opt.clip, "global gradient-norm bound")->capture_default_str();
  train_cmd->add_option("--batch", train_opt.batch)->capture_default_str();
  train_cmd->add_option("--milestones", train_opt.milestones, "epochs after which lr halves")
      ->delimiter(',')
      ->capture_default_str();
  train_cmd->add_option("--profile-epochs", train_opt.profile_epochs, "epochs to record gradient profiles (0 = init)")
      ->delimiter(',');
  train_cmd->add_option("--profile-batch", train_opt.profile_batch)->capture_default_str();
  train_cmd->add_option("--seed", train_opt.seed)->capture_default_str();
  train_cmd->add_option("--threads", train_opt.threads)->capture_default_str();
  train_cmd->add_flag("--train-alpha", train_opt.train_alpha, "let RMSprop update alpha");
  train_cmd->add_option("--out", train_opt.out, "output directory")->capture_default_str();

  ProfileOptions prof_opt;
  prof_opt.task.task = "noise";
  prof_opt.task.T = 784;
  prof_opt.model.hidden = 128;
  CLI::App* prof_cmd = app.add_subcommand("grad-profile", "per-timestep ||dL/dx_t|| and its decay fit");
  prof_cmd->add_option("--config", config_path, "key=value file of option defaults");
  add_task_options(*prof_cmd, prof_opt.task);
  add_model_options(*prof_cmd, prof_opt.model);
  prof_cmd->add_option("--checkpoint", prof_opt.checkpoint, "trained model to profile");
  prof_cmd->add_flag("--init-only", prof_opt.init_only, "profile freshly initialized models");
  prof_cmd->add_option("--alpha-mult", prof_opt.alpha_mult)->capture_default_str();
  prof_cmd->add_option("--count", prof_opt.count, "sequences per model")->capture_default_str();
  prof_cmd->add_option("--seeds", prof_opt.seeds, "initialization seeds averaged (--init-only)")
      ->capture_default_str();
  prof_cmd->add_option("--window-frac", prof_opt.window_frac, "fit the earliest fraction of timesteps")
      ->capture_default_str();
  prof_cmd->add_option("--seed", prof_opt.seed)->capture_default_str();
  prof_cmd->add_option("--threads", prof_opt.threads)->capture_default_str();
  prof_cmd->add_option("--out", prof_opt.out, "output directory")->capture_default_str();

  OdeOptions ode_opt;
  CLI::App* ode_cmd = app.add_subcommand("ode-check", "closed-form ODE oracles against Euler and finite differences");
  ode_cmd->add_option("--config", config_path, "key=value file of option defaults");
  ode_cmd->add_option("--r", ode_opt.r, "print values at this rate instead of running the grid");
  ode_cmd->add_option("--h0", ode_opt.h0);
  ode_cmd->add_option("--dt", ode_opt.dt);
  ode_cmd->add_option("--out", ode_opt.out, "directory for ode_check.csv");

  FitOptions fit_opt;
  CLI::App* fit_cmd = app.add_subcommand("fit-decay", "fit exponential and polynomial decay to a profile CSV");
  fit_cmd->add_option("csv", fit_opt.csv, "profile CSV with header t,norm")->required();
  fit_cmd->add_option("--window-frac", fit_opt.window_frac)->capture_default_str();

  try {
    try {
      std::vector<std::string> args = expand_config(app, raw_args);
      std::reverse(args.begin(), args.end());
      app.parse(args);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kOk : kUsage;
    }
    if (*train_cmd) return cmd_train(train_opt, out, err);
    if (*prof_cmd) return cmd_grad_profile(prof_opt, out, err);
    if (*ode_cmd) return cmd_ode_check(ode_opt, out);
    if (*fit_cmd) return cmd_fit_decay(fit_opt, out);
  } catch (const ConfigError& e) {
    err << "polyrnn: configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const DomainError& e) {
    err << "polyrnn: invalid value: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "polyrnn: format error at position " << e.position() << ": " << e.what() << "\n";
    return kData;
  } catch (const FileError& e) {
    err << "polyrnn: file error: " << e.what() << "\n";
    return kData;
  } catch (const InsufficientDataError& e) {
    err << "polyrnn: not enough data: " << e.what() << "\n";
    return kData;
  } catch (const DivergenceError& e) {
    err << "polyrnn: numerical divergence: " << e.what() << "\n";
    return kDiverged;
  } catch (const DimensionError& e) {
    err << "polyrnn: dimension mismatch: " << e.what() << "\n";
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    err << "polyrnn: file error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace polyrnn::cli
