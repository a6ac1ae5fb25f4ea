// Acceptance runner: one PASS/FAIL line per criterion, tolerances pinned here.
// Soft checks are reported but do not affect the exit status.
//
//   acceptance [--out DIR] [--only 1,4,9]
//
// Criterion 8 uses the real datasets when POLYRNN_MNIST_DIR / POLYRNN_HAR_DIR
// point at them, and full-size generated stand-ins otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cli.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "polyrnn/bptt.hpp"
#include "polyrnn/data.hpp"
#include "polyrnn/diagnostics.hpp"
#include "polyrnn/io.hpp"
#include "polyrnn/ode.hpp"
#include "polyrnn/training.hpp"

using namespace polyrnn;
namespace fs = std::filesystem;

namespace {

// ---- pinned tolerances and sizes --------------------------------------------

constexpr double kGradTol = 1e-4;
constexpr double kFdStep = 1e-5;
constexpr int kGradInstances = 20;
constexpr double kFreeInputTol = 1e-10;
constexpr double kEulerTol = 1e-3;
constexpr double kEulerStep = 1e-4;
constexpr double kSensitivityTol = 1e-7;
constexpr double kSemigroupTol = 1e-12;
constexpr double kRatioLow = 1.8, kRatioHigh = 2.2;
constexpr double kTauTol = 0.01;

constexpr std::size_t kProfileHidden = 128;
constexpr std::size_t kProfileT = 784;
constexpr std::size_t kProfileCount = 32;
constexpr std::size_t kProfileSeeds = 4;
constexpr double kProfileWindow = 0.25;

constexpr int kLearnT = 200;
constexpr int kLearnHidden = 64;
constexpr int kLearnEpochs = 30;
constexpr int kLearnSeeds = 4;
constexpr int kLearnTrain = 400;
constexpr int kLearnValid = 200;
constexpr int kLearnBatch = 20;
constexpr double kLearnThreshold = 0.9;
constexpr double kUnstableAcc = 0.6;

struct Verdict {
  bool pass = false;
  std::string detail;
  bool soft = false;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int run_cli(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (out) *out = o.str();
  if (code != cli::kOk && code != cli::kDiverged) std::cerr << e.str();
  return code;
}

// ---- 1 ----------------------------------------------------------------------

Verdict gradient_oracle() {
  Rng rng(20240611);
  double worst = 0.0;
  std::size_t entries = 0;
  std::string worst_case;
  for (auto kind : {CellKind::Leaky, CellKind::Gated, CellKind::Gru}) {
    for (double r : {0.0, 1.0, 2.0}) {
      for (int i = 0; i < kGradInstances; ++i) {
        const auto g = oracle::gradient_check_instance(rng, kind, r, kFdStep);
        entries += g.entries;
        if (g.worst > worst) {
          worst = g.worst;
          worst_case = std::string(to_string(kind)) + " r=" + fixed(r, 0);
        }
      }
    }
  }
  return {worst < kGradTol, std::to_string(entries) + " entries, worst rel err " + sci(worst) + " (" + worst_case +
                                ") < " + sci(kGradTol)};
}

// ---- 2 ----------------------------------------------------------------------

// Largest relative deviation of dL/dh_t from factor^(T-t) ⊙ dL/dh_T, and,
// under a constant input, of successive input-gradient norm ratios from the
// factor when it is shared by all units.
double free_input_error(const CellParams& p, const Vec& factor, Rng& rng) {
  const std::size_t n = hidden_dim(p), d = input_dim(p), T = 12;
  const auto traj = forward_sequence(p, oracle::random_vec(rng, n), oracle::random_inputs(rng, T, d));
  const Vec dT = oracle::random_vec(rng, n);
  const auto g = backward_sequence(p, traj, dT);
  double worst = 0.0;
  for (std::size_t t = 0; t <= T; ++t)
    for (std::size_t j = 0; j < n; ++j) {
      const double expect = std::pow(factor[j], static_cast<double>(T - t)) * dT[j];
      worst = std::max(worst, oracle::rel_error(g.state_grads[t][j], expect, 1e-300));
    }
  if (std::all_of(factor.begin(), factor.end(), [&](double f) { return f == factor[0]; })) {
    const std::vector<Vec> xs(T, oracle::random_vec(rng, d));
    const auto flat = forward_sequence(p, oracle::random_vec(rng, n), xs);
    const auto gf = backward_sequence(p, flat, dT);
    for (std::size_t t = 0; t + 1 < T; ++t) {
      const double ratio = norm2(gf.input_grads[t]) / norm2(gf.input_grads[t + 1]);
      worst = std::max(worst, std::fabs(ratio - factor[0]) / factor[0]);
    }
  }
  return worst;
}

Verdict free_input_identities() {
  Rng rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.below(4), d = 1 + rng.below(3);
    auto leaky = std::get<LeakyParams>(oracle::random_cell(rng, CellKind::Leaky, n, d, 0.0));
    leaky.U = Mat(n, n);
    worst = std::max(worst, free_input_error(leaky, Vec(n, 1.0 - leaky.alpha), rng));

    auto gated = std::get<GatedParams>(oracle::random_cell(rng, CellKind::Gated, n, d, 0.0));
    gated.U_f = Mat(n, n);
    gated.W_f = Mat(n, d);
    gated.U_i = Mat(n, n);
    gated.U = Mat(n, n);
    Vec f(n);
    for (std::size_t j = 0; j < n; ++j) f[j] = 1.0 / (1.0 + std::exp(-gated.b_f[j]));
    worst = std::max(worst, free_input_error(gated, f, rng));
  }
  return {worst <= kFreeInputTol,
          "leaky (1-a)^k and gated sigmoid(b_f)^k, worst rel dev " + sci(worst) + " <= " + sci(kFreeInputTol)};
}

// ---- 3 ----------------------------------------------------------------------

Verdict ode_oracles() {
  double euler = 0.0, sens = 0.0, semi = 0.0, ratio_lo = 1e9, ratio_hi = 0.0;
  for (double r : {0.5, 1.0, 2.0, 4.0}) {
    const OdeRhs rhs = decay_rhs(DecayLaw::polynomial(r));
    for (double h0 : {0.25, 1.0, 2.0}) {
      Vec h{h0};
      // dt sampled every 0.5 along one integration over [0, 10]
      for (int k = 1; k <= 20; ++k) {
        h = euler_final(rhs, h, kEulerStep, 5000);
        const double exact = poly_decay_solution(h0, r, 0.5 * k);
        euler = std::max(euler, std::fabs(h[0] - exact) / exact);
      }
      for (double dt : {0.0, 0.1, 1.0, 3.0, 10.0}) {
        const double s = 1e-5 * h0;
        const double fd = (poly_decay_solution(h0 + s, r, dt) - poly_decay_solution(h0 - s, r, dt)) / (2 * s);
        sens = std::max(sens, std::fabs(poly_decay_sensitivity(h0, r, dt) - fd) / fd);
        for (double a : {0.3, 2.0}) {
          const double two = poly_decay_solution(poly_decay_solution(h0, r, a), r, dt);
          const double one = poly_decay_solution(h0, r, a + dt);
          semi = std::max(semi, std::fabs(two - one) / one);
        }
      }
    }
    const double exact = poly_decay_solution(1.0, r, 1.0);
    const double e1 = std::fabs(euler_final(rhs, Vec{1.0}, 1e-3, 1000)[0] - exact);
    const double e2 = std::fabs(euler_final(rhs, Vec{1.0}, 5e-4, 2000)[0] - exact);
    ratio_lo = std::min(ratio_lo, e1 / e2);
    ratio_hi = std::max(ratio_hi, e1 / e2);
  }
  const bool ok = euler <= kEulerTol && sens <= kSensitivityTol && semi <= kSemigroupTol && ratio_lo >= kRatioLow &&
                  ratio_hi <= kRatioHigh;
  return {ok, "euler " + sci(euler) + " <= " + sci(kEulerTol) + ", sensitivity " + sci(sens) + " <= " +
                  sci(kSensitivityTol) + ", semigroup " + sci(semi) + " <= " + sci(kSemigroupTol) +
                  ", convergence ratio in [" + fixed(ratio_lo, 3) + ", " + fixed(ratio_hi, 3) + "]"};
}

// ---- 4 ----------------------------------------------------------------------

Verdict decay_regimes(const fs::path& out) {
  const SequenceDataset probe =
      synthetic_longrange(SyntheticTask::Noise, kProfileT, kProfileCount * kProfileSeeds, 1, Split::Valid);
  std::string detail;
  bool ok = true;
  for (double r : {0.0, 2.0}) {
    InitSpec spec;
    spec.seed = 100;
    const GradProfile p = initial_profile(CellKind::Leaky, r, kProfileHidden, probe, spec, kProfileSeeds, kProfileCount);
    write_profile_csv(out / ("profile_init_r" + fixed(r, 0) + ".csv"), p);
    const DecayReport rep = analyze_decay(p, earliest_window(p.length(), kProfileWindow));
    const DecayModel want = r == 0.0 ? DecayModel::Exponential : DecayModel::Polynomial;
    ok = ok && rep.model == want;
    detail += (detail.empty() ? "" : "; ") + std::string("r=") + fixed(r, 0) + " -> " +
              std::string(to_string(rep.model)) + " (want " + std::string(to_string(want)) + ", exp r2 " +
              fixed(rep.exponential.r_squared) + ", poly r2 " + fixed(rep.polynomial.r_squared) + ")";
  }
  return {ok, detail};
}

// ---- 5 ----------------------------------------------------------------------

Verdict characteristic_times() {
  const double unit = characteristic_time(1.0 - std::exp(-1.0));
  const double dev = std::fabs(characteristic_time(0.01) * 0.01 - 1.0);
  return {unit == 1.0 && dev < kTauTol,
          "tau(1-e^-1) = " + format_double(unit) + ", |tau(0.01)*0.01 - 1| = " + sci(dev) + " < " + sci(kTauTol)};
}

// ---- 6 and 7 ------------------------------------------------------------------

struct LearnRun {
  int code = 0;
  std::vector<double> val_acc;
};

std::vector<std::string> learn_args(double r, int seed, const fs::path& dir) {
  return {"train", "--task", "adding", "--T", std::to_string(kLearnT), "--hidden", std::to_string(kLearnHidden),
          "--r", format_double(r), "--epochs", std::to_string(kLearnEpochs), "--batch", std::to_string(kLearnBatch),
          "--train-count", std::to_string(kLearnTrain), "--valid-count", std::to_string(kLearnValid),
          "--test-count", "0", "--seed", std::to_string(seed), "--out", dir.string()};
}

LearnRun learn(double r, int seed, const fs::path& root) {
  const fs::path dir = root / ("adding_r" + format_double(r) + "_seed" + std::to_string(seed));
  LearnRun run;
  run.code = run_cli(learn_args(r, seed, dir));
  if (fs::exists(dir / "train_log.csv")) {
    std::istringstream in(read_text_file(dir / "train_log.csv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
      run.val_acc.push_back(std::stod(cells.at(3)));
    }
  }
  return run;
}

// First epoch reaching the threshold, or epochs + 1 if never.
int epochs_to_threshold(const LearnRun& run) {
  for (std::size_t e = 0; e < run.val_acc.size(); ++e)
    if (run.val_acc[e] >= kLearnThreshold) return static_cast<int>(e) + 1;
  return kLearnEpochs + 1;
}

double median(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string epochs_list(const std::vector<int>& v) {
  std::string s;
  for (int e : v) s += (s.empty() ? "" : ",") + (e > kLearnEpochs ? std::string(">") + std::to_string(kLearnEpochs)
                                                                   : std::to_string(e));
  return s;
}

Verdict learnability(const fs::path& out) {
  std::vector<int> base, poly;
  int reversed = 0;
  for (int seed = 0; seed < kLearnSeeds; ++seed) {
    const LearnRun a = learn(0.0, seed, out), b = learn(2.0, seed, out);
    if (a.code != cli::kOk || b.code != cli::kOk)
      return {false, "run failed with exit code " + std::to_string(std::max(a.code, b.code)), true};
    base.push_back(epochs_to_threshold(a));
    poly.push_back(epochs_to_threshold(b));
    reversed += poly.back() > base.back() ? 1 : 0;
  }
  const double mb = median(base), mp = median(poly);
  // equal "never reached" medians say nothing about the ordering
  return {mp <= mb && mp <= kLearnEpochs,
          "epochs to val acc " + fixed(kLearnThreshold, 1) + ": r=2 [" + epochs_list(poly) + "] median " +
              fixed(mp, 1) + " vs r=0 [" + epochs_list(base) + "] median " + fixed(mb, 1) + "; reversed on " +
              std::to_string(reversed) + "/" + std::to_string(kLearnSeeds) + " seeds" +
              (mp > kLearnEpochs && mb > kLearnEpochs ? "; neither variant reached the threshold" : ""),
          true};
}

Verdict instability(const fs::path& out) {
  int diverged = 0, weak = 0, crashed = 0;
  std::string accs;
  for (int seed = 0; seed < kLearnSeeds; ++seed) {
    const LearnRun run = learn(0.5, seed, out);
    if (run.code == cli::kDiverged) {
      ++diverged;
      accs += (accs.empty() ? "" : ",") + std::string("div@") + std::to_string(run.val_acc.size() + 1);
    } else if (run.code == cli::kOk && run.val_acc.size() == kLearnEpochs) {
      weak += run.val_acc.back() < kUnstableAcc ? 1 : 0;
      accs += (accs.empty() ? "" : ",") + fixed(run.val_acc.back(), 3);
    } else {
      ++crashed;
    }
  }
  return {crashed == 0 && diverged + weak >= 1,
          "r=0.5: " + std::to_string(diverged) + " diverged (exit 3), " + std::to_string(weak) +
              " below val acc " + fixed(kUnstableAcc, 1) + " at epoch " + std::to_string(kLearnEpochs) + " [" + accs +
              "], " + std::to_string(crashed) + " other failures",
          true};
}

// ---- 8 ----------------------------------------------------------------------

std::size_t format_error_at(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.position();
  }
  return static_cast<std::size_t>(-1);
}

Verdict data_fidelity(const fs::path& scratch) {
  std::string detail;
  bool ok = true;

  // corrupted IDX files
  const fs::path idx = scratch / "idx";
  fs::create_directories(idx);
  write_idx_images(idx / "img", 2, 2, std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6, 7, 8});
  std::string bytes = read_text_file(idx / "img");
  std::string bad_magic = bytes;
  bad_magic[2] = 0x09;
  write_text_file(idx / "magic", bad_magic);
  write_text_file(idx / "short", bytes.substr(0, bytes.size() - 3));
  const std::size_t magic_at = format_error_at([&] { read_idx_images(idx / "magic"); });
  const std::size_t short_at = format_error_at([&] { read_idx_images(idx / "short"); });
  const bool idx_ok = magic_at == 0 && short_at == bytes.size() - 3;
  ok = ok && idx_ok;
  detail += "IDX errors at byte " + std::to_string(magic_at) + " (magic), " + std::to_string(short_at) +
            " (truncated)";

  const char* mnist_env = std::getenv("POLYRNN_MNIST_DIR");
  fs::path mnist_dir = mnist_env ? fs::path(mnist_env) : scratch / "mnist";
  if (!mnist_env) fixture::write_mnist(mnist_dir, 60000, 10000, 11);
  const TaskSplits m = load_mnist(mnist_dir, MnistOptions{});
  const bool mnist_ok = m.train.size() == 50000 && m.valid.size() == 10000 && m.test.size() == 10000 &&
                        m.train.length() == 784 && m.train.input_dim() == 1;
  ok = ok && mnist_ok;
  detail += "; MNIST" + std::string(mnist_env ? "" : " (generated)") + " " + std::to_string(m.train.size()) + "/" +
            std::to_string(m.valid.size()) + "/" + std::to_string(m.test.size()) + " T=" +
            std::to_string(m.train.length());

  const char* har_env = std::getenv("POLYRNN_HAR_DIR");
  fs::path har_dir = har_env ? fs::path(har_env) : scratch / "har";
  if (!har_env) fixture::write_har(har_dir, 7352, 2947, 12);
  const TaskSplits h = load_har(har_dir, HarOptions{});
  const bool har_ok = h.train.size() == 5881 && h.valid.size() == 1471 && h.test.size() == 2947 &&
                      h.train.length() == kHarWindow && h.train.input_dim() == kHarChannels;
  ok = ok && har_ok;
  detail += "; HAR" + std::string(har_env ? "" : " (generated)") + " " + std::to_string(h.train.size()) + "/" +
            std::to_string(h.valid.size()) + "/" + std::to_string(h.test.size()) + " window " +
            std::to_string(h.train.length()) + "x" + std::to_string(h.train.input_dim());
  return {ok, detail};
}

// ---- 9 ----------------------------------------------------------------------

Verdict determinism(const fs::path& scratch) {
  std::vector<std::string> mismatched;
  std::size_t compared = 0;
  std::string fit_out[2];
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = scratch / ("rep" + std::to_string(rep));
    run_cli({"train", "--task", "adding", "--T", "30", "--hidden", "8", "--epochs", "3", "--batch", "10",
             "--train-count", "60", "--valid-count", "20", "--test-count", "20", "--profile-epochs", "0,3", "--seed",
             "5", "--threads", "3", "--out", (dir / "train").string()});
    run_cli({"train", "--task", "adding", "--T", "30", "--hidden", "8", "--epochs", "2", "--batch", "10",
             "--train-count", "40", "--valid-count", "20", "--test-count", "0", "--alpha-mult", "1,5", "--seed", "5",
             "--out", (dir / "grid").string()});
    run_cli({"grad-profile", "--init-only", "--T", "50", "--hidden", "16", "--count", "4", "--seeds", "2", "--seed",
             "5", "--out", (dir / "profile").string()});
    run_cli({"grad-profile", "--checkpoint", (scratch / "rep0/train/best.ckpt").string(), "--task", "adding", "--T", "30",
             "--count", "4", "--seed", "5", "--out", (dir / "ckprofile").string()});
    run_cli({"ode-check", "--out", (dir / "ode").string()});
    run_cli({"fit-decay", (dir / "profile/profile.csv").string()}, &fit_out[rep]);
  }
  for (const auto& entry : fs::recursive_directory_iterator(scratch / "rep0")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), scratch / "rep0");
    const fs::path twin = scratch / "rep1" / rel;
    ++compared;
    if (!fs::exists(twin) || read_text_file(entry.path()) != read_text_file(twin)) mismatched.push_back(rel.string());
  }
  ++compared;
  if (fit_out[0] != fit_out[1] || fit_out[0].empty()) mismatched.push_back("fit-decay stdout");
  std::string detail = std::to_string(compared) + " outputs of train, train grid, grad-profile (init and checkpoint), "
                       "ode-check and fit-decay compared byte for byte";
  for (const auto& m : mismatched) detail += "; differs: " + m;
  return {mismatched.empty() && compared > 10, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string out_dir = "acceptance_artifacts";
  std::vector<int> only;
  app.add_option("--out", out_dir, "directory for CSVs and logs")->capture_default_str();
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const fs::path out = fs::absolute(out_dir);
  fs::remove_all(out);
  fs::create_directories(out);
  oracle::TempDir scratch;

  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> check;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient oracle suite", gradient_oracle},
      {2, "free-input identities", free_input_identities},
      {3, "ODE oracle suite", ode_oracles},
      {4, "initialization decay regimes", [&] { return decay_regimes(out); }},
      {5, "characteristic time", characteristic_times},
      {6, "desk-scale learnability ordering", [&] { return learnability(out); }},
      {7, "instability observability", [&] { return instability(out); }},
      {8, "data-format fidelity", [&] { return data_fidelity(scratch.path()); }},
      {9, "CLI determinism", [&] { return determinism(scratch.path()); }},
  };

  const std::set<int> selected(only.begin(), only.end());
  int hard_failures = 0;
  std::string report;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string status = v.pass ? "PASS" : v.soft ? "FAIL (soft)" : "FAIL";
    char head[96];
    std::snprintf(head, sizeof head, "[%s] %d %s (%.1f s): ", status.c_str(), c.id, c.name, secs);
    const std::string line = head + v.detail;
    std::cout << line << std::endl;
    report += line + "\n";
    if (!v.pass && !v.soft) ++hard_failures;
  }
  write_text_file(out / "acceptance.txt", report);
  std::cout << (hard_failures ? std::to_string(hard_failures) + " hard criteria failed" : "all hard criteria passed")
            << std::endl;
  return hard_failures ? 1 : 0;
}
