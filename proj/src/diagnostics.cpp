#include "polyrnn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "polyrnn/errors.hpp"
#include "polyrnn/io.hpp"

namespace polyrnn {

std::string_view to_string(DecayModel model) noexcept {
  switch (model) {
    case DecayModel::Exponential:
      return "exponential";
    case DecayModel::Polynomial:
      return "polynomial";
    case DecayModel::Neither:
      return "neither";
  }
  return "neither";
}

FitWindow earliest_window(std::size_t length, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw DomainError("window fraction must lie in (0, 1]");
  const auto end = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(length)));
  return {0, std::min(end, length)};
}

namespace {

template <typename XOf>
DecayFit least_squares(const GradProfile& profile, FitWindow window, DecayModel model, XOf x_of) {
  if (window.begin > window.end || window.end > profile.length())
    throw DimensionError("fit window exceeds profile length");
  DecayFit fit;
  fit.model = model;
  fit.window = window;
  std::vector<double> xs, ys;
  for (std::size_t i = window.begin; i < window.end; ++i) {
    const double v = profile.norms[i];
    if (v > 0.0) {
      xs.push_back(x_of(i));
      ys.push_back(std::log(v));
    } else {
      ++fit.excluded_zeros;
    }
  }
  fit.points = xs.size();
  if (xs.size() < 3) {
    throw InsufficientDataError("decay fit needs at least 3 positive norms in the window, got " +
                                std::to_string(xs.size()));
  }
  const double k = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
    yy += ys[i] * ys[i];
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (syy <= eps * eps * (yy + 1.0) * k) {
    fit.slope = 0.0;
    fit.intercept = my;
    fit.degenerate = true;
    fit.r_squared = 0.0;
    return fit;
  }
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ss_res += e * e;
  }
  fit.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  return fit;
}

}  // namespace

DecayFit fit_exponential(const GradProfile& profile, FitWindow window) {
  const double T = static_cast<double>(profile.length());
  // index i is timestep t = i + 1, backward time T - t
  return least_squares(profile, window, DecayModel::Exponential,
                       [T](std::size_t i) { return T - static_cast<double>(i + 1); });
}

DecayFit fit_polynomial(const GradProfile& profile, FitWindow window) {
  const double T = static_cast<double>(profile.length());
  return least_squares(profile, window, DecayModel::Polynomial,
                       [T](std::size_t i) { return std::log(T - static_cast<double>(i)); });
}

DecayModel classify(const DecayFit& exponential, const DecayFit& polynomial, double threshold) {
  const bool exp_wins = exponential.r_squared >= polynomial.r_squared;
  const DecayFit& best = exp_wins ? exponential : polynomial;
  if (best.degenerate || best.r_squared < threshold) return DecayModel::Neither;
  return exp_wins ? DecayModel::Exponential : DecayModel::Polynomial;
}

DecayReport analyze_decay(const GradProfile& profile, FitWindow window) {
  DecayReport report;
  report.exponential = fit_exponential(profile, window);
  report.polynomial = fit_polynomial(profile, window);
  report.model = classify(report.exponential, report.polynomial);
  return report;
}

DecayModel classify_decay(const GradProfile& profile, FitWindow window) {
  return analyze_decay(profile, window).model;
}

DecayModel classify_decay(const GradProfile& profile) {
  if (profile.norms.empty()) throw InsufficientDataError("empty gradient profile");
  return classify_decay(profile, earliest_window(profile.length()));
}

GradProfile mean_profile(const std::vector<GradProfile>& profiles) {
  if (profiles.empty()) throw InsufficientDataError("no profiles to average");
  GradProfile out;
  out.meta = profiles.front().meta;
  out.norms.assign(profiles.front().length(), 0.0);
  for (const auto& p : profiles) {
    if (p.length() != out.norms.size()) throw DimensionError("profiles differ in length");
    for (std::size_t i = 0; i < p.length(); ++i) out.norms[i] += p.norms[i];
  }
  for (double& v : out.norms) v /= static_cast<double>(profiles.size());
  return out;
}

void write_profile_csv(const std::filesystem::path& path, const GradProfile& profile) {
  std::string text = "t,norm\n";
  for (std::size_t i = 0; i < profile.length(); ++i)
    text += std::to_string(i + 1) + "," + format_double(profile.norms[i]) + "\n";
  write_text_file(path, text);
  KeyValues meta{{"cell", profile.meta.cell},
                 {"rate_r", format_double(profile.meta.rate_r)},
                 {"epoch", std::to_string(profile.meta.epoch)},
                 {"seed", std::to_string(profile.meta.seed)},
                 {"length", std::to_string(profile.length())}};
  auto meta_path = path;
  meta_path += ".meta";
  write_key_values(meta_path, meta);
}

GradProfile read_profile_csv(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  auto lines = split(text, '\n');
  if (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty() || trim(lines[0]) != "t,norm")
    throw FormatError("gradient profile must start with header 't,norm'", 1);
  GradProfile profile;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split(trim(lines[i]), ',');
    if (fields.size() != 2) throw FormatError("expected two columns t,norm", i + 1);
    const auto t = parse_integer(fields[0]);
    const auto norm = parse_double(fields[1]);
    if (!t || *t != static_cast<long long>(i)) throw FormatError("timesteps must run 1..T", i + 1);
    if (!norm || !(*norm >= 0.0) || !std::isfinite(*norm))
      throw FormatError("norm must be a finite non-negative number", i + 1);
    profile.norms.push_back(*norm);
  }
  auto meta_path = path;
  meta_path += ".meta";
  if (std::filesystem::exists(meta_path)) {
    const auto kv = read_key_values(meta_path);
    if (auto it = kv.find("cell"); it != kv.end()) profile.meta.cell = it->second;
    if (auto it = kv.find("rate_r"); it != kv.end())
      profile.meta.rate_r = parse_double(it->second).value_or(0.0);
    if (auto it = kv.find("epoch"); it != kv.end())
      profile.meta.epoch = static_cast<int>(parse_integer(it->second).value_or(0));
    if (auto it = kv.find("seed"); it != kv.end())
      profile.meta.seed = static_cast<std::uint64_t>(parse_integer(it->second).value_or(0));
  }
  return profile;
}

}  // namespace polyrnn
