#pragma once

// Decay-regime analysis of per-timestep input-gradient norms ||dL/dx_t||.
// Exponential decay is a straight line of log(norm) against backward time
// T - t; polynomial decay is a straight line against log(T - t + 1).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace polyrnn {

struct ProfileMeta {
  std::string cell = "leaky";
  double rate_r = 0.0;
  int epoch = 0;
  std::uint64_t seed = 0;
};

// norms[i] is ||dL/dx_t|| at t = i + 1.
struct GradProfile {
  std::vector<double> norms;
  ProfileMeta meta;

  std::size_t length() const noexcept { return norms.size(); }
};

enum class DecayModel { Exponential, Polynomial, Neither };
std::string_view to_string(DecayModel model) noexcept;

// Half-open range [begin, end) of 0-based profile indices.
struct FitWindow {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// The earliest ceil(fraction·T) timesteps, the region furthest back from the loss.
FitWindow earliest_window(std::size_t length, double fraction = 0.25);

struct DecayFit {
  DecayModel model = DecayModel::Neither;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  FitWindow window;
  std::size_t points = 0;
  std::size_t excluded_zeros = 0;
  // Set when the log-norms have zero variance and r² is undefined (reported 0).
  bool degenerate = false;
};

// Least squares of log(norm) vs T - t. Zero norms are skipped and counted.
// Throws InsufficientDataError with fewer than 3 positive entries.
DecayFit fit_exponential(const GradProfile& profile, FitWindow window);
// Least squares of log(norm) vs log(T - t + 1).
DecayFit fit_polynomial(const GradProfile& profile, FitWindow window);

inline constexpr double kClassificationThreshold = 0.9;

struct DecayReport {
  DecayFit exponential;
  DecayFit polynomial;
  DecayModel model = DecayModel::Neither;
};

// Higher r² wins if it reaches the threshold, otherwise Neither.
DecayModel classify(const DecayFit& exponential, const DecayFit& polynomial,
                    double threshold = kClassificationThreshold);
DecayReport analyze_decay(const GradProfile& profile, FitWindow window);
DecayModel classify_decay(const GradProfile& profile, FitWindow window);
DecayModel classify_decay(const GradProfile& profile);

// Elementwise mean of equally long profiles; meta is taken from the first.
GradProfile mean_profile(const std::vector<GradProfile>& profiles);

// CSV with header `t,norm`; meta goes to `<path>.meta` as key=value lines.
void write_profile_csv(const std::filesystem::path& path, const GradProfile& profile);
// Throws FileError if missing, FormatError on schema violations.
GradProfile read_profile_csv(const std::filesystem::path& path);

}  // namespace polyrnn
