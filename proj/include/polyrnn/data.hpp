#pragma once

// Sequence-classification datasets: IDX (MNIST) images read pixel by pixel,
// optionally through a fixed permutation; 9-channel inertial windows in the
// UCI HAR layout; and seeded synthetic long-range tasks.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polyrnn/io.hpp"
#include "polyrnn/linalg.hpp"

namespace polyrnn {

enum class Split { Train, Valid, Test };
std::string_view to_string(Split split) noexcept;

// Fixed-length labelled sequences stored flat: sequence i occupies
// values[i·T·d, (i+1)·T·d) in time-major order.
class SequenceDataset {
 public:
  SequenceDataset() = default;
  SequenceDataset(std::size_t T, std::size_t d, std::size_t classes, Split split)
      : T_(T), d_(d), classes_(classes), split_(split) {}

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t length() const noexcept { return T_; }
  std::size_t input_dim() const noexcept { return d_; }
  std::size_t classes() const noexcept { return classes_; }
  Split split() const noexcept { return split_; }

  std::size_t label(std::size_t i) const { return labels_.at(i); }
  // Index of the sequence in the file or generator stream it came from.
  std::size_t source_index(std::size_t i) const { return sources_.at(i); }
  std::span<const double> flat(std::size_t i) const;
  std::vector<Vec> inputs(std::size_t i) const;

  // Throws DimensionError / DomainError when the sequence does not conform.
  void add(std::span<const double> flat_inputs, std::size_t label, std::size_t source);
  // Keeps the first `count` sequences.
  void truncate(std::size_t count);

  std::span<double> mutable_values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::size_t T_ = 0;
  std::size_t d_ = 0;
  std::size_t classes_ = 0;
  Split split_ = Split::Train;
  std::vector<double> values_;
  std::vector<std::size_t> labels_;
  std::vector<std::size_t> sources_;
};

struct TaskSplits {
  SequenceDataset train;
  SequenceDataset valid;
  SequenceDataset test;
};

// ---- IDX ----------------------------------------------------------------

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> pixels;  // scaled to [0, 1]

  std::span<const double> image(std::size_t i) const;
};

struct RawImages {
  IdxImages images;
  std::vector<std::uint8_t> labels;
};

// Throws FileError if unreadable and FormatError (byte offset) on a bad magic
// number, truncation, trailing bytes, or a label outside 0..9.
IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
// Also checks that both files hold the same number of items.
RawImages load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

// order[k] is the source pixel shown at step k.
struct PermutationSpec {
  std::uint64_t seed = 0;
  std::vector<std::size_t> order;
};

PermutationSpec make_permutation(std::size_t length, std::uint64_t seed);
std::vector<std::size_t> inverse_permutation(const PermutationSpec& perm);

// Row-major (left-to-right, top-to-bottom) pixel sequence of 1-dim inputs,
// reordered by `perm` when given. Throws DimensionError if the pixel count is
// not rows·cols or does not match the permutation.
std::vector<Vec> sequentialize(std::span<const double> image, std::size_t rows, std::size_t cols,
                               const PermutationSpec* perm = nullptr);

struct MnistOptions {
  bool permuted = false;
  std::uint64_t permutation_seed = 0;
  std::uint64_t split_seed = 0;
  std::size_t valid_count = 10000;
  // 1 keeps 28×28 (T = 784); 2 average-pools to 14×14 (T = 196).
  std::size_t downscale = 1;
  // 0 keeps everything.
  std::size_t train_limit = 0;
  std::size_t valid_limit = 0;
  std::size_t test_limit = 0;
};

// Splits the training file by a seeded shuffle: the first N - valid_count
// shuffled images train, the rest validate; the test file is the test split.
TaskSplits make_mnist_splits(const RawImages& train_file, const RawImages& test_file,
                             const MnistOptions& options);
// Reads train-images-idx3-ubyte etc. from `dir`.
TaskSplits load_mnist(const std::filesystem::path& dir, const MnistOptions& options);

// ---- HAR ----------------------------------------------------------------

inline constexpr std::size_t kHarChannels = 9;
inline constexpr std::size_t kHarWindow = 128;

// File stems in channel order; the files are `<stem>_<split>.txt`.
std::span<const std::string_view> har_channel_names() noexcept;

// Activity ids 1..6: walking, upstairs, downstairs -> 0 (dynamic);
// sitting, standing, laying -> 1 (static). Throws DomainError otherwise.
std::size_t har_binary_label(int activity);

struct HarOptions {
  std::uint64_t split_seed = 0;
  std::size_t valid_count = 1471;
  std::size_t train_limit = 0;
  std::size_t valid_limit = 0;
  std::size_t test_limit = 0;
};

// Reads `<dir>/{train,test}/Inertial Signals/*` and `y_{train,test}.txt`.
// Channels are z-scored with statistics of the training split.
TaskSplits load_har(const std::filesystem::path& dir, const HarOptions& options);

// ---- synthetic ----------------------------------------------------------

enum class SyntheticTask { Copy, Adding, Noise };

// Accepts "copy", "adding", "noise"; throws ConfigError otherwise.
SyntheticTask parse_synthetic_task(std::string_view name);

inline constexpr std::size_t kCopySymbols = 4;
inline constexpr std::size_t kNoiseClasses = 10;

// Adding: d = 2 (value ~ U[0,1], marker), one marker in each half, label is
// [marked sum > 1]. Copy: a one-hot symbol at t = 1, blanks, and a recall flag
// at t = T; the label is the symbol. Noise: d = 1, i.i.d. U[0,1] values with
// a uniformly random label out of 10, a stand-in for pixel sequences when
// only initialization-time gradients matter. Requires T >= 10 (DomainError).
// Sequences are drawn from one seeded stream; source index = position in it.
SequenceDataset synthetic_longrange(SyntheticTask kind, std::size_t T, std::size_t count,
                                    std::uint64_t seed, Split split = Split::Train);

TaskSplits synthetic_splits(SyntheticTask kind, std::size_t T, std::size_t train,
                            std::size_t valid, std::size_t test, std::uint64_t seed);

KeyValues manifest(const SequenceDataset& ds, std::string_view task);

}  // namespace polyrnn
