#include "polyrnn/data.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

#include "polyrnn/errors.hpp"
#include "polyrnn/rng.hpp"

namespace polyrnn {

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::Train:
      return "train";
    case Split::Valid:
      return "valid";
    case Split::Test:
      return "test";
  }
  return "train";
}

std::span<const double> SequenceDataset::flat(std::size_t i) const {
  if (i >= size()) throw DimensionError("sequence index out of range");
  return std::span<const double>(values_).subspan(i * T_ * d_, T_ * d_);
}

std::vector<Vec> SequenceDataset::inputs(std::size_t i) const {
  const auto f = flat(i);
  std::vector<Vec> xs;
  xs.reserve(T_);
  for (std::size_t t = 0; t < T_; ++t)
    xs.emplace_back(std::vector<double>(f.begin() + t * d_, f.begin() + (t + 1) * d_));
  return xs;
}

void SequenceDataset::add(std::span<const double> flat_inputs, std::size_t label,
                          std::size_t source) {
  if (flat_inputs.size() != T_ * d_)
    throw DimensionError("sequence has " + std::to_string(flat_inputs.size()) +
                         " values, expected T·d = " + std::to_string(T_ * d_));
  if (label >= classes_) throw DomainError("label " + std::to_string(label) + " out of range");
  values_.insert(values_.end(), flat_inputs.begin(), flat_inputs.end());
  labels_.push_back(label);
  sources_.push_back(source);
}

void SequenceDataset::truncate(std::size_t count) {
  if (count >= size()) return;
  values_.resize(count * T_ * d_);
  labels_.resize(count);
  sources_.resize(count);
}

// ---- IDX ----------------------------------------------------------------

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::string& what) {
  if (bytes.size() < offset + 4) throw FormatError("truncated IDX header: missing " + what, bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void check_payload(const std::vector<std::uint8_t>& bytes, std::size_t header, std::size_t payload) {
  if (bytes.size() < header + payload)
    throw FormatError("truncated IDX payload: expected " + std::to_string(header + payload) +
                          " bytes, file has " + std::to_string(bytes.size()),
                      bytes.size());
  if (bytes.size() > header + payload)
    throw FormatError("trailing bytes after IDX payload", header + payload);
}

}  // namespace

std::span<const double> IdxImages::image(std::size_t i) const {
  const std::size_t px = rows * cols;
  return std::span<const double>(pixels).subspan(i * px, px);
}

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  const std::uint32_t magic = read_be32(bytes, 0, "magic number");
  if (magic != kIdxImageMagic) throw FormatError("bad IDX image magic number", 0);
  IdxImages out;
  out.count = read_be32(bytes, 4, "item count");
  out.rows = read_be32(bytes, 8, "row count");
  out.cols = read_be32(bytes, 12, "column count");
  const std::size_t payload = out.count * out.rows * out.cols;
  check_payload(bytes, 16, payload);
  out.pixels.resize(payload);
  for (std::size_t i = 0; i < payload; ++i) out.pixels[i] = bytes[16 + i] / 255.0;
  return out;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  const std::uint32_t magic = read_be32(bytes, 0, "magic number");
  if (magic != kIdxLabelMagic) throw FormatError("bad IDX label magic number", 0);
  const std::size_t count = read_be32(bytes, 4, "item count");
  check_payload(bytes, 8, count);
  std::vector<std::uint8_t> labels(bytes.begin() + 8, bytes.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 9)
      throw FormatError("label " + std::to_string(labels[i]) + " outside 0..9", 8 + i);
  }
  return labels;
}

RawImages load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  RawImages raw{read_idx_images(images), read_idx_labels(labels)};
  if (raw.images.count != raw.labels.size())
    throw FormatError("image count " + std::to_string(raw.images.count) +
                          " differs from label count " + std::to_string(raw.labels.size()),
                      4);
  return raw;
}

void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels) {
  if (rows * cols == 0 || pixels.size() % (rows * cols) != 0)
    throw DimensionError("pixel buffer is not a whole number of images");
  std::vector<std::uint8_t> out;
  out.reserve(16 + pixels.size());
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(pixels.size() / (rows * cols)));
  put_be32(out, static_cast<std::uint32_t>(rows));
  put_be32(out, static_cast<std::uint32_t>(cols));
  out.insert(out.end(), pixels.begin(), pixels.end());
  write_bytes(path, out);
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  write_bytes(path, out);
}

PermutationSpec make_permutation(std::size_t length, std::uint64_t seed) {
  PermutationSpec perm{seed, std::vector<std::size_t>(length)};
  std::iota(perm.order.begin(), perm.order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(perm.order));
  return perm;
}

std::vector<std::size_t> inverse_permutation(const PermutationSpec& perm) {
  std::vector<std::size_t> inv(perm.order.size());
  for (std::size_t k = 0; k < perm.order.size(); ++k) inv[perm.order[k]] = k;
  return inv;
}

std::vector<Vec> sequentialize(std::span<const double> image, std::size_t rows, std::size_t cols,
                               const PermutationSpec* perm) {
  if (image.size() != rows * cols)
    throw DimensionError("image has " + std::to_string(image.size()) + " pixels, expected " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  if (perm && perm->order.size() != image.size())
    throw DimensionError("permutation length does not match the image");
  std::vector<Vec> seq;
  seq.reserve(image.size());
  for (std::size_t k = 0; k < image.size(); ++k)
    seq.push_back(Vec{image[perm ? perm->order[k] : k]});
  return seq;
}

namespace {

std::vector<double> downscale_image(std::span<const double> image, std::size_t rows,
                                    std::size_t cols, std::size_t factor) {
  if (factor == 1) return {image.begin(), image.end()};
  if (rows % factor || cols % factor) throw ConfigError("downscale factor must divide the image size");
  const std::size_t r2 = rows / factor, c2 = cols / factor;
  std::vector<double> out(r2 * c2, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[(r / factor) * c2 + c / factor] += image[r * cols + c];
  for (double& v : out) v /= static_cast<double>(factor * factor);
  return out;
}

void append_images(SequenceDataset& ds, const RawImages& raw, std::span<const std::size_t> indices,
                   const MnistOptions& options, const PermutationSpec* perm) {
  const std::size_t rows = raw.images.rows / options.downscale;
  const std::size_t cols = raw.images.cols / options.downscale;
  std::vector<double> flat;
  for (std::size_t idx : indices) {
    const auto small = downscale_image(raw.images.image(idx), raw.images.rows, raw.images.cols,
                                       options.downscale);
    const auto seq = sequentialize(small, rows, cols, perm);
    flat.clear();
    for (const auto& v : seq) flat.push_back(v[0]);
    ds.add(flat, raw.labels[idx], idx);
  }
}

std::span<const std::size_t> limited(const std::vector<std::size_t>& v, std::size_t limit) {
  return std::span<const std::size_t>(v).first(limit ? std::min(limit, v.size()) : v.size());
}

}  // namespace

TaskSplits make_mnist_splits(const RawImages& train_file, const RawImages& test_file,
                             const MnistOptions& options) {
  if (options.downscale != 1 && options.downscale != 2) throw ConfigError("downscale must be 1 or 2");
  if (train_file.images.rows != test_file.images.rows ||
      train_file.images.cols != test_file.images.cols)
    throw FormatError("train and test images differ in shape", 8);
  const std::size_t n = train_file.images.count;
  if (options.valid_count > n) throw ConfigError("validation split larger than the training file");
  const std::size_t T =
      (train_file.images.rows / options.downscale) * (train_file.images.cols / options.downscale);

  PermutationSpec perm;
  if (options.permuted) perm = make_permutation(T, options.permutation_seed);
  const PermutationSpec* p = options.permuted ? &perm : nullptr;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(options.split_seed);
  rng.shuffle(std::span<std::size_t>(order));
  const std::vector<std::size_t> train_idx(order.begin(), order.end() - options.valid_count);
  const std::vector<std::size_t> valid_idx(order.end() - options.valid_count, order.end());
  std::vector<std::size_t> test_idx(test_file.images.count);
  std::iota(test_idx.begin(), test_idx.end(), std::size_t{0});

  TaskSplits out{SequenceDataset(T, 1, 10, Split::Train), SequenceDataset(T, 1, 10, Split::Valid),
                 SequenceDataset(T, 1, 10, Split::Test)};
  append_images(out.train, train_file, limited(train_idx, options.train_limit), options, p);
  append_images(out.valid, train_file, limited(valid_idx, options.valid_limit), options, p);
  append_images(out.test, test_file, limited(test_idx, options.test_limit), options, p);
  return out;
}

TaskSplits load_mnist(const std::filesystem::path& dir, const MnistOptions& options) {
  const RawImages train = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  const RawImages test = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
  return make_mnist_splits(train, test, options);
}

// ---- HAR ----------------------------------------------------------------

namespace {

constexpr std::array<std::string_view, kHarChannels> kHarChannelNames = {
    "body_acc_x",  "body_acc_y",  "body_acc_z",  "body_gyro_x", "body_gyro_y",
    "body_gyro_z", "total_acc_x", "total_acc_y", "total_acc_z"};

// rows of kHarWindow values
std::vector<double> read_har_channel(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<double> values;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::size_t in_row = 0;
    std::size_t pos = 0;
    while (pos < line.size()) {
      const auto start = line.find_first_not_of(" \t", pos);
      if (start == std::string_view::npos) break;
      auto end = line.find_first_of(" \t", start);
      if (end == std::string_view::npos) end = line.size();
      const auto v = parse_double(line.substr(start, end - start));
      if (!v) throw FormatError("non-numeric value in " + path.string(), line_no);
      values.push_back(*v);
      ++in_row;
      pos = end;
    }
    if (in_row != kHarWindow)
      throw FormatError(path.string() + ": window has " + std::to_string(in_row) +
                            " values, expected " + std::to_string(kHarWindow),
                        line_no);
  }
  return values;
}

std::vector<int> read_har_labels(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<int> labels;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto v = parse_integer(line);
    if (!v || *v < 1 || *v > 6) throw FormatError("activity label must be 1..6 in " + path.string(), line_no);
    labels.push_back(static_cast<int>(*v));
  }
  return labels;
}

struct HarSplitData {
  std::vector<std::vector<double>> channels;  // [channel][window·128 + t]
  std::vector<int> activities;
};

HarSplitData read_har_split(const std::filesystem::path& dir, std::string_view split) {
  const auto signals = dir / std::string(split) / "Inertial Signals";
  if (!std::filesystem::is_directory(signals)) throw FileError("missing directory " + signals.string());
  std::size_t present = 0;
  const std::string suffix = "_" + std::string(split) + ".txt";
  for (const auto& entry : std::filesystem::directory_iterator(signals)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) ++present;
  }
  if (present != kHarChannels)
    throw FormatError(signals.string() + " has " + std::to_string(present) + " channel files, expected " +
                          std::to_string(kHarChannels),
                      0);
  HarSplitData data;
  data.activities = read_har_labels(dir / std::string(split) / ("y_" + std::string(split) + ".txt"));
  for (auto stem : kHarChannelNames) {
    auto ch = read_har_channel(signals / (std::string(stem) + suffix));
    if (ch.size() != data.activities.size() * kHarWindow)
      throw FormatError(std::string(stem) + suffix + " has " + std::to_string(ch.size() / kHarWindow) +
                            " windows but there are " + std::to_string(data.activities.size()) + " labels",
                        0);
    data.channels.push_back(std::move(ch));
  }
  return data;
}

void append_har(SequenceDataset& ds, const HarSplitData& data, std::span<const std::size_t> indices,
                const std::array<double, kHarChannels>& mean, const std::array<double, kHarChannels>& sd) {
  std::vector<double> flat(kHarWindow * kHarChannels);
  for (std::size_t w : indices) {
    for (std::size_t t = 0; t < kHarWindow; ++t)
      for (std::size_t c = 0; c < kHarChannels; ++c)
        flat[t * kHarChannels + c] = (data.channels[c][w * kHarWindow + t] - mean[c]) / sd[c];
    ds.add(flat, har_binary_label(data.activities[w]), w);
  }
}

}  // namespace

std::span<const std::string_view> har_channel_names() noexcept { return kHarChannelNames; }

std::size_t har_binary_label(int activity) {
  if (activity >= 1 && activity <= 3) return 0;
  if (activity >= 4 && activity <= 6) return 1;
  throw DomainError("activity id must be 1..6");
}

TaskSplits load_har(const std::filesystem::path& dir, const HarOptions& options) {
  const HarSplitData train = read_har_split(dir, "train");
  const HarSplitData test = read_har_split(dir, "test");
  const std::size_t n = train.activities.size();
  if (options.valid_count > n) throw ConfigError("validation split larger than the training set");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(options.split_seed);
  rng.shuffle(std::span<std::size_t>(order));
  const std::vector<std::size_t> train_idx(order.begin(), order.end() - options.valid_count);
  const std::vector<std::size_t> valid_idx(order.end() - options.valid_count, order.end());
  std::vector<std::size_t> test_idx(test.activities.size());
  std::iota(test_idx.begin(), test_idx.end(), std::size_t{0});

  // z-score statistics over every timestep of every training-split window
  std::array<double, kHarChannels> mean{}, sd{};
  for (std::size_t c = 0; c < kHarChannels; ++c) {
    double sum = 0.0;
    for (std::size_t w : train_idx)
      for (std::size_t t = 0; t < kHarWindow; ++t) sum += train.channels[c][w * kHarWindow + t];
    const double count = static_cast<double>(train_idx.size() * kHarWindow);
    mean[c] = sum / count;
    double ss = 0.0;
    for (std::size_t w : train_idx)
      for (std::size_t t = 0; t < kHarWindow; ++t) {
        const double dv = train.channels[c][w * kHarWindow + t] - mean[c];
        ss += dv * dv;
      }
    sd[c] = std::sqrt(ss / count);
    if (!(sd[c] > 0.0)) sd[c] = 1.0;
  }

  TaskSplits out{SequenceDataset(kHarWindow, kHarChannels, 2, Split::Train),
                 SequenceDataset(kHarWindow, kHarChannels, 2, Split::Valid),
                 SequenceDataset(kHarWindow, kHarChannels, 2, Split::Test)};
  append_har(out.train, train, limited(train_idx, options.train_limit), mean, sd);
  append_har(out.valid, train, limited(valid_idx, options.valid_limit), mean, sd);
  append_har(out.test, test, limited(test_idx, options.test_limit), mean, sd);
  return out;
}

// ---- synthetic ----------------------------------------------------------

SyntheticTask parse_synthetic_task(std::string_view name) {
  if (name == "copy") return SyntheticTask::Copy;
  if (name == "adding") return SyntheticTask::Adding;
  if (name == "noise") return SyntheticTask::Noise;
  throw ConfigError("unknown synthetic task '" + std::string(name) + "'");
}

namespace {

void generate(SequenceDataset& ds, SyntheticTask kind, std::size_t T, Rng& rng, std::size_t source) {
  std::vector<double> flat(T * ds.input_dim(), 0.0);
  if (kind == SyntheticTask::Adding) {
    const std::size_t half = T / 2;
    const std::size_t a = static_cast<std::size_t>(rng.below(half));
    const std::size_t b = half + static_cast<std::size_t>(rng.below(T - half));
    for (std::size_t t = 0; t < T; ++t) flat[t * 2] = rng.uniform();
    flat[a * 2 + 1] = 1.0;
    flat[b * 2 + 1] = 1.0;
    const std::size_t label = flat[a * 2] + flat[b * 2] > 1.0 ? 1 : 0;
    ds.add(flat, label, source);
  } else if (kind == SyntheticTask::Noise) {
    for (double& v : flat) v = rng.uniform();
    ds.add(flat, static_cast<std::size_t>(rng.below(kNoiseClasses)), source);
  } else {
    const std::size_t d = kCopySymbols + 1;
    const std::size_t symbol = static_cast<std::size_t>(rng.below(kCopySymbols));
    flat[symbol] = 1.0;
    flat[(T - 1) * d + kCopySymbols] = 1.0;
    ds.add(flat, symbol, source);
  }
}

SequenceDataset empty_synthetic(SyntheticTask kind, std::size_t T, Split split) {
  if (T < 10) throw DomainError("synthetic tasks need T >= 10");
  switch (kind) {
    case SyntheticTask::Adding:
      return SequenceDataset(T, 2, 2, split);
    case SyntheticTask::Noise:
      return SequenceDataset(T, 1, kNoiseClasses, split);
    case SyntheticTask::Copy:
      break;
  }
  return SequenceDataset(T, kCopySymbols + 1, kCopySymbols, split);
}

}  // namespace

SequenceDataset synthetic_longrange(SyntheticTask kind, std::size_t T, std::size_t count,
                                    std::uint64_t seed, Split split) {
  SequenceDataset ds = empty_synthetic(kind, T, split);
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) generate(ds, kind, T, rng, i);
  return ds;
}

TaskSplits synthetic_splits(SyntheticTask kind, std::size_t T, std::size_t train,
                            std::size_t valid, std::size_t test, std::uint64_t seed) {
  TaskSplits out{empty_synthetic(kind, T, Split::Train), empty_synthetic(kind, T, Split::Valid),
                 empty_synthetic(kind, T, Split::Test)};
  Rng rng(seed);
  std::size_t source = 0;
  for (std::size_t i = 0; i < train; ++i) generate(out.train, kind, T, rng, source++);
  for (std::size_t i = 0; i < valid; ++i) generate(out.valid, kind, T, rng, source++);
  for (std::size_t i = 0; i < test; ++i) generate(out.test, kind, T, rng, source++);
  return out;
}

KeyValues manifest(const SequenceDataset& ds, std::string_view task) {
  return {{"task", std::string(task)},
          {"split", std::string(to_string(ds.split()))},
          {"count", std::to_string(ds.size())},
          {"T", std::to_string(ds.length())},
          {"d", std::to_string(ds.input_dim())},
          {"classes", std::to_string(ds.classes())}};
}

}  // namespace polyrnn
