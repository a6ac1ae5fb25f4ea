#include "polyrnn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "polyrnn/io.hpp"

namespace polyrnn {

namespace {

constexpr const char* kMagic = "polyrnn-checkpoint 1";

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::string next(const char* expecting) {
    std::string line;
    if (!std::getline(in_, line))
      throw FormatError(std::string("unexpected end of checkpoint, expected ") + expecting, line_ + 1);
    ++line_;
    return std::string(trim(line));
  }

  std::vector<std::string> fields(const char* expecting) {
    const std::string line = next(expecting);
    std::vector<std::string> out;
    for (auto f : split(line, ' '))
      if (!f.empty()) out.emplace_back(f);
    return out;
  }

  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

std::size_t to_size(const std::string& s, const LineReader& r) {
  const auto v = parse_integer(s);
  if (!v || *v < 0) throw FormatError("expected a non-negative integer, got '" + s + "'", r.line());
  return static_cast<std::size_t>(*v);
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const Model& m = ckpt.model;
  out << kMagic << '\n';
  out << "cell " << to_string(kind_of(m.cell)) << '\n';
  out << "rate " << format_double(rate_of(m.cell)) << '\n';
  out << "dims " << hidden_dim(m.cell) << ' ' << input_dim(m.cell) << ' ' << m.head.bias.dim() << '\n';
  for (const auto& [k, v] : ckpt.meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
      throw FormatError("meta entry '" + k + "' cannot be stored on one line", 0);
    out << "meta " << k << ' ' << v << '\n';
  }
  for (const auto& t : tensors(m)) {
    out << "tensor " << t.name << ' ' << t.rows << ' ' << t.cols << '\n';
    for (std::size_t r = 0; r < t.rows; ++r) {
      for (std::size_t c = 0; c < t.cols; ++c) {
        if (c) out << ' ';
        out << format_double(t.values[r * t.cols + c]);
      }
      out << '\n';
    }
  }
  out << "end\n";
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream buf;
  write_checkpoint(buf, ckpt);
  write_text_file(path, buf.str());
}

Checkpoint read_checkpoint(std::istream& in) {
  LineReader r(in);
  if (r.next("header") != kMagic) throw FormatError("not a polyrnn checkpoint", 1);

  auto cell = r.fields("cell");
  if (cell.size() != 2 || cell[0] != "cell") throw FormatError("expected 'cell <kind>'", r.line());
  CellKind kind;
  try {
    kind = parse_cell_kind(cell[1]);
  } catch (const ConfigError& e) {
    throw FormatError(e.what(), r.line());
  }

  auto rate = r.fields("rate");
  std::optional<double> rate_r;
  if (rate.size() == 2 && rate[0] == "rate") rate_r = parse_double(rate[1]);
  if (!rate_r || !(*rate_r >= 0.0)) throw FormatError("expected 'rate <r>' with r >= 0", r.line());

  auto dims = r.fields("dims");
  if (dims.size() != 4 || dims[0] != "dims") throw FormatError("expected 'dims <n> <d> <classes>'", r.line());
  const std::size_t n = to_size(dims[1], r), d = to_size(dims[2], r), classes = to_size(dims[3], r);
  if (n == 0 || d == 0 || classes == 0) throw FormatError("dimensions must be positive", r.line());

  Checkpoint ckpt{{make_params(kind, n, d, *rate_r), {Mat(classes, n), Vec(classes)}}, {}};
  auto slots = tensors(ckpt.model);
  std::size_t next_slot = 0;

  for (;;) {
    auto f = r.fields("tensor, meta or end");
    if (f.size() == 1 && f[0] == "end") break;
    if (!f.empty() && f[0] == "meta") {
      if (f.size() < 2) throw FormatError("meta line without a key", r.line());
      std::string value;
      for (std::size_t i = 2; i < f.size(); ++i) value += (i > 2 ? " " : "") + f[i];
      ckpt.meta[f[1]] = value;
      continue;
    }
    if (f.size() != 4 || f[0] != "tensor") throw FormatError("expected 'tensor <name> <rows> <cols>'", r.line());
    if (next_slot >= slots.size()) throw FormatError("unexpected tensor '" + f[1] + "'", r.line());
    auto& slot = slots[next_slot++];
    if (f[1] != slot.name) throw FormatError("expected tensor '" + slot.name + "', got '" + f[1] + "'", r.line());
    if (to_size(f[2], r) != slot.rows || to_size(f[3], r) != slot.cols)
      throw FormatError("tensor '" + slot.name + "' has the wrong shape", r.line());
    for (std::size_t row = 0; row < slot.rows; ++row) {
      auto vals = r.fields("tensor values");
      if (vals.size() != slot.cols) throw FormatError("wrong number of values in row", r.line());
      for (std::size_t c = 0; c < slot.cols; ++c) {
        const auto v = parse_double(vals[c]);
        if (!v) throw FormatError("bad number '" + vals[c] + "'", r.line());
        slot.values[row * slot.cols + c] = *v;
      }
    }
  }
  if (next_slot != slots.size())
    throw FormatError("missing tensor '" + slots[next_slot].name + "'", r.line());
  try {
    validate(ckpt.model.cell);
  } catch (const std::exception& e) {
    throw FormatError(std::string("invalid parameters: ") + e.what(), r.line());
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  return read_checkpoint(in);
}

}  // namespace polyrnn
