#include "polyrnn/cells.hpp"

#include <cmath>
#include <string>
#include <type_traits>

#include "polyrnn/errors.hpp"

namespace polyrnn {

std::string_view to_string(CellKind kind) noexcept {
  switch (kind) {
    case CellKind::Leaky:
      return "leaky";
    case CellKind::Gated:
      return "gated";
    case CellKind::Gru:
      return "gru";
  }
  return "unknown";
}

CellKind parse_cell_kind(std::string_view name) {
  if (name == "leaky") return CellKind::Leaky;
  if (name == "gated") return CellKind::Gated;
  if (name == "gru") return CellKind::Gru;
  throw ConfigError("unknown cell kind '" + std::string(name) + "' (expected leaky, gated or gru)");
}

namespace {

template <typename Ref, typename Params>
std::vector<Ref> collect(Params& p) {
  std::vector<Ref> out;
  std::remove_cvref_t<Params>::visit(p, [&](const char* name, auto& field) {
    using Field = std::remove_cvref_t<decltype(field)>;
    if constexpr (std::is_same_v<Field, double>) {
      out.push_back({name, {&field, 1}, 1, 1});
    } else if constexpr (std::is_same_v<Field, Mat>) {
      out.push_back({name, field.values(), field.rows(), field.cols()});
    } else {
      out.push_back({name, field.values(), field.dim(), 1});
    }
  });
  return out;
}

void check_gate(const Mat& u, const Mat& w, const Vec& b, std::size_t n, std::size_t d,
                const char* name) {
  if (u.rows() != n || u.cols() != n || w.rows() != n || w.cols() != d || b.dim() != n) {
    throw DimensionError(std::string("parameter block '") + name + "' has non-conforming shapes");
  }
}

double abs_power(double h, double r) noexcept {
  if (r == 0.0) return 1.0;
  const double a = std::fabs(h);
  if (a == 0.0) return 0.0;
  if (r == 1.0) return a;
  if (r == 2.0) return a * a;
  return std::exp(r * std::log(a));
}

// s ⊙ (1 - s) for sigmoid outputs, 1 - c² for tanh outputs.
Vec sigmoid_slope(const Vec& s) {
  Vec out(s.dim());
  for (std::size_t i = 0; i < s.dim(); ++i) out[i] = s[i] * (1.0 - s[i]);
  return out;
}

Vec tanh_slope(const Vec& c) {
  Vec out(c.dim());
  for (std::size_t i = 0; i < c.dim(); ++i) out[i] = 1.0 - c[i] * c[i];
  return out;
}

void require_cache(const StepCache& cache, std::size_t n, std::size_t d, bool gates) {
  const bool ok = cache.h_prev.dim() == n && cache.x.dim() == d && cache.cand.dim() == n &&
                  (!gates || (cache.gate_a.dim() == n && cache.gate_b.dim() == n));
  if (!ok) throw IntegrityError("step cache does not match parameter shapes");
}

StepResult gated_impl(const GatedParams& p, const Vec& h_prev, const Vec& x, bool poly) {
  StepResult out;
  out.cache.h_prev = h_prev;
  out.cache.x = x;
  out.cache.gate_a = sigmoid_vec(affine(p.U_f, h_prev, p.W_f, x, p.b_f));
  out.cache.gate_b = sigmoid_vec(affine(p.U_i, h_prev, p.W_i, x, p.b_i));
  out.cache.cand = tanh_vec(affine(p.U, h_prev, p.W, x, p.b));
  const Vec& f = out.cache.gate_a;
  const Vec& in = out.cache.gate_b;
  const Vec& c = out.cache.cand;
  out.h = Vec(h_prev.dim());
  if (poly) {
    const Vec g = decay_term(h_prev, p.rate_r);
    for (std::size_t k = 0; k < h_prev.dim(); ++k)
      out.h[k] = (h_prev[k] - (1.0 - f[k]) * g[k]) + in[k] * c[k];
  } else {
    for (std::size_t k = 0; k < h_prev.dim(); ++k) out.h[k] = f[k] * h_prev[k] + in[k] * c[k];
  }
  return out;
}

StepGradients backward(const LeakyParams& p, const StepCache& cache, const Vec& dh,
                       LeakyParams& g) {
  const std::size_t n = p.b.dim();
  require_cache(cache, n, p.W.cols(), false);
  const Vec decay = decay_term(cache.h_prev, p.rate_r);
  const Vec slope = decay_slope(cache.h_prev, p.rate_r);
  Vec da(n);
  StepGradients out{Vec(n), Vec()};
  double dalpha = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double c = cache.cand[k];
    dalpha += dh[k] * (c - decay[k]);
    da[k] = p.alpha * dh[k] * (1.0 - c * c);
    out.dh_prev[k] = dh[k] * (1.0 - p.alpha * slope[k]);
  }
  g.alpha += dalpha;
  add_outer(g.U, da, cache.h_prev);
  add_outer(g.W, da, cache.x);
  g.b += da;
  out.dh_prev += matvec_transposed(p.U, da);
  out.dx = matvec_transposed(p.W, da);
  return out;
}

StepGradients backward(const GatedParams& p, const StepCache& cache, const Vec& dh,
                       GatedParams& g) {
  const std::size_t n = p.b.dim();
  require_cache(cache, n, p.W.cols(), true);
  const bool poly = p.rate_r > 0.0;
  const Vec& f = cache.gate_a;
  const Vec& in = cache.gate_b;
  const Vec& c = cache.cand;
  const Vec decay = poly ? decay_term(cache.h_prev, p.rate_r) : cache.h_prev;
  const Vec slope = poly ? decay_slope(cache.h_prev, p.rate_r) : Vec();
  Vec daf(n), dai(n), dac(n);
  StepGradients out{Vec(n), Vec()};
  for (std::size_t k = 0; k < n; ++k) {
    daf[k] = dh[k] * decay[k] * f[k] * (1.0 - f[k]);
    dai[k] = dh[k] * c[k] * in[k] * (1.0 - in[k]);
    dac[k] = dh[k] * in[k] * (1.0 - c[k] * c[k]);
    out.dh_prev[k] = dh[k] * (poly ? 1.0 - (1.0 - f[k]) * slope[k] : f[k]);
  }
  add_outer(g.U_f, daf, cache.h_prev);
  add_outer(g.W_f, daf, cache.x);
  g.b_f += daf;
  add_outer(g.U_i, dai, cache.h_prev);
  add_outer(g.W_i, dai, cache.x);
  g.b_i += dai;
  add_outer(g.U, dac, cache.h_prev);
  add_outer(g.W, dac, cache.x);
  g.b += dac;
  out.dh_prev += matvec_transposed(p.U_f, daf);
  out.dh_prev += matvec_transposed(p.U_i, dai);
  out.dh_prev += matvec_transposed(p.U, dac);
  out.dx = matvec_transposed(p.W_f, daf);
  out.dx += matvec_transposed(p.W_i, dai);
  out.dx += matvec_transposed(p.W, dac);
  return out;
}

StepGradients backward(const GruParams& p, const StepCache& cache, const Vec& dh,
                       GruParams& g) {
  const std::size_t n = p.b.dim();
  require_cache(cache, n, p.W.cols(), true);
  const bool poly = p.rate_r > 0.0;
  const Vec& z = cache.gate_a;
  const Vec& rg = cache.gate_b;
  const Vec& c = cache.cand;
  const Vec& hp = cache.h_prev;
  const Vec decay = poly ? decay_term(hp, p.rate_r) : hp;
  const Vec slope = poly ? decay_slope(hp, p.rate_r) : Vec();
  Vec daz(n), dac(n), reset_in(n);
  StepGradients out{Vec(n), Vec()};
  for (std::size_t k = 0; k < n; ++k) {
    daz[k] = dh[k] * (c[k] - decay[k]) * z[k] * (1.0 - z[k]);
    dac[k] = dh[k] * z[k] * (1.0 - c[k] * c[k]);
    reset_in[k] = rg[k] * hp[k];
    out.dh_prev[k] = dh[k] * (poly ? 1.0 - z[k] * slope[k] : 1.0 - z[k]);
  }
  const Vec ds = matvec_transposed(p.U, dac);
  Vec dar(n);
  for (std::size_t k = 0; k < n; ++k) {
    dar[k] = ds[k] * hp[k] * rg[k] * (1.0 - rg[k]);
    out.dh_prev[k] += ds[k] * rg[k];
  }
  add_outer(g.U_z, daz, hp);
  add_outer(g.W_z, daz, cache.x);
  g.b_z += daz;
  add_outer(g.U_r, dar, hp);
  add_outer(g.W_r, dar, cache.x);
  g.b_r += dar;
  add_outer(g.U, dac, reset_in);
  add_outer(g.W, dac, cache.x);
  g.b += dac;
  out.dh_prev += matvec_transposed(p.U_z, daz);
  out.dh_prev += matvec_transposed(p.U_r, dar);
  out.dx = matvec_transposed(p.W_z, daz);
  out.dx += matvec_transposed(p.W_r, dar);
  out.dx += matvec_transposed(p.W, dac);
  return out;
}

Mat jacobian(const LeakyParams& p, const Vec& h_prev, const Vec& x) {
  const StepResult s = leaky_step(p, h_prev, x);
  Mat j = scale_rows(p.alpha * tanh_slope(s.cache.cand), p.U);
  const Vec slope = decay_slope(h_prev, p.rate_r);
  for (std::size_t k = 0; k < h_prev.dim(); ++k) j(k, k) += 1.0 - p.alpha * slope[k];
  return j;
}

Mat jacobian(const GatedParams& p, const Vec& h_prev, const Vec& x) {
  const StepResult s = gated_step(p, h_prev, x);
  const bool poly = p.rate_r > 0.0;
  const Vec& f = s.cache.gate_a;
  const Vec& in = s.cache.gate_b;
  const Vec& c = s.cache.cand;
  const Vec decay = poly ? decay_term(h_prev, p.rate_r) : h_prev;
  Mat j = scale_rows(hadamard(decay, sigmoid_slope(f)), p.U_f);
  j += scale_rows(hadamard(c, sigmoid_slope(in)), p.U_i);
  j += scale_rows(hadamard(in, tanh_slope(c)), p.U);
  const Vec slope = poly ? decay_slope(h_prev, p.rate_r) : Vec();
  for (std::size_t k = 0; k < h_prev.dim(); ++k)
    j(k, k) += poly ? 1.0 - (1.0 - f[k]) * slope[k] : f[k];
  return j;
}

Mat jacobian(const GruParams& p, const Vec& h_prev, const Vec& x) {
  const StepResult s = gru_step(p, h_prev, x);
  const bool poly = p.rate_r > 0.0;
  const Vec& z = s.cache.gate_a;
  const Vec& rg = s.cache.gate_b;
  const Vec& c = s.cache.cand;
  const Vec decay = poly ? decay_term(h_prev, p.rate_r) : h_prev;
  // Time-scale part.
  const Vec slope = poly ? decay_slope(h_prev, p.rate_r) : Vec();
  Mat j(h_prev.dim(), h_prev.dim());
  for (std::size_t k = 0; k < h_prev.dim(); ++k)
    j(k, k) = poly ? 1.0 - z[k] * slope[k] : 1.0 - z[k];
  // diag(h̃ - decay) dz/dh
  j += scale_rows(hadamard(c - decay, sigmoid_slope(z)), p.U_z);
  // diag(z) dh̃/dh, with dh̃/dh = diag(1 - h̃²) U (diag(r) + diag(h ⊙ r(1-r)) U_r)
  Mat reset_jac = scale_rows(hadamard(h_prev, sigmoid_slope(rg)), p.U_r);
  for (std::size_t k = 0; k < h_prev.dim(); ++k) reset_jac(k, k) += rg[k];
  j += scale_rows(hadamard(z, tanh_slope(c)), matmul(p.U, reset_jac));
  return j;
}

}  // namespace

std::vector<TensorRef> tensors(CellParams& params) {
  return std::visit([](auto& p) { return collect<TensorRef>(p); }, params);
}

std::vector<ConstTensorRef> tensors(const CellParams& params) {
  return std::visit([](const auto& p) { return collect<ConstTensorRef>(p); }, params);
}

CellKind kind_of(const CellParams& params) noexcept {
  switch (params.index()) {
    case 0:
      return CellKind::Leaky;
    case 1:
      return CellKind::Gated;
    default:
      return CellKind::Gru;
  }
}

double rate_of(const CellParams& params) noexcept {
  return std::visit([](const auto& p) { return p.rate_r; }, params);
}

std::size_t hidden_dim(const CellParams& params) noexcept {
  return std::visit([](const auto& p) { return p.b.dim(); }, params);
}

std::size_t input_dim(const CellParams& params) noexcept {
  return std::visit([](const auto& p) { return p.W.cols(); }, params);
}

CellParams zeros_like(const CellParams& params) {
  CellParams out = params;
  for (auto& t : tensors(out))
    for (double& v : t.values) v = 0.0;
  return out;
}

CellParams make_params(CellKind kind, std::size_t n, std::size_t d, double rate_r) {
  switch (kind) {
    case CellKind::Leaky:
      return LeakyParams{0.5, Mat(n, n), Mat(n, d), Vec(n), rate_r};
    case CellKind::Gated:
      return GatedParams{Mat(n, n), Mat(n, d), Vec(n), Mat(n, n), Mat(n, d), Vec(n),
                         Mat(n, n), Mat(n, d), Vec(n), rate_r};
    case CellKind::Gru:
      return GruParams{Mat(n, n), Mat(n, d), Vec(n), Mat(n, n), Mat(n, d), Vec(n),
                       Mat(n, n), Mat(n, d), Vec(n), rate_r};
  }
  throw ConfigError("unknown cell kind");
}

void validate(const CellParams& params) {
  const std::size_t n = hidden_dim(params);
  const std::size_t d = input_dim(params);
  if (!(rate_of(params) >= 0.0) || !std::isfinite(rate_of(params)))
    throw DomainError("rate_r must be finite and >= 0");
  std::visit(
      [&](const auto& p) {
        using P = std::remove_cvref_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LeakyParams>) {
          if (!(p.alpha > 0.0 && p.alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
          check_gate(p.U, p.W, p.b, n, d, "U/W/b");
        } else if constexpr (std::is_same_v<P, GatedParams>) {
          check_gate(p.U_f, p.W_f, p.b_f, n, d, "forget gate");
          check_gate(p.U_i, p.W_i, p.b_i, n, d, "input gate");
          check_gate(p.U, p.W, p.b, n, d, "candidate");
        } else {
          check_gate(p.U_z, p.W_z, p.b_z, n, d, "update gate");
          check_gate(p.U_r, p.W_r, p.b_r, n, d, "reset gate");
          check_gate(p.U, p.W, p.b, n, d, "candidate");
        }
      },
      params);
}

Vec decay_term(const Vec& h, double r) {
  Vec out(h.dim());
  for (std::size_t k = 0; k < h.dim(); ++k) {
    if (r == 2.0) {
      out[k] = h[k] * h[k] * h[k];
    } else {
      out[k] = abs_power(h[k], r) * h[k];
    }
  }
  return out;
}

Vec decay_slope(const Vec& h, double r) {
  Vec out(h.dim());
  for (std::size_t k = 0; k < h.dim(); ++k) out[k] = (r + 1.0) * abs_power(h[k], r);
  return out;
}

StepResult leaky_step(const LeakyParams& p, const Vec& h_prev, const Vec& x) {
  StepResult out;
  out.cache.h_prev = h_prev;
  out.cache.x = x;
  out.cache.cand = tanh_vec(affine(p.U, h_prev, p.W, x, p.b));
  const Vec decay = decay_term(h_prev, p.rate_r);
  out.h = Vec(h_prev.dim());
  // h_prev + α(h̃ - h_prev) at r = 0, i.e. (1-α)h_prev + αh̃; written in this
  // order so a unit forward-Euler step of the ODE reproduces it bit for bit.
  for (std::size_t k = 0; k < h_prev.dim(); ++k)
    out.h[k] = h_prev[k] + p.alpha * (out.cache.cand[k] - decay[k]);
  return out;
}

StepResult gated_step(const GatedParams& p, const Vec& h_prev, const Vec& x) {
  return gated_impl(p, h_prev, x, p.rate_r > 0.0);
}

StepResult poly_gated_step(const GatedParams& p, const Vec& h_prev, const Vec& x) {
  return gated_impl(p, h_prev, x, true);
}

StepResult gru_step(const GruParams& p, const Vec& h_prev, const Vec& x) {
  StepResult out;
  out.cache.h_prev = h_prev;
  out.cache.x = x;
  out.cache.gate_a = sigmoid_vec(affine(p.U_z, h_prev, p.W_z, x, p.b_z));
  out.cache.gate_b = sigmoid_vec(affine(p.U_r, h_prev, p.W_r, x, p.b_r));
  out.cache.cand = tanh_vec(affine(p.U, hadamard(out.cache.gate_b, h_prev), p.W, x, p.b));
  const Vec& z = out.cache.gate_a;
  const Vec& c = out.cache.cand;
  out.h = Vec(h_prev.dim());
  if (p.rate_r > 0.0) {
    const Vec g = decay_term(h_prev, p.rate_r);
    for (std::size_t k = 0; k < h_prev.dim(); ++k)
      out.h[k] = (h_prev[k] - z[k] * g[k]) + z[k] * c[k];
  } else {
    for (std::size_t k = 0; k < h_prev.dim(); ++k)
      out.h[k] = (1.0 - z[k]) * h_prev[k] + z[k] * c[k];
  }
  return out;
}

StepResult step(const CellParams& p, const Vec& h_prev, const Vec& x) {
  return std::visit(
      [&](const auto& q) -> StepResult {
        using P = std::remove_cvref_t<decltype(q)>;
        if constexpr (std::is_same_v<P, LeakyParams>) {
          return leaky_step(q, h_prev, x);
        } else if constexpr (std::is_same_v<P, GatedParams>) {
          return gated_step(q, h_prev, x);
        } else {
          return gru_step(q, h_prev, x);
        }
      },
      p);
}

StepGradients backward_step(const CellParams& p, const StepCache& cache, const Vec& dh,
                            CellParams& grads) {
  if (p.index() != grads.index()) throw IntegrityError("gradient bundle has the wrong cell kind");
  if (dh.dim() != hidden_dim(p)) throw DimensionError("upstream gradient has wrong dimension");
  return std::visit(
      [&](const auto& q) -> StepGradients {
        using P = std::remove_cvref_t<decltype(q)>;
        return backward(q, cache, dh, std::get<P>(grads));
      },
      p);
}

Mat jacobian_step(const CellParams& p, const Vec& h_prev, const Vec& x) {
  return std::visit([&](const auto& q) { return jacobian(q, h_prev, x); }, p);
}

}  // namespace polyrnn
