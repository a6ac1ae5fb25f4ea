#include "polyrnn/head.hpp"

#include <algorithm>
#include <cmath>

#include "polyrnn/errors.hpp"

namespace polyrnn {

Vec logits(const LinearHead& head, const Vec& h) { return matvec(head.weight, h) + head.bias; }

HeadLoss cross_entropy_head(const Vec& h_T, const LinearHead& head, std::size_t target) {
  if (target >= head.classes()) throw DomainError("target class out of range");
  const Vec z = logits(head, h_T);
  const double zmax = *std::max_element(z.begin(), z.end());
  Vec p(z.dim());
  double total = 0.0;
  for (std::size_t k = 0; k < z.dim(); ++k) {
    p[k] = std::exp(z[k] - zmax);
    total += p[k];
  }
  for (double& v : p) v /= total;

  HeadLoss out;
  out.loss = -(z[target] - zmax - std::log(total));
  Vec dz = p;
  dz[target] -= 1.0;
  out.dL_dh = matvec_transposed(head.weight, dz);
  out.grads.weight = Mat(head.weight.rows(), head.weight.cols());
  add_outer(out.grads.weight, dz, h_T);
  out.grads.bias = dz;
  out.probabilities = std::move(p);
  return out;
}

}  // namespace polyrnn
