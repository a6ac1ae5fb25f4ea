#pragma once

#include <cstddef>

#include "polyrnn/linalg.hpp"

namespace polyrnn {

// Linear classifier applied to the final hidden state.
struct LinearHead {
  Mat weight;  // classes×n
  Vec bias;    // classes

  std::size_t classes() const noexcept { return bias.dim(); }
};

struct HeadLoss {
  double loss = 0.0;
  Vec dL_dh;
  LinearHead grads;
  Vec probabilities;
};

Vec logits(const LinearHead& head, const Vec& h);

// Softmax cross-entropy of the head output at h_T against `target`, with
// exact gradients. Throws DomainError if target >= classes.
HeadLoss cross_entropy_head(const Vec& h_T, const LinearHead& head, std::size_t target);

}  // namespace polyrnn
