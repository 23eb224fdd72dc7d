#pragma once

#include "flowcal/flow.hpp"

namespace flowcal::detail {

// Activations kept from a batched net evaluation for the backward pass.
// dense: rows are samples, columns are hidden units.
// conv1d: rows are samples, columns are vec(H) with index position * width + channel.
struct NetCache {
  Matrix h1;
  Matrix t2;  // tanh of the second pre-activation
  Matrix h2;
};

struct NetGradient {
  Matrix w1, w2, w3;
  Vector b1, b2, b3;

  explicit NetGradient(const CouplingNet& net);
};

Matrix net_forward(const CouplingNet& net, const Matrix& x, NetCache* cache);

// Given dL/dg for every row, accumulates parameter gradients into `grad` and
// returns dL/dx.
Matrix net_backward(const CouplingNet& net, const Matrix& x, const NetCache& cache,
                    const Matrix& dg, NetGradient& grad);

// Applies the permutation to every row of `x`.
Matrix permute_rows(const Matrix& x, const Permutation& p, Direction dir);

}  // namespace flowcal::detail
