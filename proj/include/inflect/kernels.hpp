#pragma once

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <string>

#include "inflect/errors.hpp"
#include "inflect/tensor.hpp"

namespace inflect {

/// Row-wise numerically stable softmax.
template <typename Derived>
RowMatrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> p(z.rows(), z.cols());
  for (Index r = 0; r < z.rows(); ++r) {
    const Scalar m = z.row(r).maxCoeff();
    Scalar total = 0;
    for (Index c = 0; c < z.cols(); ++c) {
      p(r, c) = std::exp(z(r, c) - m);
      total += p(r, c);
    }
    for (Index c = 0; c < z.cols(); ++c) p(r, c) /= total;
  }
  return p;
}

template <typename Scalar>
struct CrossEntropyResult {
  Scalar loss;                     // mean over the batch of -log p[b, label_b]
  RowMatrix<Scalar> probabilities;
  RowMatrix<Scalar> dloss_dlogits;  // per-row p - onehot(label), not divided by batch size
};

/// Softmax cross-entropy with its closed-form logit gradient p - y.
template <typename Derived>
CrossEntropyResult<typename Derived::Scalar> softmax_cross_entropy(const Eigen::MatrixBase<Derived>& logits,
                                                                   std::span<const int> labels) {
  using Scalar = typename Derived::Scalar;
  const Index batch = logits.rows();
  const Index classes = logits.cols();
  if (batch == 0) throw InvalidInput("softmax_cross_entropy: empty batch");
  if (classes < 2) throw InvalidInput("softmax_cross_entropy: need at least 2 classes");
  if (static_cast<Index>(labels.size()) != batch) {
    throw InvalidInput("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                       std::to_string(batch));
  }
  if (!logits.allFinite()) throw NumericError("softmax_cross_entropy: non-finite logits");

  CrossEntropyResult<Scalar> out{0, softmax_rows(logits), {}};
  out.dloss_dlogits = out.probabilities;
  Scalar total = 0;
  for (Index b = 0; b < batch; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= classes) throw InvalidInput("softmax_cross_entropy: label out of range");
    const Scalar m = logits.row(b).maxCoeff();
    Scalar s = 0;
    for (Index c = 0; c < classes; ++c) s += std::exp(logits(b, c) - m);
    total += std::log(s) - (logits(b, y) - m);
    out.dloss_dlogits(b, y) -= Scalar(1);
  }
  out.loss = total / static_cast<Scalar>(batch);
  return out;
}

}  // namespace inflect
