#ifndef OCT4D_LOSS_HPP
#define OCT4D_LOSS_HPP

#include "oct4d/ops.hpp"
#include "oct4d/tensor.hpp"

namespace oct4d {

// Weights on the two auxiliary time steps of the regularized loss.
struct LossWeights {
  double w1 = 0.0;  // weight on the t_{n-1} term
  double w2 = 0.0;  // weight on the t_{n-2} term

  static LossWeights paper_best() { return {0.75, 0.75}; }
};

// Mean over the batch of the squared Euclidean residual:
// (1/N) sum_j ||target_j - pred_j||^2.
template <typename T>
Tensor<T> loss_mse(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.rank() != 2 || pred.shape() != target.shape())
    fail_contract("loss: prediction ", shape_str(pred.shape()), " vs target ",
                  shape_str(target.shape()));
  int64_t n = pred.shape()[0];
  if (n == 0) fail_contract("loss over an empty batch");
  auto diff = sub(pred, target);
  return scale(sum_all(mul(diff, diff)), T(1) / static_cast<T>(n));
}

// Primary objective on the final-shift prediction, [B,3] each.
template <typename T>
Tensor<T> loss_eq1(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.rank() != 2 || pred.shape()[1] != 3)
    fail_contract("loss_eq1 expects [B,3] predictions, got ", shape_str(pred.shape()));
  return loss_mse(pred, target);
}

// Regularized objective on [B,9] = (y_tn, y_tn-1, y_tn-2) blocks: the
// primary term plus the two weighted auxiliary residuals, jointly averaged
// over the batch. All three terms always enter the graph, so zero weights
// still propagate (zero) gradients to every head output.
template <typename T>
Tensor<T> loss_eq2(const Tensor<T>& pred, const Tensor<T>& target, const LossWeights& w) {
  if (pred.rank() != 2 || pred.shape()[1] != 9)
    fail_contract("loss_eq2 expects [B,9] predictions, got ", shape_str(pred.shape()));
  if (pred.shape() != target.shape())
    fail_contract("loss_eq2: prediction ", shape_str(pred.shape()), " vs target ",
                  shape_str(target.shape()));
  if (w.w1 < 0 || w.w1 > 1 || w.w2 < 0 || w.w2 > 1)
    fail_contract("loss weights must lie in [0,1], got ", w.w1, ", ", w.w2);
  int64_t n = pred.shape()[0];
  if (n == 0) fail_contract("loss over an empty batch");

  auto term = [&](int block) {
    auto dp = sub(slice(pred, 1, block * 3, 3), slice(target, 1, block * 3, 3));
    return sum_all(mul(dp, dp));
  };
  auto total = add(term(0), add(scale(term(1), static_cast<T>(w.w1)),
                                scale(term(2), static_cast<T>(w.w2))));
  return scale(total, T(1) / static_cast<T>(n));
}

}  // namespace oct4d

#endif
