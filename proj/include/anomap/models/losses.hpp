#pragma once

#include <span>

#include "anomap/nn/tensor.hpp"

namespace anomap::models {

using nn::Tensor;

/// L1 reconstruction loss: per-sample sum of |x - x_hat|, averaged over the
/// batch.
template <typename T>
double ae_loss(const Tensor<T>& x, const Tensor<T>& x_hat);

/// d ae_loss / d x_hat (subgradient 0 where x == x_hat).
template <typename T>
Tensor<T> ae_loss_grad(const Tensor<T>& x, const Tensor<T>& x_hat);

struct CosineResult {
  double value = 0.0;
  bool degenerate = false;  // a zero vector was involved; value forced to 0
};

template <typename T>
CosineResult cosine_sim(std::span<const T> z1, std::span<const T> z2);

struct SaeLossTerms {
  double total = 0.0;
  double reconstruction = 0.0;  // batch mean of MSE(x1) + MSE(x2)
  double mean_cosine = 0.0;
  int degenerate_pairs = 0;
};

template <typename T>
struct SaeLossGrads {
  Tensor<T> recon1, recon2, z1, z2;
};

/// Siamese loss per pair: MSE(x1, x1_hat) + MSE(x2, x2_hat) - alpha * cos(z1, z2),
/// averaged over the batch. Gradients w.r.t. reconstructions and latents are
/// written to `grads` when non-null. Degenerate cosines contribute no gradient.
template <typename T>
SaeLossTerms sae_loss(const Tensor<T>& x1, const Tensor<T>& x2, const Tensor<T>& x1_hat,
                      const Tensor<T>& x2_hat, const Tensor<T>& z1, const Tensor<T>& z2,
                      double alpha, SaeLossGrads<T>* grads = nullptr);

}  // namespace anomap::models
