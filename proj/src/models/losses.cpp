#include "anomap/models/losses.hpp"

#include <cmath>

namespace anomap::models {

namespace {
template <typename T>
void check_same(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  require(a.shape() == b.shape(), ErrorKind::kShape,
          std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}
}  // namespace

template <typename T>
double ae_loss(const Tensor<T>& x, const Tensor<T>& x_hat) {
  check_same(x, x_hat, "ae_loss");
  require(x.shape().n > 0, ErrorKind::kShape, "ae_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    total += std::abs(static_cast<double>(x[i]) - static_cast<double>(x_hat[i]));
  }
  return total / x.shape().n;
}

template <typename T>
Tensor<T> ae_loss_grad(const Tensor<T>& x, const Tensor<T>& x_hat) {
  check_same(x, x_hat, "ae_loss_grad");
  Tensor<T> g(x.shape());
  const T scale = static_cast<T>(1.0 / x.shape().n);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x_hat[i] > x[i]) {
      g[i] = scale;
    } else if (x_hat[i] < x[i]) {
      g[i] = -scale;
    }
  }
  return g;
}

template <typename T>
CosineResult cosine_sim(std::span<const T> z1, std::span<const T> z2) {
  require(z1.size() == z2.size(), ErrorKind::kShape, "cosine_sim: length mismatch");
  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < z1.size(); ++i) {
    dot += static_cast<double>(z1[i]) * z2[i];
    n1 += static_cast<double>(z1[i]) * z1[i];
    n2 += static_cast<double>(z2[i]) * z2[i];
  }
  if (n1 == 0.0 || n2 == 0.0) return {0.0, true};
  // sqrt(n1 * n2) rather than sqrt(n1) * sqrt(n2): equal vectors give exactly 1.
  return {dot / std::sqrt(n1 * n2), false};
}

template <typename T>
SaeLossTerms sae_loss(const Tensor<T>& x1, const Tensor<T>& x2, const Tensor<T>& x1_hat,
                      const Tensor<T>& x2_hat, const Tensor<T>& z1, const Tensor<T>& z2,
                      double alpha, SaeLossGrads<T>* grads) {
  check_same(x1, x1_hat, "sae_loss");
  check_same(x2, x2_hat, "sae_loss");
  check_same(x1, x2, "sae_loss");
  check_same(z1, z2, "sae_loss");
  const int batch = x1.shape().n;
  require(batch > 0 && z1.shape().n == batch, ErrorKind::kShape,
          "sae_loss: batch sizes disagree");
  const std::size_t elems = x1.shape().item_size();
  const std::size_t latent = z1.shape().item_size();
  if (grads != nullptr) {
    grads->recon1 = Tensor<T>(x1.shape());
    grads->recon2 = Tensor<T>(x2.shape());
    grads->z1 = Tensor<T>(z1.shape());
    grads->z2 = Tensor<T>(z2.shape());
  }
  SaeLossTerms terms;
  const double recon_scale = 2.0 / (static_cast<double>(elems) * batch);
  for (int b = 0; b < batch; ++b) {
    double mse = 0.0;
    for (int t = 0; t < 2; ++t) {
      const auto x = (t == 0 ? x1 : x2).item(b);
      const auto xh = (t == 0 ? x1_hat : x2_hat).item(b);
      double sq = 0.0;
      for (std::size_t i = 0; i < elems; ++i) {
        const double d = static_cast<double>(xh[i]) - x[i];
        sq += d * d;
      }
      mse += sq / static_cast<double>(elems);
      if (grads != nullptr) {
        auto g = (t == 0 ? grads->recon1 : grads->recon2).item(b);
        for (std::size_t i = 0; i < elems; ++i) {
          g[i] = static_cast<T>(recon_scale * (static_cast<double>(xh[i]) - x[i]));
        }
      }
    }
    const auto za = z1.item(b);
    const auto zb = z2.item(b);
    const CosineResult cos = cosine_sim<T>(za, zb);
    terms.reconstruction += mse;
    terms.mean_cosine += cos.value;
    if (cos.degenerate) ++terms.degenerate_pairs;
    if (grads != nullptr && !cos.degenerate) {
      double dot = 0.0, n1 = 0.0, n2 = 0.0;
      for (std::size_t i = 0; i < latent; ++i) {
        dot += static_cast<double>(za[i]) * zb[i];
        n1 += static_cast<double>(za[i]) * za[i];
        n2 += static_cast<double>(zb[i]) * zb[i];
      }
      const double inv = 1.0 / std::sqrt(n1 * n2);
      const double scale = -alpha / batch;
      auto g1 = grads->z1.item(b);
      auto g2 = grads->z2.item(b);
      for (std::size_t i = 0; i < latent; ++i) {
        g1[i] = static_cast<T>(scale * (zb[i] * inv - cos.value * za[i] / n1));
        g2[i] = static_cast<T>(scale * (za[i] * inv - cos.value * zb[i] / n2));
      }
    }
  }
  terms.reconstruction /= batch;
  terms.mean_cosine /= batch;
  terms.total = terms.reconstruction - alpha * terms.mean_cosine;
  return terms;
}

template double ae_loss<float>(const Tensor<float>&, const Tensor<float>&);
template double ae_loss<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> ae_loss_grad<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> ae_loss_grad<double>(const Tensor<double>&, const Tensor<double>&);
template CosineResult cosine_sim<float>(std::span<const float>, std::span<const float>);
template CosineResult cosine_sim<double>(std::span<const double>, std::span<const double>);
template SaeLossTerms sae_loss<float>(const Tensor<float>&, const Tensor<float>&,
                                      const Tensor<float>&, const Tensor<float>&,
                                      const Tensor<float>&, const Tensor<float>&, double,
                                      SaeLossGrads<float>*);
template SaeLossTerms sae_loss<double>(const Tensor<double>&, const Tensor<double>&,
                                       const Tensor<double>&, const Tensor<double>&,
                                       const Tensor<double>&, const Tensor<double>&, double,
                                       SaeLossGrads<double>*);

}  // namespace anomap::models
