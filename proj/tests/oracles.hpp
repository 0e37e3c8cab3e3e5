#pragma once

// Independent scalar-loop reference implementations used as test oracles.
// They deliberately avoid the library's tensor ops.

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "attrgan/rng.hpp"

namespace attrgan::oracle {

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Discriminator-side BCE for one path: -(mean log r + mean log(1 - f)).
inline double d_path(const std::vector<double>& real, const std::vector<double>& fake) {
  double lr = 0, lf = 0;
  for (double r : real) lr += std::log(r);
  for (double f : fake) lf += std::log(1.0 - f);
  return -(lr / real.size() + lf / fake.size());
}

inline double g_path(const std::vector<double>& fake) {
  double s = 0;
  for (double f : fake) s += -std::log(f);
  return s / fake.size();
}

struct AdvPair {
  double g, d;
};

inline AdvPair adversarial(const std::vector<double>& real, const std::vector<double>& a,
                           const std::vector<double>& b, const std::vector<double>& c) {
  return {(g_path(a) + g_path(b) + g_path(c)) / 3.0,
          (d_path(real, a) + d_path(real, b) + d_path(real, c)) / 3.0};
}

// Rows of length d; sum over dims, mean over rows.
inline double kl(const std::vector<double>& mu, const std::vector<double>& lv, int d) {
  const int n = static_cast<int>(mu.size()) / d;
  double total = 0;
  for (int i = 0; i < n; ++i) {
    double row = 0;
    for (int j = 0; j < d; ++j) {
      const double m = mu[static_cast<size_t>(i * d + j)], l = lv[static_cast<size_t>(i * d + j)];
      row += 0.5 * (m * m + std::exp(l) - 1.0 - l);
    }
    total += row;
  }
  return total / n;
}

// Monte-Carlo estimate of the same quantity: E_q[log q(z) - log p(z)].
inline double kl_monte_carlo(const std::vector<double>& mu, const std::vector<double>& lv, int d,
                             int samples, std::uint64_t seed) {
  Rng rng(seed);
  const int n = static_cast<int>(mu.size()) / d;
  double total = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const double m = mu[static_cast<size_t>(i * d + j)], l = lv[static_cast<size_t>(i * d + j)];
      const double sd = std::exp(0.5 * l);
      double acc = 0;
      for (int s = 0; s < samples; ++s) {
        const double e = rng.normal();
        const double z = m + sd * e;
        // log q - log p with shared constants cancelled
        acc += (-0.5 * l - 0.5 * e * e) - (-0.5 * z * z);
      }
      total += acc / samples;
    }
  return total / n;
}

inline double mean_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / a.size();
}

inline double latent_recon(const std::vector<double>& z, const std::vector<double>& zr,
                           const std::vector<double>& zs, int d) {
  const int n = static_cast<int>(z.size()) / d;
  double total = 0;
  for (int i = 0; i < n; ++i) {
    double a = 0, b = 0;
    for (int j = 0; j < d; ++j) {
      const size_t k = static_cast<size_t>(i * d + j);
      a += std::abs(z[k] - zr[k]);
      b += std::abs(z[k] - zs[k]);
    }
    total += a / d + b / d;
  }
  return total / n;
}

inline double cross_entropy(const std::vector<double>& logits, const std::vector<int>& labels, int k) {
  const int n = static_cast<int>(labels.size());
  double total = 0;
  for (int i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int j = 0; j < k; ++j) mx = std::max(mx, logits[static_cast<size_t>(i * k + j)]);
    double se = 0;
    for (int j = 0; j < k; ++j) se += std::exp(logits[static_cast<size_t>(i * k + j)] - mx);
    total += -(logits[static_cast<size_t>(i * k + labels[static_cast<size_t>(i)])] - mx - std::log(se));
  }
  return total / n;
}

inline double weighted_bce(const std::vector<double>& logits, const std::vector<double>& targets,
                           const std::vector<double>& w, int a) {
  const int n = static_cast<int>(logits.size()) / a;
  double total = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < a; ++j) {
      const double l = logits[static_cast<size_t>(i * a + j)];
      const double t = targets[static_cast<size_t>(i * a + j)];
      const double p = 1.0 / (1.0 + std::exp(-l));
      total += w[static_cast<size_t>(j)] * -(t * std::log(p) + (1 - t) * std::log(1 - p));
    }
  return total / n;
}

// Per layer: features [C, cells]; unit-normalize each cell over channels,
// squared L2 per cell, mean over cells; mean over layers.
inline double perceptual(const std::vector<std::vector<double>>& fa,
                         const std::vector<std::vector<double>>& fb, const std::vector<int>& channels) {
  double total = 0;
  for (size_t l = 0; l < fa.size(); ++l) {
    const int c = channels[l];
    const int cells = static_cast<int>(fa[l].size()) / c;
    double layer = 0;
    for (int p = 0; p < cells; ++p) {
      double na = 0, nb = 0;
      for (int ch = 0; ch < c; ++ch) {
        na += fa[l][static_cast<size_t>(ch * cells + p)] * fa[l][static_cast<size_t>(ch * cells + p)];
        nb += fb[l][static_cast<size_t>(ch * cells + p)] * fb[l][static_cast<size_t>(ch * cells + p)];
      }
      na = std::sqrt(na) + 1e-10;
      nb = std::sqrt(nb) + 1e-10;
      double d = 0;
      for (int ch = 0; ch < c; ++ch) {
        const double diff = fa[l][static_cast<size_t>(ch * cells + p)] / na -
                            fb[l][static_cast<size_t>(ch * cells + p)] / nb;
        d += diff * diff;
      }
      layer += d;
    }
    total += layer / cells;
  }
  return total / fa.size();
}

// Fréchet distance via a general (non-symmetric) eigendecomposition of
// Σa·Σb: trace((ΣaΣb)^{1/2}) = Σ sqrt(λ_i).
inline double frechet(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::RowVectorXd ma = a.colwise().mean(), mb = b.colwise().mean();
  const Eigen::MatrixXd ca = a.rowwise() - ma, cb = b.rowwise() - mb;
  const Eigen::MatrixXd sa = ca.transpose() * ca / (a.rows() - 1.0);
  const Eigen::MatrixXd sb = cb.transpose() * cb / (b.rows() - 1.0);
  Eigen::EigenSolver<Eigen::MatrixXd> es(sa * sb);
  double tr = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    tr += std::sqrt(std::complex<double>(es.eigenvalues()[i])).real();
  return (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr;
}

}  // namespace attrgan::oracle
