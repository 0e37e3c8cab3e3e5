#pragma once

#include <span>
#include <string>
#include <vector>

#include "attrgan/nn/tensor.hpp"

namespace attrgan {

using nn::Tensor;

// λ1..λ7 in the order adv-img, adv-obj, obj-class, attr-class, KL,
// img-recon, latent-recon.
struct LossWeights {
  double adv_img = 1.0;
  double adv_obj = 1.0;
  double obj_cls = 8.0;
  double attr_cls = 2.0;
  double kl = 0.01;
  double img_recon = 5.0;
  double latent_recon = 5.0;

  void validate() const;
};

// Adversarial loss pair. `discriminator` is the binary cross-entropy the
// discriminator minimizes, averaged over the three generated paths;
// `generator` is the non-saturating -log D(fake), averaged the same way.
// `value` is the minimax objective log D(real) + log(1 - D(fake)) (path
// averaged), i.e. -discriminator; it is what discriminator_total negates.
struct AdvLoss {
  Tensor generator;
  Tensor discriminator;
  Tensor value;
};

// Scores are probabilities in (0,1), one per image (or per object crop). Each
// path is reduced by its mean before averaging over the three paths.
AdvLoss adv_loss_image(const Tensor& real, const Tensor& fake_rand, const Tensor& fake_rec,
                       const Tensor& fake_shift);
AdvLoss adv_loss_object(const Tensor& real, const Tensor& fake_rand, const Tensor& fake_rec,
                        const Tensor& fake_shift);
// Same quantities from pre-sigmoid logits (numerically stable form used in
// training). Any fake tensor may be undefined, in which case that side is
// skipped: D-only or G-only evaluation.
AdvLoss adv_loss_logits(const Tensor& real, const Tensor& fake_rand, const Tensor& fake_rec,
                        const Tensor& fake_shift);

// KL(N(mu, exp(logvar)) || N(0, I)) summed over dimensions, averaged over
// objects (rows).
Tensor kl_loss(const Tensor& mu, const Tensor& logvar);
// Mean absolute difference.
Tensor image_recon_loss(const Tensor& image, const Tensor& reconstruction);
// Mean over objects of mean_d |z - z_rand| + mean_d |z - z_shift|.
Tensor latent_recon_loss(const Tensor& z, const Tensor& z_rand, const Tensor& z_shift);
// Mean softmax cross-entropy.
Tensor obj_class_loss(const Tensor& logits, std::span<const int> labels);
// Mean over objects of sum_a w_a * BCE(sigmoid(logit_a), target_a).
Tensor attr_class_loss(const Tensor& logits, const Tensor& targets, std::span<const double> weights);

struct LossParts {
  double adv_img = 0, adv_obj = 0, obj_cls = 0, attr_cls = 0, kl = 0, img_recon = 0,
         latent_recon = 0;
};

// Weighted totals, summed with compensation so the result is the correctly
// rounded value of the exact weighted sum.
double generator_total(const LossParts& parts, const LossWeights& w);
// -λ1·adv_img - λ2·adv_obj + λ3·obj_cls + λ4·attr_cls, where the adversarial
// parts are minimax values (AdvLoss::value).
double discriminator_total(const LossParts& parts, const LossWeights& w);

// Differentiable counterparts; undefined terms are skipped.
struct LossTerms {
  Tensor adv_img, adv_obj, obj_cls, attr_cls, kl, img_recon, latent_recon;
};
Tensor generator_total(const LossTerms& terms, const LossWeights& w);
Tensor discriminator_total(const LossTerms& terms, const LossWeights& w);

}  // namespace attrgan
