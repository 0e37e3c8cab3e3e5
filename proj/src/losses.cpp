#include "attrgan/losses.hpp"

#include <cmath>

#include "attrgan/errors.hpp"
#include "attrgan/nn/ops.hpp"

namespace attrgan {

using namespace nn;

void LossWeights::validate() const {
  for (double v : {adv_img, adv_obj, obj_cls, attr_cls, kl, img_recon, latent_recon})
    require(v >= 0.0 && std::isfinite(v), ErrorCode::kInvalidArgument,
            "loss weights must be finite and nonnegative");
}

namespace {

Tensor log_prob(const Tensor& p) {
  for (double v : p.values())
    require(v > 0.0 && v < 1.0, ErrorCode::kInvalidArgument, "scores must lie in (0,1)");
  return log(p);
}

Tensor log_one_minus(const Tensor& p) { return log(add_scalar(scale(p, -1.0), 1.0)); }

// Shared structure: path-averaged BCE given log D and log(1-D) per path.
AdvLoss combine(const Tensor& log_real, const std::vector<Tensor>& log_fake,
                const std::vector<Tensor>& log_one_minus_fake) {
  AdvLoss out;
  const double k = static_cast<double>(log_fake.size());
  Tensor g, d;
  for (size_t i = 0; i < log_fake.size(); ++i) {
    Tensor gi = scale(mean(log_fake[i]), -1.0);
    g = g.defined() ? add(g, gi) : gi;
    if (log_real.defined()) {
      Tensor di = scale(add(mean(log_real), mean(log_one_minus_fake[i])), -1.0);
      d = d.defined() ? add(d, di) : di;
    }
  }
  if (g.defined()) out.generator = scale(g, 1.0 / k);
  if (d.defined()) {
    out.discriminator = scale(d, 1.0 / k);
    out.value = scale(out.discriminator, -1.0);
  }
  return out;
}

AdvLoss adv_from_scores(const Tensor& real, const Tensor& a, const Tensor& b, const Tensor& c) {
  std::vector<Tensor> lf, l1m;
  for (const Tensor* t : {&a, &b, &c}) {
    lf.push_back(log_prob(*t));
    l1m.push_back(log_one_minus(*t));
  }
  return combine(log_prob(real), lf, l1m);
}

}  // namespace

AdvLoss adv_loss_image(const Tensor& real, const Tensor& fake_rand, const Tensor& fake_rec,
                       const Tensor& fake_shift) {
  return adv_from_scores(real, fake_rand, fake_rec, fake_shift);
}

AdvLoss adv_loss_object(const Tensor& real, const Tensor& fake_rand, const Tensor& fake_rec,
                        const Tensor& fake_shift) {
  return adv_from_scores(real, fake_rand, fake_rec, fake_shift);
}

AdvLoss adv_loss_logits(const Tensor& real, const Tensor& fake_rand, const Tensor& fake_rec,
                        const Tensor& fake_shift) {
  std::vector<Tensor> lf, l1m;
  for (const Tensor* t : {&fake_rand, &fake_rec, &fake_shift}) {
    if (!t->defined()) continue;
    lf.push_back(log_sigmoid(*t));
    l1m.push_back(log_sigmoid(scale(*t, -1.0)));
  }
  require(!lf.empty(), ErrorCode::kEmptyInput, "adversarial loss needs at least one fake path");
  return combine(real.defined() ? log_sigmoid(real) : Tensor(), lf, l1m);
}

Tensor kl_loss(const Tensor& mu, const Tensor& logvar) {
  require(mu.shape() == logvar.shape() && mu.rank() == 2, ErrorCode::kShapeMismatch,
          "kl_loss: mu " + shape_string(mu.shape()) + " logvar " + shape_string(logvar.shape()));
  // 0.5 * (mu^2 + exp(lv) - 1 - lv)
  Tensor t = sub(add(mul(mu, mu), exp(logvar)), add_scalar(logvar, 1.0));
  return scale(sum(t), 0.5 / mu.dim(0));
}

Tensor image_recon_loss(const Tensor& image, const Tensor& reconstruction) {
  return mean(abs(sub(image, reconstruction)));
}

Tensor latent_recon_loss(const Tensor& z, const Tensor& z_rand, const Tensor& z_shift) {
  require(z.shape() == z_rand.shape() && z.shape() == z_shift.shape(), ErrorCode::kLengthMismatch,
          "latent_recon_loss: code sets differ in shape");
  require(z.rank() == 2 && z.dim(0) > 0, ErrorCode::kEmptyInput, "latent_recon_loss: no codes");
  // mean over objects of two per-dim means == (sum |.| + sum |.|) / (n*d)
  return scale(add(sum(abs(sub(z, z_rand))), sum(abs(sub(z, z_shift)))),
               1.0 / (static_cast<double>(z.dim(0)) * z.dim(1)));
}

Tensor obj_class_loss(const Tensor& logits, std::span<const int> labels) {
  require(logits.rank() == 2 && logits.dim(0) == static_cast<int>(labels.size()),
          ErrorCode::kLengthMismatch, "obj_class_loss: one label per row");
  require(logits.dim(0) > 0, ErrorCode::kEmptyInput, "obj_class_loss: no objects");
  return scale(mean(pick(log_softmax(logits), labels)), -1.0);
}

Tensor attr_class_loss(const Tensor& logits, const Tensor& targets,
                       std::span<const double> weights) {
  require(logits.shape() == targets.shape() && logits.rank() == 2, ErrorCode::kShapeMismatch,
          "attr_class_loss: logits " + shape_string(logits.shape()) + " targets " +
              shape_string(targets.shape()));
  require(static_cast<int>(weights.size()) == logits.dim(1), ErrorCode::kShapeMismatch,
          "attr_class_loss: one weight per attribute");
  require(logits.dim(0) > 0, ErrorCode::kEmptyInput, "attr_class_loss: no objects");
  const int n = logits.dim(0), a = logits.dim(1);
  // -[t*w*log s(l) + (1-t)*w*log s(-l)]
  std::vector<double> wt(static_cast<size_t>(n) * a), wn(wt.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < a; ++j) {
      const size_t k = static_cast<size_t>(i) * a + j;
      const double t = targets.at(static_cast<int>(k));
      wt[k] = weights[static_cast<size_t>(j)] * t;
      wn[k] = weights[static_cast<size_t>(j)] * (1.0 - t);
    }
  Tensor pos = mul(log_sigmoid(logits), Tensor::from(logits.shape(), std::move(wt)));
  Tensor neg = mul(log_sigmoid(scale(logits, -1.0)), Tensor::from(logits.shape(), std::move(wn)));
  return scale(sum(add(pos, neg)), -1.0 / n);
}

namespace {

double compensated_sum(std::initializer_list<double> xs) {
  double s = 0.0, c = 0.0;
  for (double x : xs) {
    const double t = s + x;
    c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
    s = t;
  }
  return s + c;
}

Tensor accumulate(std::initializer_list<std::pair<double, const Tensor*>> terms) {
  Tensor total;
  for (const auto& [w, t] : terms) {
    if (!t->defined() || w == 0.0) continue;
    Tensor s = scale(*t, w);
    total = total.defined() ? add(total, s) : s;
  }
  return total.defined() ? total : Tensor::scalar(0.0);
}

}  // namespace

double generator_total(const LossParts& p, const LossWeights& w) {
  return compensated_sum({w.adv_img * p.adv_img, w.adv_obj * p.adv_obj, w.obj_cls * p.obj_cls,
                          w.attr_cls * p.attr_cls, w.kl * p.kl, w.img_recon * p.img_recon,
                          w.latent_recon * p.latent_recon});
}

double discriminator_total(const LossParts& p, const LossWeights& w) {
  return compensated_sum({-w.adv_img * p.adv_img, -w.adv_obj * p.adv_obj, w.obj_cls * p.obj_cls,
                          w.attr_cls * p.attr_cls});
}

Tensor generator_total(const LossTerms& t, const LossWeights& w) {
  return accumulate({{w.adv_img, &t.adv_img},
                     {w.adv_obj, &t.adv_obj},
                     {w.obj_cls, &t.obj_cls},
                     {w.attr_cls, &t.attr_cls},
                     {w.kl, &t.kl},
                     {w.img_recon, &t.img_recon},
                     {w.latent_recon, &t.latent_recon}});
}

Tensor discriminator_total(const LossTerms& t, const LossWeights& w) {
  return accumulate({{-w.adv_img, &t.adv_img},
                     {-w.adv_obj, &t.adv_obj},
                     {w.obj_cls, &t.obj_cls},
                     {w.attr_cls, &t.attr_cls}});
}

}  // namespace attrgan
