#include "cmi/losses.hpp"

#include <cmath>
#include <string>

#include "cmi/errors.hpp"

namespace cmi {

namespace {

Tensor clamp_prob(Graph& g, const Tensor& p) { return g.clamp(p, kProbEps, 1.0 - kProbEps); }

void require_batch_column(const Tensor& t, const char* what) {
  if (t.rank() != 2 || t.dim(1) != 1)
    throw DimensionError(std::string(what) + " must be [batch,1], got " + shape_str(t.shape()));
}

}  // namespace

UncertaintyParams::UncertaintyParams(double init) : log_sigma1(Tensor::scalar(init)), log_sigma2(Tensor::scalar(init)) {
  log_sigma1.set_requires_grad(true);
  log_sigma2.set_requires_grad(true);
}

double UncertaintyParams::sigma1() const { return std::exp(log_sigma1.item()); }
double UncertaintyParams::sigma2() const { return std::exp(log_sigma2.item()); }

ParamSet UncertaintyParams::as_params() const {
  ParamSet ps;
  ps.add("log_sigma1", log_sigma1);
  ps.add("log_sigma2", log_sigma2);
  return ps;
}

Tensor discriminator_loss(Graph& g, const Tensor& d_fake, const Tensor& d_real) {
  require_batch_column(d_fake, "d_fake");
  require_batch_column(d_real, "d_real");
  auto f = clamp_prob(g, d_fake);
  auto r = clamp_prob(g, d_real);
  auto fake_term = g.log(g.add_scalar(g.scale(f, -1.0), 1.0));
  auto real_term = g.log(r);
  return g.scale(g.add(g.mean(fake_term), g.mean(real_term)), -1.0);
}

Tensor categorical_loss(Graph& g, const Tensor& probs, std::span<const std::size_t> labels) {
  if (probs.rank() != 2 || probs.dim(0) != labels.size())
    throw DimensionError("categorical_loss: probs " + shape_str(probs.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  for (auto l : labels)
    if (l >= probs.dim(1))
      throw ContractError("categorical_loss: label " + std::to_string(l) + " outside [0," +
                          std::to_string(probs.dim(1)) + ")");
  return g.scale(g.mean(g.log(clamp_prob(g, g.pick(probs, labels)))), -1.0);
}

ImageLoss image_loss(Graph& g, const Tensor& pred, const Tensor& target, const Tensor& d_fake, double lambda) {
  if (pred.shape() != target.shape())
    throw DimensionError("image_loss: pred " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
  require_batch_column(d_fake, "d_fake");
  ImageLoss out;
  out.l1 = g.mean(g.abs(g.sub(pred, target)));
  out.adv = g.scale(g.mean(g.log(clamp_prob(g, d_fake))), -1.0);
  out.total = g.add(g.scale(out.l1, lambda), out.adv);
  return out;
}

Tensor generator_total(Graph& g, const Tensor& l_cat, const Tensor& l_img, const UncertaintyParams& u) {
  auto w1 = g.exp(g.scale(u.log_sigma1, -2.0));
  auto w2 = g.scale(g.exp(g.scale(u.log_sigma2, -2.0)), 0.5);
  auto weighted = g.add(g.mul(w1, l_cat), g.mul(w2, l_img));
  return g.add(weighted, g.add(u.log_sigma1, u.log_sigma2));
}

}  // namespace cmi
