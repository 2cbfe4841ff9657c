#pragma once

#include <span>

#include "cmi/graph.hpp"
#include "cmi/params.hpp"

namespace cmi {

/// Probabilities are clamped to [kProbEps, 1 - kProbEps] before any log.
inline constexpr double kProbEps = 1e-7;

/// Task uncertainties stored as log sigma, so sigma = exp(.) stays positive.
struct UncertaintyParams {
  Tensor log_sigma1;  // classification
  Tensor log_sigma2;  // image

  explicit UncertaintyParams(double init = 0.0);
  double sigma1() const;
  double sigma2() const;
  /// Shares storage with this struct.
  ParamSet as_params() const;
};

struct LossBreakdown {
  double l_d = 0.0;
  double l_cat = 0.0;
  double l_l1 = 0.0;
  double l_adv = 0.0;
  double l_img = 0.0;
  double l_g_total = 0.0;
  double sigma1 = 1.0;
  double sigma2 = 1.0;
};

/// mean(-log(1 - d_fake) - log(d_real)).
Tensor discriminator_loss(Graph& g, const Tensor& d_fake, const Tensor& d_real);

/// mean(-log probs[i, labels[i]]).
Tensor categorical_loss(Graph& g, const Tensor& probs, std::span<const std::size_t> labels);

struct ImageLoss {
  Tensor total;  // lambda * l1 + adv
  Tensor l1;     // mean |pred - target|
  Tensor adv;    // -mean log d_fake
};

ImageLoss image_loss(Graph& g, const Tensor& pred, const Tensor& target, const Tensor& d_fake, double lambda);

/// exp(-2 ls1) l_cat + 0.5 exp(-2 ls2) l_img + ls1 + ls2.
Tensor generator_total(Graph& g, const Tensor& l_cat, const Tensor& l_img, const UncertaintyParams& u);

}  // namespace cmi
