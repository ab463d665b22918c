#pragma once

#include "nlgd/tensor.hpp"

namespace nlgd {

// Signed-power gradient transform h_nu(x) = sign(x) * |x|^nu.
//
// nu = 1 is the identity (plain gradient descent), nu = 0 is the pure sign.
// The closed endpoint nu = 1 is allowed so baselines and the non-linear
// variants can share one configuration type.
//
// epsilon_floor, when positive, linearises the transform below the floor:
// magnitudes under the floor map through h(floor) * (x / floor). This tames
// the amplification of near-zero noise gradients at small nu. Default 0.
struct NlSpec {
  double nu = 1.0;
  double epsilon_floor = 0.0;

  void validate() const;
};

// Component-wise magnitude clip with threshold t > 0.
struct ClipSpec {
  double threshold = 1.0;

  void validate() const;
};

double power_sign_scalar(double x, const NlSpec& spec);
double clip_scalar(double x, const ClipSpec& spec);

// Entrywise sign(x)|x|^nu; h(0) = 0 for every nu, including nu = 0.
Tensor apply_power_sign(const Tensor& g, const NlSpec& spec);

// Entrywise sign-preserving clip: sign(x) * min(|x|, t).
Tensor apply_clip(const Tensor& g, const ClipSpec& spec);

}  // namespace nlgd
