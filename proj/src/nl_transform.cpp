#include "nlgd/nl_transform.hpp"

#include <cmath>
#include <stdexcept>

namespace nlgd {

void NlSpec::validate() const {
  if (!(nu >= 0.0 && nu <= 1.0)) {
    throw std::invalid_argument("NlSpec: nu must lie in [0, 1]");
  }
  if (epsilon_floor < 0.0) {
    throw std::invalid_argument("NlSpec: epsilon_floor must be >= 0");
  }
}

void ClipSpec::validate() const {
  if (!(threshold > 0.0)) {
    throw std::invalid_argument("ClipSpec: threshold must be > 0");
  }
}

double power_sign_scalar(double x, const NlSpec& spec) {
  if (x == 0.0) return 0.0;
  if (spec.nu == 1.0) return x;
  const double s = x < 0.0 ? -1.0 : 1.0;
  const double mag = std::abs(x);
  if (spec.epsilon_floor > 0.0 && mag < spec.epsilon_floor) {
    // Linear through the origin, continuous at the floor.
    return std::pow(spec.epsilon_floor, spec.nu) * (x / spec.epsilon_floor);
  }
  if (spec.nu == 0.0) return s;
  return s * std::pow(mag, spec.nu);
}

double clip_scalar(double x, const ClipSpec& spec) {
  const double mag = std::abs(x);
  if (mag <= spec.threshold) return x;
  return x < 0.0 ? -spec.threshold : spec.threshold;
}

Tensor apply_power_sign(const Tensor& g, const NlSpec& spec) {
  spec.validate();
  return elementwise(g, [&spec](double x) { return power_sign_scalar(x, spec); });
}

Tensor apply_clip(const Tensor& g, const ClipSpec& spec) {
  spec.validate();
  return elementwise(g, [&spec](double x) { return clip_scalar(x, spec); });
}

}  // namespace nlgd
