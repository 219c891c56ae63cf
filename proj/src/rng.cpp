#include "modadc/rng.hpp"

#include <cmath>

namespace modadc {

double Rng::next_gaussian() {
  // Box-Muller, cosine branch only. u1 is shifted into (0,1] so the log is
  // always finite.
  const double u1 = 1.0 - next_double();
  const double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

}  // namespace modadc
