#include "dive/rng.hpp"

#include <cmath>
#include <numbers>

namespace dive {

double Rng::normal() {
  // Box-Muller; u1 is kept away from 0 so the log is finite.
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace dive
