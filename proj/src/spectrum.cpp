#include "mbgen/spectrum.hpp"

#include <algorithm>
#include <stdexcept>

namespace mbgen {

void Spectrum::normalize() {
  double mx = 0.0;
  for (const Peak& p : peaks) mx = std::max(mx, p.intensity);
  if (mx <= 0.0) throw std::invalid_argument("spectrum " + id + ": no positive intensity");
  for (Peak& p : peaks) p.intensity /= mx;
}

void Spectrum::validate() const {
  if (peaks.empty()) throw std::invalid_argument("spectrum " + id + ": no peaks");
  for (const Peak& p : peaks) {
    if (p.mz <= 0.0) throw std::invalid_argument("spectrum " + id + ": non-positive m/z");
    if (p.intensity < 0.0) throw std::invalid_argument("spectrum " + id + ": negative intensity");
    if (p.formula.counts.empty())
      throw std::invalid_argument("spectrum " + id + ": peak without formula annotation");
    if (!precursor.contains(p.formula))
      throw std::invalid_argument("spectrum " + id + ": peak formula " + p.formula.to_string() +
                                  " is not a sub-formula of precursor " + precursor.to_string());
  }
}

}  // namespace mbgen
