#pragma once

#include <string>
#include <vector>

#include "mbgen/chem.hpp"

namespace mbgen {

struct Peak {
  double mz = 0.0;
  double intensity = 0.0;       // in [0,1] after normalization
  MolecularFormula formula;     // fragment annotation, always present
};

struct Spectrum {
  std::string id;
  MolecularFormula precursor;
  std::vector<Peak> peaks;

  // Scales intensities so the strongest peak is 1.
  void normalize();
  // Checks peak count, positive m/z, and the sub-formula invariant.
  void validate() const;
};

}  // namespace mbgen
