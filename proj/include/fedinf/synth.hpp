#pragma once

#include <cstdint>
#include <vector>

#include "fedinf/core.hpp"

namespace fedinf {

/// Synthetic heterogeneous-clients generator.  Each client draws a class
/// exposure from Dirichlet(alpha): small alpha yields specialists (sharp on
/// a few classes, near chance elsewhere), large alpha yields uniformly
/// competent clients.  Per panel, a client scores the true class in
/// proportion to its exposure, confuses classes in proportion to their
/// similarity, and adds observation noise; probits are the softmax of those
/// scores.  Noise has two parts: a per-panel component shared by every
/// client (input difficulty, survives ensemble averaging) and an i.i.d.
/// per-client component (individual mistakes, averages out).
struct SyntheticSpec {
  int n = 17;           // clients
  int k = 10;           // classes
  int count = 2000;     // panels
  double alpha = 1.0;   // exposure concentration
  double signal_base = 1.0;       // class score floor for the true class
  double signal_exposure = 6.0;   // score gain per unit of (exposure * k)
  double similarity_leak = 1.5;   // confusion toward similar classes
  double noise = 2.5;             // per-client observation noise scale
  double common_noise = 2.5;      // shared per-panel noise scale
  double temperature = 1.0;       // probit sharpness
};

void validate_synth_spec(const SyntheticSpec& spec);

struct SynthData {
  std::vector<ProbitPanel> panels;
  Mat similarity;  // k x k, symmetric, unit diagonal
  Mat exposures;   // n x k client exposure profiles (diagnostic)
};

SynthData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace fedinf
