#pragma once

#include <cstdint>
#include <vector>

#include "lesionseg/gmm.hpp"
#include "lesionseg/image.hpp"
#include "lesionseg/trimap.hpp"

namespace lesionseg {

struct GrabCutParams {
  int gmm_components = 5;
  double gamma = 50.0;
  int connectivity = 8;
  int max_iters = 5;
  double convergence_fraction = 1e-3;  // stop when fewer pixels flip
  std::uint64_t seed = 0;
};

struct EnergyBreakdown {
  double data_term = 0.0;
  double smoothness_term = 0.0;
  double total = 0.0;
};

struct GrabCutResult {
  Bitmap mask;  // 1 = foreground
  std::vector<EnergyBreakdown> energy_history;  // after each iteration's cut
  GaussianMixture fg_gmm, bg_gmm;               // final appearance models
};

// Iterated GMM refit + min-cut honoring the four-region trimap: FG and BG
// pixels are hard-clamped, PFG/PBG seed the first labeling and stay free.
// The image has 1 or 3 channels with values in [0, 1].
GrabCutResult grabcut_run(const Image2D& image, const Trimap& trimap,
                          const GrabCutParams& params);

// One min-cut at fixed appearance models (exposed so small instances can be
// checked against exhaustive enumeration).
Bitmap grabcut_cut(const Image2D& image, const Trimap& trimap,
                   const GaussianMixture& fg, const GaussianMixture& bg,
                   const GrabCutParams& params);

// The exact objective a cut minimizes at fixed models.
EnergyBreakdown grabcut_energy(const Image2D& image, const Bitmap& labeling,
                               const GaussianMixture& fg,
                               const GaussianMixture& bg,
                               const GrabCutParams& params);

// Contrast weight beta = 1 / (2 <||z_i - z_j||^2>) over all neighbor pairs;
// zero for constant images.
double grabcut_beta(const Image2D& image, int connectivity);

}  // namespace lesionseg
