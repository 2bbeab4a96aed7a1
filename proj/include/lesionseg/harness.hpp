#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lesionseg/selfpaced.hpp"
#include "lesionseg/volume_io.hpp"

namespace lesionseg {

enum class PhantomShape { ellipsoid, superellipsoid, blob };

// Analytic lesion on a uniform background with Gaussian imaging noise. The
// ground-truth mask is exact by construction; the annotation is measured
// from it with mask_to_recist.
struct PhantomSpec {
  PhantomShape shape = PhantomShape::ellipsoid;
  double exponent = 4.0;  // superellipsoid shape exponent (> 2 = boxier)
  std::array<double, 3> semi_axes_mm{10.0, 8.0, 6.0};
  double lesion_intensity = 0.8;
  double background_intensity = 0.2;
  double noise_std = 0.05;
  double edge_blur_px = 0.0;     // in-plane blur of the clean image
  double bias_field_amp = 0.0;   // low-frequency additive intensity drift
  double blob_amplitude = 0.15;  // radial perturbation for blob shapes
  int clutter_count = 0;         // lesion-intensity distractors hugging the
                                 // lesion (excluded from the ground truth)
  std::array<int, 3> dims{64, 64, 24};
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  std::uint64_t seed = 0;
};

struct Phantom {
  Volume volume;
  Mask gt_mask;
  RecistAnnotation annotation;
};

Phantom generate_phantom(const PhantomSpec& spec);

// Patient-level k-fold assignment, fold sizes within one patient of each
// other, deterministic per seed. Returns a fold id per lesion.
std::vector<int> kfold_split(const std::vector<LesionRecord>& lesions, int k,
                             std::uint64_t seed);

// Named desk-scale experiments writing CSV/JSON reports.
//   trimap-modes:  per-mode 2D segmentation quality over ellipse phantoms
//   offset-curve:  self-paced vs geometric-baseline DICE by slice offset
//   volume-change: follow-up volume deltas, mask vs RECIST estimates
struct ExperimentConfig {
  std::string name;
  std::string out_dir;
  int phantom_count = 20;
  std::uint64_t seed = 0;
  int threads = 1;
  SelfPacedConfig selfpaced;
};

void run_experiment(const ExperimentConfig& config);

}  // namespace lesionseg
