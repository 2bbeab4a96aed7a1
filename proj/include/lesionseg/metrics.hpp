#pragma once

#include <span>
#include <utility>
#include <vector>

#include "lesionseg/volume_io.hpp"

namespace lesionseg {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

ConfusionCounts confusion(const Mask& pred, const Mask& gt);

// 2TP / (2TP + FP + FN); both masks empty -> 1.
double dice(const Mask& pred, const Mask& gt);

// (precision, recall); both empty -> (1, 1). An empty prediction against a
// non-empty truth scores precision 0.
std::pair<double, double> precision_recall(const Mask& pred, const Mask& gt);

// 1 - (FN - FP) / (2TP + FP + FN); both empty -> 1. Can exceed 1 when the
// prediction over-covers.
double volumetric_similarity(const Mask& pred, const Mask& gt);

// Averaged Hausdorff distance in mm: max of the two directed mean
// boundary-to-boundary distances. Boundary voxels have a background
// 6-neighbor (4-neighbor for single-slice masks); outside counts as
// background. Throws when either mask is empty.
double avg_hausdorff(const Mask& pred, const Mask& gt);

// pi * length * width^2 / 6, lengths in mm.
double ellipsoid_volume(double length_mm, double width_mm);
double ellipsoid_volume(const RecistAnnotation& ann, double sx, double sy);

double mask_volume_mm3(const Mask& mask);

// Volume deltas per follow-up pair and the least-squares fit of the method
// deltas against the reference deltas.
struct VolumePairSample {
  double baseline_mm3 = 0.0;
  double followup_mm3 = 0.0;
};

struct VolumeChangeReport {
  std::vector<double> reference_delta;
  std::vector<double> method_delta;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

VolumeChangeReport volume_change_report(
    std::span<const VolumePairSample> reference,
    std::span<const VolumePairSample> method);

}  // namespace lesionseg
