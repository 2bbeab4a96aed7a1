#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lesionseg/appearance.hpp"
#include "lesionseg/grabcut.hpp"
#include "lesionseg/trimap.hpp"
#include "lesionseg/volume_io.hpp"

namespace lesionseg {

struct SelfPacedConfig {
  int max_rounds = 2;  // K; round k harvests offsets in [-k, k]
  TrainParams train;
  GrabCutParams grabcut;
  FeatureConfig features;
  double background_prob = 0.2;   // BG confidence threshold for model trimaps
  int min_foreground_px = 10;     // below this, GrabCut output triggers fallback
  double detection_prob = 0.5;    // max raster probability below this means
                                  // the model found nothing on the slice
  bool use_enhanced_stack = false;  // feed the 3-channel enhance stack
  enum class BeyondExtent { skip, model_only };
  BeyondExtent beyond_extent = BeyondExtent::skip;
  bool no_grabcut = false;  // volume inference: thresholded model output only
  std::uint64_t seed = 0;
  int threads = 1;  // per-lesion fan-out within a round
};

enum class TrimapSource { recist, model, fallback };

struct HarvestEntry {
  std::string lesion_id;
  int round = 0;
  int offset = 0;
  TrimapSource source = TrimapSource::recist;
  double grabcut_energy = 0.0;  // NaN when GrabCut was not run
  std::size_t fg_px = 0, bg_px = 0, ignored_px = 0;
};

struct HarvestLog {
  std::vector<HarvestEntry> entries;
};

// In-memory lesion: the volume, its annotation, and an id for reporting.
struct LesionData {
  Volume volume;
  RecistAnnotation annotation;
  std::string id;
};

struct SelfPacedResult {
  std::vector<AppearanceModel> models;  // round 0 .. K
  HarvestLog log;
};

// Algorithm: train on GrabCut-from-RECIST labels of the RECIST slices, then
// per round expand the harvested offsets, rebuild trimaps from the current
// model plus the 3D RECIST estimate, GrabCut, and retrain warm-started.
SelfPacedResult selfpaced_run(const std::vector<LesionData>& lesions,
                              const SelfPacedConfig& config);

// Per-slice model + trimap + GrabCut inference stacked into a 3D mask in the
// source volume's grid.
Mask segment_volume(const LesionData& lesion, const AppearanceModel& model,
                    const SelfPacedConfig& config);

// Non-learning baseline: per-slice GrabCut initialized purely from the
// geometric 3D RECIST estimate.
Mask grabcut_3de(const LesionData& lesion, const SelfPacedConfig& config);

// Path-based wrappers over LesionRecord lists. Per-lesion load failures are
// reported to stderr and skipped.
std::vector<LesionData> load_lesions(const std::vector<LesionRecord>& records);

void write_harvest_log(const HarvestLog& log, const std::string& path);

}  // namespace lesionseg
