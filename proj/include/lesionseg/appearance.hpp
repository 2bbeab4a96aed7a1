#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lesionseg/image.hpp"

namespace lesionseg {

// Local statistics stack standing in for learned features: raw intensity
// plus box-window mean and standard deviation per radius, per channel.
struct FeatureConfig {
  std::vector<int> radii{1, 2, 4};
  bool include_raw = true;

  int feature_dim(int channels) const {
    return channels * ((include_raw ? 1 : 0) + 2 * static_cast<int>(radii.size()));
  }
  void validate() const;
};

// One training pair: image ROI, binary labels, and pixels excluded from the
// loss entirely (value 1 in `ignore`).
struct TrainItem {
  Image2D image;
  Bitmap labels;
  Bitmap ignore;
};
using TrainSet = std::vector<TrainItem>;

struct TrainMeta {
  int epochs_run = 0;
  std::vector<double> loss_curve;  // loss after each epoch
  std::uint64_t seed = 0;
  bool warm_start = false;
};

// Logistic pixel classifier over the standardized feature stack. The
// per-feature standardization is estimated from the first training set and
// kept fixed across warm-started rounds.
struct AppearanceModel {
  FeatureConfig features;
  int channels = 1;
  std::vector<double> weights;  // feature_dim(channels)
  double bias = 0.0;
  std::vector<double> feature_means;
  std::vector<double> feature_scales;  // 1 / std, 1 for constant features
  TrainMeta meta;
};

struct TrainParams {
  double learning_rate = 1e-2;
  int epochs = 30;
  int batch_pixels = 4096;  // 0 = full-batch gradient descent
  double momentum = 0.9;
  bool balance = true;  // equal FG/BG pixels per batch; false = raw sampling
  std::uint64_t seed = 0;
};

// Per-pixel feature stack; output channels = feature_dim(image.channels).
Image2D extract_features(const Image2D& image, const FeatureConfig& cfg);

// Mean over items of (sum of per-pixel cross entropy / labeled pixel count),
// predictions clipped to [1e-12, 1 - 1e-12]; ignored pixels excluded from
// both the sum and the count.
double appearance_loss(const AppearanceModel& model, const TrainSet& set);

// Analytic gradient of appearance_loss; layout = weights then bias.
std::vector<double> appearance_grad(const AppearanceModel& model,
                                    const TrainSet& set);

AppearanceModel train_appearance(const TrainSet& set, const FeatureConfig& cfg,
                                 const TrainParams& params);

// Continue training from an existing model (self-paced rounds warm start).
AppearanceModel train_appearance_from(AppearanceModel init, const TrainSet& set,
                                      const TrainParams& params);

// Per-pixel foreground probability, strictly inside (0, 1).
Image2D predict_map(const AppearanceModel& model, const Image2D& image);

void save_appearance_model(const AppearanceModel& model, const std::string& path);
AppearanceModel load_appearance_model(const std::string& path);

}  // namespace lesionseg
