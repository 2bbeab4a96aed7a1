#include "lesionseg/appearance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

using nlohmann::json;

namespace lesionseg {

void FeatureConfig::validate() const {
  if (radii.empty() && !include_raw)
    throw std::invalid_argument("feature config selects nothing");
  int prev = 0;
  for (int r : radii) {
    if (r < 1 || r <= prev)
      throw std::invalid_argument("radii must be >= 1 and strictly increasing");
    prev = r;
  }
}

Image2D extract_features(const Image2D& image, const FeatureConfig& cfg) {
  cfg.validate();
  const int w = image.width, h = image.height, ch = image.channels;
  const int pad = cfg.radii.empty() ? 0 : cfg.radii.back();
  const int pw = w + 2 * pad,ph = h + 2 * pad;

  const int per_channel = (cfg.include_raw ? 1 : 0) +
                          2 * static_cast<int>(cfg.radii.size());
  Image2D feat(w, h, ch * per_channel);

  std::vector<double> integral(static_cast<std::size_t>(pw + 1) * (ph + 1));
  std::vector<double> integral2(integral.size());
  for (int c = 0; c < ch; ++c) {
    // Replicate-padded integral images of value and value^2.
    for (int y = 0; y < ph; ++y) {
      const int sy = std::clamp(y - pad, 0, h - 1);
      for (int x = 0; x < pw; ++x) {
        const int sx = std::clamp(x - pad, 0, w - 1);
        const double v = image.at(sx, sy, c);
        const std::size_t i = static_cast<std::size_t>(y + 1) * (pw + 1) + x + 1;
        const std::size_t up = i - (pw + 1);
        integral[i] = v + integral[i - 1] + integral[up] - integral[up - 1];
        integral2[i] =
            v * v + integral2[i - 1] + integral2[up] - integral2[up - 1];
      }
    }
    const auto window_sum = [&](const std::vector<double>& s, int x, int y,
                                int r) {
      const int x0 = x + pad - r, y0 = y + pad - r;
      const int x1 = x + pad + r + 1, y1 = y + pad + r + 1;
      return s[static_cast<std::size_t>(y1) * (pw + 1) + x1] -
             s[static_cast<std::size_t>(y1) * (pw + 1) + x0] -
             s[static_cast<std::size_t>(y0) * (pw + 1) + x1] +
             s[static_cast<std::size_t>(y0) * (pw + 1) + x0];
    };

    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        int f = c * per_channel;
        if (cfg.include_raw) feat.at(x, y, f++) = image.at(x, y, c);
        for (int r : cfg.radii) {
          const double area = static_cast<double>(2 * r + 1) * (2 * r + 1);
          const double mean = window_sum(integral, x, y, r) / area;
          const double var =
              std::max(0.0, window_sum(integral2, x, y, r) / area - mean * mean);
          feat.at(x, y, f++) = static_cast<float>(mean);
          feat.at(x, y, f++) = static_cast<float>(std::sqrt(var));
        }
      }
    }
  }
  return feat;
}

namespace {

constexpr double kProbClip = 1e-12;

double sigmoid(double z) {
  z = std::clamp(z, -30.0, 30.0);
  return 1.0 / (1.0 + std::exp(-z));
}

double dot_feature(const Image2D& feat, std::size_t px,
                   const AppearanceModel& m) {
  const float* f = &feat.data[px * feat.channels];
  double z = m.bias;
  for (int j = 0; j < feat.channels; ++j)
    z += m.weights[j] * (f[j] - m.feature_means[j]) * m.feature_scales[j];
  return z;
}

double cross_entropy(double yhat, double y) {
  yhat = std::clamp(yhat, kProbClip, 1.0 - kProbClip);
  return -(y * std::log(yhat) + (1.0 - y) * std::log(1.0 - yhat));
}

// Hand-built models may omit the standardization vectors; default to the
// identity transform.
AppearanceModel with_standardization(AppearanceModel m) {
  const std::size_t dim = m.weights.size();
  if (m.feature_means.size() != dim) m.feature_means.assign(dim, 0.0);
  if (m.feature_scales.size() != dim) m.feature_scales.assign(dim, 1.0);
  return m;
}

struct PreparedItem {
  Image2D features;
  std::vector<std::size_t> labeled;  // pixel indices with a usable label
  std::vector<std::size_t> fg, bg;
};

PreparedItem prepare_item(const TrainItem& item, const FeatureConfig& cfg) {
  if (item.labels.width != item.image.width ||
      item.labels.height != item.image.height)
    throw std::invalid_argument("label dims mismatch");
  if (!item.ignore.data.empty() &&
      (item.ignore.width != item.image.width ||
       item.ignore.height != item.image.height))
    throw std::invalid_argument("ignore dims mismatch");
  PreparedItem out;
  out.features = extract_features(item.image, cfg);
  const std::size_t n = item.image.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    if (!item.ignore.data.empty() && item.ignore.data[i]) continue;
    out.labeled.push_back(i);
    (item.labels.data[i] ? out.fg : out.bg).push_back(i);
  }
  if (out.labeled.empty())
    throw std::runtime_error("training item has all pixels ignored");
  return out;
}

}  // namespace

double appearance_loss(const AppearanceModel& model, const TrainSet& set) {
  if (set.empty()) throw std::invalid_argument("empty train set");
  const AppearanceModel& m = with_standardization(model);
  double total = 0.0;
  for (const auto& item : set) {
    const auto prep = prepare_item(item, m.features);
    if (prep.features.channels != static_cast<int>(m.weights.size()))
      throw std::invalid_argument("feature dimension mismatch");
    double item_loss = 0.0;
    for (const std::size_t px : prep.labeled) {
      const double yhat = sigmoid(dot_feature(prep.features, px, m));
      item_loss += cross_entropy(yhat, item.labels.data[px]);
    }
    total += item_loss / static_cast<double>(prep.labeled.size());
  }
  return total / static_cast<double>(set.size());
}

std::vector<double> appearance_grad(const AppearanceModel& model,
                                    const TrainSet& set) {
  if (set.empty()) throw std::invalid_argument("empty train set");
  const AppearanceModel& m = with_standardization(model);
  const std::size_t dim = m.weights.size();
  std::vector<double> grad(dim + 1, 0.0);
  for (const auto& item : set) {
    const auto prep = prepare_item(item, m.features);
    if (prep.features.channels != static_cast<int>(dim))
      throw std::invalid_argument("feature dimension mismatch");
    std::vector<double> g(dim + 1, 0.0);
    for (const std::size_t px : prep.labeled) {
      const double yhat = sigmoid(dot_feature(prep.features, px, m));
      const double err = yhat - static_cast<double>(item.labels.data[px]);
      const float* f = &prep.features.data[px * dim];
      for (std::size_t j = 0; j < dim; ++j)
        g[j] += err * (f[j] - m.feature_means[j]) * m.feature_scales[j];
      g[dim] += err;
    }
    const double inv = 1.0 / static_cast<double>(prep.labeled.size());
    for (std::size_t j = 0; j <= dim; ++j) grad[j] += g[j] * inv;
  }
  const double inv_n = 1.0 / static_cast<double>(set.size());
  for (auto& v : grad) v *= inv_n;
  return grad;
}

namespace {

AppearanceModel run_training(AppearanceModel model, const TrainSet& set,
                             const TrainParams& params, bool warm) {
  if (set.empty()) throw std::invalid_argument("empty train set");
  model.features.validate();
  const int dim = model.features.feature_dim(model.channels);
  if (model.weights.empty()) model.weights.assign(dim, 0.0);
  if (static_cast<int>(model.weights.size()) != dim)
    throw std::invalid_argument("model weight dimension mismatch");

  std::vector<PreparedItem> prep;
  prep.reserve(set.size());
  std::size_t total_labeled = 0, total_fg = 0, total_bg = 0;
  for (const auto& item : set) {
    if (item.image.channels != model.channels)
      throw std::invalid_argument("train image channel mismatch");
    prep.push_back(prepare_item(item, model.features));
    total_labeled += prep.back().labeled.size();
    total_fg += prep.back().fg.size();
    total_bg += prep.back().bg.size();
  }

  // Standardize features once from the first training set; warm-started
  // rounds keep the original transform so the weights stay meaningful.
  if (static_cast<int>(model.feature_means.size()) != dim) {
    std::vector<double> mean(dim, 0.0), sq(dim, 0.0);
    for (const auto& p : prep)
      for (const std::size_t px : p.labeled) {
        const float* f = &p.features.data[px * dim];
        for (int j = 0; j < dim; ++j) {
          mean[j] += f[j];
          sq[j] += static_cast<double>(f[j]) * f[j];
        }
      }
    model.feature_means.resize(dim);
    model.feature_scales.resize(dim);
    for (int j = 0; j < dim; ++j) {
      const double mu = mean[j] / static_cast<double>(total_labeled);
      const double var = std::max(0.0, sq[j] / static_cast<double>(total_labeled) - mu * mu);
      model.feature_means[j] = mu;
      model.feature_scales[j] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
    }
  }

  // Pooled (item, pixel) lists for class-balanced sampling.
  std::vector<std::pair<std::size_t, std::size_t>> fg_pool, bg_pool;
  if (params.balance) {
    fg_pool.reserve(total_fg);
    bg_pool.reserve(total_bg);
    for (std::size_t i = 0; i < prep.size(); ++i) {
      for (auto px : prep[i].fg) fg_pool.emplace_back(i, px);
      for (auto px : prep[i].bg) bg_pool.emplace_back(i, px);
    }
  }
  const bool balanced = params.balance && !fg_pool.empty() && !bg_pool.empty();

  std::mt19937_64 rng(params.seed);
  std::vector<double> velocity(dim + 1, 0.0);
  std::vector<double> grad(dim + 1);
  model.meta.seed = params.seed;
  model.meta.warm_start = warm;
  if (!warm) model.meta.loss_curve.clear();

  const auto apply_step = [&](const std::vector<double>& g) {
    for (int j = 0; j <= dim; ++j) {
      velocity[j] = params.momentum * velocity[j] - params.learning_rate * g[j];
      if (j < dim)
        model.weights[j] += velocity[j];
      else
        model.bias += velocity[dim];
    }
  };

  const auto accumulate = [&](std::size_t item, std::size_t px) {
    const auto& p = prep[item];
    const double yhat = sigmoid(dot_feature(p.features, px, model));
    const double err = yhat - static_cast<double>(set[item].labels.data[px]);
    const float* f = &p.features.data[px * dim];
    for (int j = 0; j < dim; ++j)
      grad[j] += err * (f[j] - model.feature_means[j]) * model.feature_scales[j];
    grad[dim] += err;
  };

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    if (params.batch_pixels <= 0) {
      apply_step(appearance_grad(model, set));
    } else {
      const int batches = static_cast<int>(
          (total_labeled + params.batch_pixels - 1) / params.batch_pixels);
      for (int b = 0; b < batches; ++b) {
        std::fill(grad.begin(), grad.end(), 0.0);
        int drawn = 0;
        if (balanced) {
          std::uniform_int_distribution<std::size_t> pick_fg(0, fg_pool.size() - 1);
          std::uniform_int_distribution<std::size_t> pick_bg(0, bg_pool.size() - 1);
          const int half = params.batch_pixels / 2;
          for (int s = 0; s < half; ++s) {
            const auto& [it, px] = fg_pool[pick_fg(rng)];
            accumulate(it, px);
          }
          for (int s = 0; s < params.batch_pixels - half; ++s) {
            const auto& [it, px] = bg_pool[pick_bg(rng)];
            accumulate(it, px);
          }
          drawn = params.batch_pixels;
        } else {
          std::uniform_int_distribution<std::size_t> pick_item(0, prep.size() - 1);
          for (int s = 0; s < params.batch_pixels; ++s) {
            const std::size_t it = pick_item(rng);
            std::uniform_int_distribution<std::size_t> pick_px(
                0, prep[it].labeled.size() - 1);
            accumulate(it, prep[it].labeled[pick_px(rng)]);
          }
          drawn = params.batch_pixels;
        }
        for (auto& v : grad) v /= static_cast<double>(drawn);
        apply_step(grad);
      }
    }
    const double loss = appearance_loss(model, set);
    if (!std::isfinite(loss))
      throw std::runtime_error("training diverged (non-finite loss) at epoch " +
                               std::to_string(epoch));
    model.meta.loss_curve.push_back(loss);
    ++model.meta.epochs_run;
  }
  return model;
}

}  // namespace

AppearanceModel train_appearance(const TrainSet& set, const FeatureConfig& cfg,
                                 const TrainParams& params) {
  AppearanceModel model;
  model.features = cfg;
  model.channels = set.empty() ? 1 : set.front().image.channels;
  return run_training(std::move(model), set, params, false);
}

AppearanceModel train_appearance_from(AppearanceModel init, const TrainSet& set,
                                      const TrainParams& params) {
  return run_training(std::move(init), set, params, true);
}

Image2D predict_map(const AppearanceModel& model, const Image2D& image) {
  if (image.channels != model.channels)
    throw std::invalid_argument("feature dimension mismatch: model expects " +
                                std::to_string(model.channels) + " channels");
  const AppearanceModel& m = with_standardization(model);
  const Image2D feat = extract_features(image, m.features);
  if (feat.channels != static_cast<int>(m.weights.size()))
    throw std::invalid_argument("feature dimension mismatch");
  Image2D prob(image.width, image.height, 1);
  for (std::size_t px = 0; px < prob.pixel_count(); ++px)
    prob.data[px] =
        static_cast<float>(sigmoid(dot_feature(feat, px, m)));
  return prob;
}

void save_appearance_model(const AppearanceModel& model,
                           const std::string& path) {
  json j;
  j["channels"] = model.channels;
  j["features"] = {{"radii", model.features.radii},
                   {"include_raw", model.features.include_raw}};
  j["weights"] = model.weights;
  j["bias"] = model.bias;
  j["feature_means"] = model.feature_means;
  j["feature_scales"] = model.feature_scales;
  j["meta"] = {{"epochs_run", model.meta.epochs_run},
               {"loss_curve", model.meta.loss_curve},
               {"seed", model.meta.seed},
               {"warm_start", model.meta.warm_start}};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

AppearanceModel load_appearance_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  AppearanceModel m;
  m.channels = j.at("channels").get<int>();
  m.features.radii = j.at("features").at("radii").get<std::vector<int>>();
  m.features.include_raw = j.at("features").at("include_raw").get<bool>();
  m.weights = j.at("weights").get<std::vector<double>>();
  m.bias = j.at("bias").get<double>();
  m.feature_means = j.at("feature_means").get<std::vector<double>>();
  m.feature_scales = j.at("feature_scales").get<std::vector<double>>();
  const auto& meta = j.at("meta");
  m.meta.epochs_run = meta.at("epochs_run").get<int>();
  m.meta.loss_curve = meta.at("loss_curve").get<std::vector<double>>();
  m.meta.seed = meta.at("seed").get<std::uint64_t>();
  m.meta.warm_start = meta.at("warm_start").get<bool>();
  return m;
}

}  // namespace lesionseg
