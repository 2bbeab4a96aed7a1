#include "lesionseg/selfpaced.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "lesionseg/enhance.hpp"
#include "lesionseg/recist3d.hpp"

using nlohmann::json;

namespace lesionseg {

namespace {

// Index-sharded fan-out; results must be written to per-index slots so the
// outcome is independent of scheduling.
template <typename F>
void parallel_for(int n, int threads, F&& body) {
  threads = std::max(1, threads);
  if (threads == 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const int workers = std::min(threads, n);
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      int i;
      while ((i = next.fetch_add(1)) < n) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct WorkingLesion {
  const LesionData* src = nullptr;
  RoiVolume roi;
  Recist3D recist3d;
  Image2D anchor_image;       // RECIST-slice input
  Bitmap anchor_labels;       // round-0 GrabCut-from-RECIST mask
  double anchor_energy = 0.0;
};

Image2D slice_input(const RoiVolume& roi, int z, bool enhanced) {
  Image2D s = roi.vol.slice(z);
  if (!enhanced) return s;
  return stack_to_image(classical_enhance(s));
}

struct SliceOutcome {
  Bitmap labels;
  Bitmap ignore;  // empty bitmap = nothing ignored
  Bitmap mask;    // inference view (foreground only)
  TrimapSource source = TrimapSource::model;
  double energy = std::numeric_limits<double>::quiet_NaN();
};

bool has_background_side(const Trimap& t) {
  return t.count(TrimapLabel::BG) + t.count(TrimapLabel::PBG) > 0;
}

SliceOutcome process_slice(const Image2D& image,
                           const RecistAnnotation& slice_recist,
                           const AppearanceModel& model,
                           const SelfPacedConfig& config) {
  const Image2D prob = predict_map(model, image);
  const ModelTrimapParams mt{config.background_prob};

  // "Model found nothing" on this slice: no raster pixel reaches the
  // detection level. Training still harvests the geometric fallback labels,
  // but the inference view is an empty slice.
  const Bitmap raster = rasterize_recist(slice_recist, prob.width, prob.height);
  float max_raster_prob = 0.0f;
  for (std::size_t i = 0; i < raster.data.size(); ++i)
    if (raster.data[i]) max_raster_prob = std::max(max_raster_prob, prob.data[i]);
  const bool detected =
      max_raster_prob >= static_cast<float>(config.detection_prob);

  if (detected) {
    auto tri = trimap_from_model(prob, slice_recist, mt);
    if (tri && has_background_side(*tri) &&
        tri->count(TrimapLabel::FG) + tri->count(TrimapLabel::PFG) <
            tri->data.size()) {
      const auto gc = grabcut_run(image, *tri, config.grabcut);
      if (gc.mask.count() >=
          static_cast<std::size_t>(config.min_foreground_px)) {
        SliceOutcome out;
        out.labels = gc.mask;
        out.mask = gc.mask;
        out.source = TrimapSource::model;
        out.energy = gc.energy_history.empty()
                         ? 0.0
                         : gc.energy_history.back().total;
        return out;
      }
    }
  }

  const Trimap fb = fallback_labels(prob, slice_recist, mt);
  const auto labeled = trimap_training_labels(fb);
  SliceOutcome out;
  out.labels = labeled.labels;
  out.ignore = labeled.ignore;
  out.mask = detected ? labeled.labels : Bitmap(prob.width, prob.height);
  out.source = TrimapSource::fallback;
  return out;
}

HarvestEntry make_entry(const std::string& id, int round, int offset,
                        const SliceOutcome& s) {
  HarvestEntry e;
  e.lesion_id = id;
  e.round = round;
  e.offset = offset;
  e.source = s.source;
  e.grabcut_energy = s.energy;
  e.fg_px = s.labels.count();
  e.ignored_px = s.ignore.data.empty() ? 0 : s.ignore.count();
  e.bg_px = s.labels.data.size() - e.fg_px - e.ignored_px;
  return e;
}

WorkingLesion prepare_lesion(const LesionData& lesion,
                             const SelfPacedConfig& config) {
  WorkingLesion w;
  w.src = &lesion;
  w.roi = crop_and_window(lesion.volume, lesion.annotation);
  w.recist3d = estimate_recist3d(w.roi.ann, lesion.volume.spacing_mm);
  w.anchor_image =
      slice_input(w.roi, w.roi.ann.slice_index, config.use_enhanced_stack);
  const Trimap tri =
      trimap_from_recist(w.roi.ann, w.roi.vol.dims[0], w.roi.vol.dims[1]);
  const auto gc = grabcut_run(w.anchor_image, tri, config.grabcut);
  w.anchor_labels = gc.mask;
  w.anchor_energy =
      gc.energy_history.empty() ? 0.0 : gc.energy_history.back().total;
  return w;
}

}  // namespace

SelfPacedResult selfpaced_run(const std::vector<LesionData>& lesions,
                              const SelfPacedConfig& config) {
  if (lesions.empty()) throw std::invalid_argument("no lesions to process");
  if (config.max_rounds < 0) throw std::invalid_argument("K must be >= 0");

  const int n = static_cast<int>(lesions.size());
  std::vector<WorkingLesion> work(n);
  parallel_for(n, config.threads,
               [&](int i) { work[i] = prepare_lesion(lesions[i], config); });

  SelfPacedResult result;
  TrainSet train_set;
  for (int i = 0; i < n; ++i) {
    train_set.push_back(
        {work[i].anchor_image, work[i].anchor_labels, Bitmap{}});
    SliceOutcome anchor;
    anchor.labels = work[i].anchor_labels;
    anchor.source = TrimapSource::recist;
    anchor.energy = work[i].anchor_energy;
    result.log.entries.push_back(
        make_entry(lesions[i].id, 0, 0, anchor));
  }

  TrainParams tp = config.train;
  tp.seed = config.seed;
  result.models.push_back(train_appearance(train_set, config.features, tp));

  for (int round = 1; round <= config.max_rounds; ++round) {
    const AppearanceModel& prev = result.models.back();
    const int span = 2 * round + 1;
    // Slot per (lesion, offset); unprocessed slots stay empty.
    std::vector<std::vector<std::unique_ptr<SliceOutcome>>> slots(n);
    std::vector<std::vector<Image2D>> images(n);
    for (int i = 0; i < n; ++i) {
      slots[i].resize(span);
      images[i].resize(span);
    }

    parallel_for(n, config.threads, [&](int i) {
      const auto& w = work[i];
      for (int tau = -round; tau <= round; ++tau) {
        const int z = w.roi.ann.slice_index + tau;
        if (z < 0 || z >= w.roi.vol.dims[2]) continue;
        const RecistAnnotation* eff =
            tau == 0 ? &w.roi.ann : recist_at_offset(w.recist3d, tau);
        if (!eff) continue;  // beyond extent: skipped during harvesting
        const Image2D img = slice_input(w.roi, z, config.use_enhanced_stack);
        auto outcome = std::make_unique<SliceOutcome>(
            process_slice(img, *eff, prev, config));
        images[i][tau + round] = img;
        slots[i][tau + round] = std::move(outcome);
      }
    });

    TrainSet round_set;
    for (int i = 0; i < n; ++i) {
      // The RECIST-slice anchor pair is retained every round.
      round_set.push_back(
          {work[i].anchor_image, work[i].anchor_labels, Bitmap{}});
      for (int s = 0; s < span; ++s) {
        if (!slots[i][s]) continue;
        auto& outcome = *slots[i][s];
        round_set.push_back({std::move(images[i][s]), outcome.labels,
                             outcome.ignore});
        result.log.entries.push_back(
            make_entry(lesions[i].id, round, s - round, outcome));
      }
    }

    result.models.push_back(
        train_appearance_from(result.models.back(), round_set, tp));
  }
  return result;
}

Mask segment_volume(const LesionData& lesion, const AppearanceModel& model,
                    const SelfPacedConfig& config) {
  const RoiVolume roi = crop_and_window(lesion.volume, lesion.annotation);
  const Recist3D r3d = estimate_recist3d(roi.ann, lesion.volume.spacing_mm);

  Mask out;
  out.dims = lesion.volume.dims;
  out.spacing_mm = lesion.volume.spacing_mm;
  out.data.assign(out.voxel_count(), 0);

  const auto threshold_mask = [](const Image2D& prob) {
    Bitmap m(prob.width, prob.height);
    for (std::size_t i = 0; i < m.data.size(); ++i)
      m.data[i] = prob.data[i] >= 0.5f ? 1 : 0;
    return m;
  };

  for (int z = 0; z < roi.vol.dims[2]; ++z) {
    const int tau = z - roi.ann.slice_index;
    const RecistAnnotation* eff =
        tau == 0 ? &roi.ann : recist_at_offset(r3d, tau);
    Bitmap slice_mask;
    if (eff) {
      const Image2D img = slice_input(roi, z, config.use_enhanced_stack);
      if (config.no_grabcut) {
        slice_mask = threshold_mask(predict_map(model, img));
      } else {
        slice_mask = process_slice(img, *eff, model, config).mask;
      }
    } else if (config.beyond_extent ==
               SelfPacedConfig::BeyondExtent::model_only) {
      const Image2D img = slice_input(roi, z, config.use_enhanced_stack);
      slice_mask = threshold_mask(predict_map(model, img));
    } else {
      continue;  // beyond extent: empty slice
    }
    for (int y = 0; y < slice_mask.height; ++y)
      for (int x = 0; x < slice_mask.width; ++x)
        if (slice_mask.at(x, y))
          out.at(roi.x0 + x, roi.y0 + y, z) = 1;
  }
  return out;
}

Mask grabcut_3de(const LesionData& lesion, const SelfPacedConfig& config) {
  const RoiVolume roi = crop_and_window(lesion.volume, lesion.annotation);
  const Recist3D r3d = estimate_recist3d(roi.ann, lesion.volume.spacing_mm);

  Mask out;
  out.dims = lesion.volume.dims;
  out.spacing_mm = lesion.volume.spacing_mm;
  out.data.assign(out.voxel_count(), 0);

  for (int z = 0; z < roi.vol.dims[2]; ++z) {
    const int tau = z - roi.ann.slice_index;
    const RecistAnnotation* eff =
        tau == 0 ? &roi.ann : recist_at_offset(r3d, tau);
    if (!eff) continue;
    const Image2D img = slice_input(roi, z, config.use_enhanced_stack);
    const Trimap tri =
        trimap_from_recist(*eff, roi.vol.dims[0], roi.vol.dims[1]);
    const auto gc = grabcut_run(img, tri, config.grabcut);
    for (int y = 0; y < gc.mask.height; ++y)
      for (int x = 0; x < gc.mask.width; ++x)
        if (gc.mask.at(x, y)) out.at(roi.x0 + x, roi.y0 + y, z) = 1;
  }
  return out;
}

std::vector<LesionData> load_lesions(const std::vector<LesionRecord>& records) {
  std::vector<LesionData> out;
  for (const auto& r : records) {
    try {
      LesionData d;
      d.volume = read_volume(r.volume_path);
      d.annotation = r.annotation;
      validate_annotation(d.annotation, d.volume);
      d.id = r.annotation.lesion_id.empty() ? r.volume_path
                                            : r.annotation.lesion_id;
      out.push_back(std::move(d));
    } catch (const std::exception& e) {
      std::cerr << "skipping lesion (" << r.volume_path << "): " << e.what()
                << "\n";
    }
  }
  return out;
}

void write_harvest_log(const HarvestLog& log, const std::string& path) {
  json j = json::array();
  for (const auto& e : log.entries) {
    const char* source = e.source == TrimapSource::recist    ? "recist"
                         : e.source == TrimapSource::model   ? "model"
                                                             : "fallback";
    json item{{"lesion_id", e.lesion_id}, {"round", e.round},
              {"offset", e.offset},       {"source", source},
              {"fg_px", e.fg_px},         {"bg_px", e.bg_px},
              {"ignored_px", e.ignored_px}};
    if (std::isfinite(e.grabcut_energy)) item["grabcut_energy"] = e.grabcut_energy;
    j.push_back(item);
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

}  // namespace lesionseg
