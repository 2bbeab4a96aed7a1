// lesionseg: RECIST-supervised lesion segmentation toolkit.
//
// One binary, subcommand per pipeline stage. Exit codes: 0 success,
// 1 usage error, 2 data error. Errors go to stderr.

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lesionseg/enhance.hpp"
#include "lesionseg/harness.hpp"
#include "lesionseg/metrics.hpp"
#include "lesionseg/recist3d.hpp"
#include "lesionseg/selfpaced.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lesionseg;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

RecistAnnotation load_annotation(const std::string& path, int index) {
  const auto anns = read_annotations(path);
  if (index < 0 || static_cast<std::size_t>(index) >= anns.size())
    throw std::runtime_error("annotation index " + std::to_string(index) +
                             " out of range for " + path);
  return anns[static_cast<std::size_t>(index)];
}

Image2D slice_as_image(const Volume& vol, int z) {
  if (z < 0 || z >= vol.dims[2])
    throw std::runtime_error("slice index out of range");
  return vol.slice(z);
}

Volume image_to_volume(const Image2D& img, const std::array<double, 3>& spacing) {
  Volume v;
  v.dims = {img.width, img.height, img.channels};
  v.spacing_mm = spacing;
  v.dtype = ScalarType::float32;
  v.data.resize(v.voxel_count());
  // Channels become z planes.
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        v.at(x, y, c) = img.at(x, y, c);
  return v;
}

struct EvalRow {
  std::string id;
  double dice_v = 0, precision = 0, recall = 0, vs = 0;
  double avd = std::numeric_limits<double>::quiet_NaN();
};

EvalRow evaluate_pair(const std::string& id, const Mask& pred, const Mask& gt) {
  EvalRow row;
  row.id = id;
  row.dice_v = dice(pred, gt);
  std::tie(row.precision, row.recall) = precision_recall(pred, gt);
  row.vs = volumetric_similarity(pred, gt);
  try {
    row.avd = avg_hausdorff(pred, gt);
  } catch (const std::runtime_error&) {
    // AVD undefined for empty masks; reported as an empty field.
  }
  return row;
}

void write_eval_report(const std::vector<EvalRow>& rows,
                       const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream csv(fs::path(out_dir) / "per_lesion.csv");
  if (!csv) throw std::runtime_error("cannot write evaluation csv");
  csv << "id,dice,precision,recall,vs,avd_mm\n";
  for (const auto& r : rows) {
    csv << r.id << ',' << fmt(r.dice_v) << ',' << fmt(r.precision) << ','
        << fmt(r.recall) << ',' << fmt(r.vs) << ','
        << (std::isfinite(r.avd) ? fmt(r.avd) : "") << "\n";
  }

  const auto agg = [&](auto get) {
    double mean = 0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      const double v = get(r);
      if (!std::isfinite(v)) continue;
      mean += v;
      ++n;
    }
    mean = n ? mean / n : 0.0;
    double var = 0;
    for (const auto& r : rows) {
      const double v = get(r);
      if (!std::isfinite(v)) continue;
      var += (v - mean) * (v - mean);
    }
    const double stdev = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
    return json{{"mean", mean}, {"std", stdev}, {"n", n}};
  };
  json j{{"dice", agg([](const EvalRow& r) { return r.dice_v; })},
         {"precision", agg([](const EvalRow& r) { return r.precision; })},
         {"recall", agg([](const EvalRow& r) { return r.recall; })},
         {"vs", agg([](const EvalRow& r) { return r.vs; })},
         {"avd_mm", agg([](const EvalRow& r) { return r.avd; })}};
  std::ofstream jf(fs::path(out_dir) / "aggregate.json");
  jf << j.dump(2) << "\n";
}

json annotation_to_json(const RecistAnnotation& a) {
  return json{{"lesion_id", a.lesion_id},
              {"patient_id", a.patient_id},
              {"slice_index", a.slice_index},
              {"long_axis",
               {{a.long_axis[0].x, a.long_axis[0].y},
                {a.long_axis[1].x, a.long_axis[1].y}}},
              {"short_axis",
               {{a.short_axis[0].x, a.short_axis[0].y},
                {a.short_axis[1].x, a.short_axis[1].y}}},
              {"window", {a.window[0], a.window[1]}}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RECIST-to-mask lesion segmentation toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  app.add_option("--seed", seed, "Seed for every stochastic component");
  app.add_option("--threads", threads, "Worker cap for per-lesion fan-out");

  GrabCutParams gc_params;
  const auto add_grabcut_flags = [&gc_params](CLI::App* cmd) {
    cmd->add_option("--gamma", gc_params.gamma, "Pairwise strength");
    cmd->add_option("--gmm-k", gc_params.gmm_components, "GMM components per side");
    cmd->add_option("--iters", gc_params.max_iters, "Max GrabCut iterations");
    cmd->add_option("--conn", gc_params.connectivity, "Grid connectivity (4 or 8)");
  };

  TrainParams train_params;
  const auto add_train_flags = [&train_params](CLI::App* cmd) {
    cmd->add_option("--lr", train_params.learning_rate, "Learning rate");
    cmd->add_option("--epochs", train_params.epochs, "Training epochs");
    cmd->add_option("--batch", train_params.batch_pixels,
                    "Pixels per batch (0 = full batch)");
    cmd->add_flag("--balance-off{false}", train_params.balance,
                  "Disable class-balanced batch sampling");
  };

  std::function<void()> run;

  // ---- phantom ----------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("phantom", "Generate a synthetic lesion");
    auto opts = std::make_shared<PhantomSpec>();
    auto out = std::make_shared<std::string>();
    auto shape = std::make_shared<std::string>("ellipsoid");
    cmd->add_option("--shape", *shape, "ellipsoid | superellipsoid | blob");
    cmd->add_option("--exponent", opts->exponent, "Superellipsoid exponent");
    cmd->add_option("--axes", opts->semi_axes_mm, "Semi-axes (mm)");
    cmd->add_option("--dims", opts->dims, "Volume dims (voxels)");
    cmd->add_option("--spacing", opts->spacing_mm, "Voxel spacing (mm)");
    cmd->add_option("--noise", opts->noise_std, "Image noise std");
    cmd->add_option("--out", *out, "Output prefix")->required();
    cmd->callback([&, opts, out, shape] {
      run = [&, opts, out, shape] {
        if (*shape == "ellipsoid") opts->shape = PhantomShape::ellipsoid;
        else if (*shape == "superellipsoid") opts->shape = PhantomShape::superellipsoid;
        else if (*shape == "blob") opts->shape = PhantomShape::blob;
        else throw std::runtime_error("unknown shape " + *shape);
        opts->seed = seed;
        const Phantom ph = generate_phantom(*opts);
        write_volume(ph.volume, *out);
        write_mask(ph.gt_mask, *out + "_gt");
        write_annotations({ph.annotation}, *out + ".recist.json");
        LesionRecord rec;
        rec.volume_path = *out + ".vol.json";
        rec.annotation = ph.annotation;
        rec.gt_mask_path = *out + "_gt.vol.json";
        write_lesion_records({rec}, *out + ".lesion.json");
      };
    });
  }

  // ---- trimap -----------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("trimap", "Export a trimap label raster");
    auto vol_path = std::make_shared<std::string>();
    auto rec_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto mode_name = std::make_shared<std::string>("recist-r");
    auto index = std::make_shared<int>(0);
    cmd->add_option("--volume", *vol_path, "Input volume")->required();
    cmd->add_option("--recist", *rec_path, "Annotation file")->required();
    cmd->add_option("--recist-index", *index, "Annotation index");
    cmd->add_option("--mode", *mode_name,
                    "recist-r | bbox-plain | bbox-inner | recist-dilate");
    cmd->add_option("--out", *out, "Output raster prefix")->required();
    cmd->callback([&, vol_path, rec_path, out, mode_name, index] {
      run = [&, vol_path, rec_path, out, mode_name, index] {
        const Volume vol = read_volume(*vol_path);
        const RecistAnnotation ann = load_annotation(*rec_path, *index);
        const RoiVolume roi = crop_and_window(vol, ann);
        TrimapMode mode;
        if (*mode_name == "recist-r") mode = TrimapMode::RecistR;
        else if (*mode_name == "bbox-plain") mode = TrimapMode::BboxPlain;
        else if (*mode_name == "bbox-inner") mode = TrimapMode::BboxInner;
        else if (*mode_name == "recist-dilate") mode = TrimapMode::RecistDilateOnly;
        else throw std::runtime_error("unknown trimap mode " + *mode_name);
        const Trimap tri = trimap_from_bbox(roi.ann, roi.vol.dims[0],
                                            roi.vol.dims[1], mode);
        write_mask(trimap_to_raster(tri, vol.spacing_mm), *out);
      };
    });
  }

  // ---- segment2d --------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("segment2d",
                                   "GrabCut the RECIST slice from its trimap");
    auto vol_path = std::make_shared<std::string>();
    auto rec_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto index = std::make_shared<int>(0);
    cmd->add_option("--volume", *vol_path, "Input volume")->required();
    cmd->add_option("--recist", *rec_path, "Annotation file")->required();
    cmd->add_option("--recist-index", *index, "Annotation index");
    cmd->add_option("--out", *out, "Output mask prefix")->required();
    add_grabcut_flags(cmd);
    cmd->callback([&, vol_path, rec_path, out, index] {
      run = [&, vol_path, rec_path, out, index] {
        const Volume vol = read_volume(*vol_path);
        const RecistAnnotation ann = load_annotation(*rec_path, *index);
        const RoiVolume roi = crop_and_window(vol, ann);
        const Trimap tri = trimap_from_recist(roi.ann, roi.vol.dims[0],
                                              roi.vol.dims[1]);
        GrabCutParams p = gc_params;
        p.seed = seed;
        const auto res =
            grabcut_run(roi.vol.slice(roi.ann.slice_index), tri, p);
        // Mask in full-volume coordinates on the annotated slice.
        Mask out_mask;
        out_mask.dims = vol.dims;
        out_mask.spacing_mm = vol.spacing_mm;
        out_mask.data.assign(out_mask.voxel_count(), 0);
        for (int y = 0; y < res.mask.height; ++y)
          for (int x = 0; x < res.mask.width; ++x)
            if (res.mask.at(x, y))
              out_mask.at(roi.x0 + x, roi.y0 + y, ann.slice_index) = 1;
        write_mask(out_mask, *out);
      };
    });
  }

  // ---- estimate-recist --------------------------------------------------
  {
    auto* cmd = app.add_subcommand("estimate-recist",
                                   "Project RECIST to neighboring slices");
    auto rec_path = std::make_shared<std::string>();
    auto vol_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto index = std::make_shared<int>(0);
    auto spacing = std::make_shared<std::vector<double>>();
    auto max_offset = std::make_shared<int>(-1);
    cmd->add_option("--recist", *rec_path, "Annotation file")->required();
    cmd->add_option("--recist-index", *index, "Annotation index");
    cmd->add_option("--volume", *vol_path, "Volume supplying the spacing");
    cmd->add_option("--spacing", *spacing, "Spacing sx sy sz (mm)")->expected(3);
    cmd->add_option("--max-offset", *max_offset, "Largest |tau| (default: auto)");
    cmd->add_option("--out", *out, "Output JSON")->required();
    cmd->callback([&, rec_path, vol_path, out, index, spacing, max_offset] {
      run = [&, rec_path, vol_path, out, index, spacing, max_offset] {
        const RecistAnnotation ann = load_annotation(*rec_path, *index);
        std::array<double, 3> sp{1.0, 1.0, 1.0};
        if (!vol_path->empty())
          sp = read_volume(*vol_path).spacing_mm;
        else if (spacing->size() == 3)
          sp = {(*spacing)[0], (*spacing)[1], (*spacing)[2]};
        else
          throw std::runtime_error("need --volume or --spacing");
        const Recist3D r3d = *max_offset >= 0
                                 ? estimate_recist3d(ann, sp, *max_offset)
                                 : estimate_recist3d(ann, sp);
        json j;
        j["extent"] = r3d.extent;
        j["estimates"] = json::array();
        for (const auto& [tau, est] : r3d.by_offset) {
          json item = annotation_to_json(est);
          item["offset"] = tau;
          j["estimates"].push_back(item);
        }
        std::ofstream f(*out);
        if (!f) throw std::runtime_error("cannot write " + *out);
        f << j.dump(2) << "\n";
      };
    });
  }

  // ---- train-appearance -------------------------------------------------
  {
    auto* cmd = app.add_subcommand(
        "train-appearance", "Train the appearance model on RECIST slices");
    auto lesions_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto rounds = std::make_shared<int>(0);
    cmd->add_option("--lesions", *lesions_path, "Lesion record list")->required();
    cmd->add_option("--out", *out, "Output model JSON")->required();
    cmd->add_option("--k", *rounds, "Self-paced rounds (0 = RECIST slices only)");
    add_train_flags(cmd);
    cmd->callback([&, lesions_path, out, rounds] {
      run = [&, lesions_path, out, rounds] {
        const auto lesions = load_lesions(read_lesion_records(*lesions_path));
        if (lesions.empty()) throw std::runtime_error("no loadable lesions");
        SelfPacedConfig cfg;
        cfg.max_rounds = *rounds;
        cfg.train = train_params;
        cfg.grabcut = gc_params;
        cfg.seed = seed;
        cfg.threads = threads;
        const auto result = selfpaced_run(lesions, cfg);
        save_appearance_model(result.models.back(), *out);
      };
    });
  }

  // ---- segment3d --------------------------------------------------------
  {
    auto* cmd = app.add_subcommand(
        "segment3d", "Self-paced training plus volumetric inference");
    auto lesions_path = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    auto rounds = std::make_shared<int>(2);
    auto beyond = std::make_shared<std::string>("skip");
    auto no_gc = std::make_shared<bool>(false);
    auto baseline = std::make_shared<bool>(false);
    cmd->add_option("--lesions", *lesions_path, "Lesion record list")->required();
    cmd->add_option("--out", *out_dir, "Output directory")->required();
    cmd->add_option("--k", *rounds, "Self-paced rounds");
    cmd->add_option("--beyond-extent", *beyond, "skip | model-only");
    cmd->add_flag("--no-gc", *no_gc, "Thresholded model output, no GrabCut");
    cmd->add_flag("--grabcut-3de", *baseline,
                  "Also emit the geometric GrabCut-3DE baseline");
    add_train_flags(cmd);
    add_grabcut_flags(cmd);
    cmd->callback([&, lesions_path, out_dir, rounds, beyond, no_gc, baseline] {
      run = [&, lesions_path, out_dir, rounds, beyond, no_gc, baseline] {
        const auto lesions = load_lesions(read_lesion_records(*lesions_path));
        if (lesions.empty()) throw std::runtime_error("no loadable lesions");
        SelfPacedConfig cfg;
        cfg.max_rounds = *rounds;
        cfg.train = train_params;
        cfg.grabcut = gc_params;
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.no_grabcut = *no_gc;
        if (*beyond == "skip")
          cfg.beyond_extent = SelfPacedConfig::BeyondExtent::skip;
        else if (*beyond == "model-only")
          cfg.beyond_extent = SelfPacedConfig::BeyondExtent::model_only;
        else
          throw std::runtime_error("--beyond-extent expects skip or model-only");
        fs::create_directories(*out_dir);
        const auto result = selfpaced_run(lesions, cfg);
        save_appearance_model(result.models.back(),
                              (fs::path(*out_dir) / "model.json").string());
        write_harvest_log(result.log,
                          (fs::path(*out_dir) / "harvest_log.json").string());
        for (const auto& lesion : lesions) {
          const Mask mask = segment_volume(lesion, result.models.back(), cfg);
          write_mask(mask,
                     (fs::path(*out_dir) / (lesion.id + "_mask")).string());
          if (*baseline) {
            const Mask base = grabcut_3de(lesion, cfg);
            write_mask(base,
                       (fs::path(*out_dir) / (lesion.id + "_3de")).string());
          }
        }
      };
    });
  }

  // ---- evaluate ---------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("evaluate", "Segmentation quality metrics");
    auto pred = std::make_shared<std::string>();
    auto gt = std::make_shared<std::string>();
    auto pairs = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    cmd->add_option("--pred", *pred, "Predicted mask");
    cmd->add_option("--gt", *gt, "Ground-truth mask");
    cmd->add_option("--pairs", *pairs,
                    "JSON list of {id, pred, gt} mask path pairs");
    cmd->add_option("--out", *out_dir, "Report directory")->required();
    cmd->callback([&, pred, gt, pairs, out_dir] {
      run = [&, pred, gt, pairs, out_dir] {
        std::vector<EvalRow> rows;
        if (!pairs->empty()) {
          std::ifstream f(*pairs);
          if (!f) throw std::runtime_error("cannot open " + *pairs);
          json j;
          f >> j;
          for (const auto& item : j)
            rows.push_back(evaluate_pair(
                item.value("id", std::to_string(rows.size())),
                read_mask(item.at("pred").get<std::string>()),
                read_mask(item.at("gt").get<std::string>())));
        } else if (!pred->empty() && !gt->empty()) {
          rows.push_back(
              evaluate_pair("lesion", read_mask(*pred), read_mask(*gt)));
        } else {
          throw std::runtime_error("need --pred/--gt or --pairs");
        }
        write_eval_report(rows, *out_dir);
      };
    });
  }

  // ---- degrade ----------------------------------------------------------
  {
    auto* cmd = app.add_subcommand(
        "degrade", "Synthesize clean/degraded training pairs");
    auto image_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto mode = std::make_shared<std::string>("denoise");
    auto slice = std::make_shared<int>(0);
    auto params = std::make_shared<DegradeParams>();
    cmd->add_option("--image", *image_path, "Input volume (slice as image)")
        ->required();
    cmd->add_option("--slice", *slice, "Slice index");
    cmd->add_option("--mode", *mode, "denoise | enhance");
    cmd->add_option("--sigma", params->noise_sigma, "Noise std (0..255 scale)");
    cmd->add_option("--scale", params->scale, "Downsample scale");
    cmd->add_option("--blur", params->blur_sigma, "Gaussian blur sigma");
    cmd->add_option("--kappa", params->contrast_kappa, "Contrast compression");
    cmd->add_option("--out", *out, "Output prefix")->required();
    cmd->callback([&, image_path, out, mode, slice, params] {
      run = [&, image_path, out, mode, slice, params] {
        const Volume vol = read_volume(*image_path);
        const Image2D img = slice_as_image(vol, *slice);
        params->seed = seed;
        ImagePair pair;
        if (*mode == "denoise") pair = make_denoise_pair(img, *params);
        else if (*mode == "enhance") pair = make_enhance_pair(img, *params);
        else throw std::runtime_error("--mode expects denoise or enhance");
        write_volume(image_to_volume(pair.degraded, vol.spacing_mm),
                     *out + "_degraded");
        write_volume(image_to_volume(pair.clean, vol.spacing_mm),
                     *out + "_clean");
      };
    });
  }

  // ---- enhance ----------------------------------------------------------
  {
    auto* cmd = app.add_subcommand(
        "enhance", "Classical denoise + boundary enhancement stack");
    auto image_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto slice = std::make_shared<int>(0);
    cmd->add_option("--image", *image_path, "Input volume")->required();
    cmd->add_option("--slice", *slice, "Slice index");
    cmd->add_option("--out", *out, "Output stack prefix")->required();
    cmd->callback([&, image_path, out, slice] {
      run = [&, image_path, out, slice] {
        const Volume vol = read_volume(*image_path);
        const Image2D img = slice_as_image(vol, *slice);
        const EnhanceStack stack = classical_enhance(img);
        // Stack written as a 3-slice volume: original, denoised, enhanced.
        write_volume(image_to_volume(stack_to_image(stack), vol.spacing_mm),
                     *out);
      };
    });
  }

  // ---- split ------------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("split", "Patient-level k-fold assignment");
    auto lesions_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto k = std::make_shared<int>(5);
    cmd->add_option("--lesions", *lesions_path, "Lesion record list")->required();
    cmd->add_option("--k", *k, "Fold count");
    cmd->add_option("--out", *out, "Output record list with folds")->required();
    cmd->callback([&, lesions_path, out, k] {
      run = [&, lesions_path, out, k] {
        auto records = read_lesion_records(*lesions_path);
        const auto folds = kfold_split(records, *k, seed);
        for (std::size_t i = 0; i < records.size(); ++i)
          records[i].fold = folds[i];
        write_lesion_records(records, *out);
      };
    });
  }

  // ---- experiment -------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("experiment", "Run a named experiment");
    auto name = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    auto phantoms = std::make_shared<int>(20);
    auto rounds = std::make_shared<int>(2);
    cmd->add_option("name", *name,
                    "trimap-modes | offset-curve | volume-change")
        ->required();
    cmd->add_option("--out", *out_dir, "Report directory")->required();
    cmd->add_option("--phantoms", *phantoms, "Phantom count");
    cmd->add_option("--k", *rounds, "Self-paced rounds");
    cmd->callback([&, name, out_dir, phantoms, rounds] {
      run = [&, name, out_dir, phantoms, rounds] {
        ExperimentConfig cfg;
        cfg.name = *name;
        cfg.out_dir = *out_dir;
        cfg.phantom_count = *phantoms;
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.selfpaced.max_rounds = *rounds;
        run_experiment(cfg);
      };
    });
  }

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    run();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
