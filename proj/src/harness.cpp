#include "lesionseg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "lesionseg/imageops.hpp"
#include "lesionseg/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lesionseg {

namespace {

// Smooth direction-dependent radius perturbation for blob phantoms.
struct BlobPerturbation {
  std::array<std::array<double, 3>, 4> wave;
  std::array<double, 4> phase;
  std::array<double, 4> amp;

  static BlobPerturbation make(std::mt19937_64& rng) {
    BlobPerturbation b;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> freq(1.0, 2.5);
    std::uniform_real_distribution<double> ph(0.0, 2.0 * std::numbers::pi);
    double total = 0.0;
    for (int j = 0; j < 4; ++j) {
      double nx = u(rng), ny = u(rng), nz = u(rng);
      const double n = std::max(1e-9, std::sqrt(nx * nx + ny * ny + nz * nz));
      const double f = freq(rng);
      b.wave[j] = {f * nx / n, f * ny / n, f * nz / n};
      b.phase[j] = ph(rng);
      b.amp[j] = u(rng);
      total += std::abs(b.amp[j]);
    }
    for (auto& a : b.amp) a /= total;
    return b;
  }

  double operator()(double ux, double uy, double uz) const {
    double s = 0.0;
    for (int j = 0; j < 4; ++j)
      s += amp[j] * std::cos(wave[j][0] * ux + wave[j][1] * uy +
                             wave[j][2] * uz + phase[j]);
    return s;
  }
};

}  // namespace

Phantom generate_phantom(const PhantomSpec& spec) {
  const auto [nx, ny, nz] = spec.dims;
  const auto [sx, sy, sz] = spec.spacing_mm;
  const auto [a, b, c] = spec.semi_axes_mm;
  if (a <= 0 || b <= 0 || c <= 0)
    throw std::invalid_argument("semi-axes must be positive");
  const double slack = spec.shape == PhantomShape::blob
                           ? 1.0 + spec.blob_amplitude
                           : 1.0;
  if (a * slack > 0.5 * nx * sx || b * slack > 0.5 * ny * sy ||
      c * slack > 0.5 * nz * sz)
    throw std::invalid_argument("lesion exceeds volume");
  if (spec.lesion_intensity < 0 || spec.lesion_intensity > 1 ||
      spec.background_intensity < 0 || spec.background_intensity > 1)
    throw std::invalid_argument("intensities must lie in [0, 1]");

  std::mt19937_64 rng(spec.seed);
  const BlobPerturbation blob = BlobPerturbation::make(rng);

  // Integer voxel center: keeps the digital volume close to analytic and
  // the maximal cross-section on a single unambiguous slice.
  const double cx = (nx - 1) / 2, cy = (ny - 1) / 2, cz = (nz - 1) / 2;
  const double p = spec.shape == PhantomShape::superellipsoid ? spec.exponent : 2.0;

  Phantom ph;
  ph.gt_mask.dims = spec.dims;
  ph.gt_mask.spacing_mm = spec.spacing_mm;
  ph.gt_mask.data.assign(ph.gt_mask.voxel_count(), 0);
  ph.volume.dims = spec.dims;
  ph.volume.spacing_mm = spec.spacing_mm;
  ph.volume.dtype = ScalarType::float32;
  ph.volume.data.resize(ph.volume.voxel_count());

  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const double ux = (x - cx) * sx / a;
        const double uy = (y - cy) * sy / b;
        const double uz = (z - cz) * sz / c;
        double rho = std::pow(std::pow(std::abs(ux), p) +
                                  std::pow(std::abs(uy), p) +
                                  std::pow(std::abs(uz), p),
                              1.0 / p);
        double bound = 1.0;
        if (spec.shape == PhantomShape::blob) {
          const double r = std::max(1e-9, std::sqrt(ux * ux + uy * uy + uz * uz));
          bound = 1.0 + spec.blob_amplitude * blob(ux / r, uy / r, uz / r);
        }
        if (rho <= bound) ph.gt_mask.at(x, y, z) = 1;
      }
    }
  }

  for (std::size_t i = 0; i < ph.volume.data.size(); ++i)
    ph.volume.data[i] = static_cast<float>(ph.gt_mask.data[i]
                                               ? spec.lesion_intensity
                                               : spec.background_intensity);

  // Distractor blobs of lesion intensity next to (never inside) the lesion.
  if (spec.clutter_count > 0) {
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> rad_frac(0.25, 0.45);
    std::uniform_real_distribution<double> gap(1.05, 1.35);
    std::uniform_real_distribution<double> dz_off(-2.0, 2.0);
    for (int j = 0; j < spec.clutter_count; ++j) {
      const double th = angle(rng);
      const double cr = rad_frac(rng) * a;
      const double dist = (a + cr) * gap(rng);
      const double ox = cx + dist * std::cos(th) / sx;
      const double oy = cy + dist * std::sin(th) / sy;
      const double oz = cz + dz_off(rng) / sz;
      for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
          for (int x = 0; x < nx; ++x) {
            if (ph.gt_mask.at(x, y, z)) continue;
            const double dx = (x - ox) * sx, dy = (y - oy) * sy,
                         dzv = (z - oz) * sz;
            if (dx * dx + dy * dy + dzv * dzv <= cr * cr)
              ph.volume.at(x, y, z) = static_cast<float>(spec.lesion_intensity);
          }
    }
  }
  if (spec.edge_blur_px > 0.0) {
    // In-plane boundary blur; the ground truth stays the clean indicator.
    const std::size_t plane = static_cast<std::size_t>(nx) * ny;
    for (int z = 0; z < nz; ++z) {
      const Image2D blurred = gaussian_blur(ph.volume.slice(z), spec.edge_blur_px);
      std::copy(blurred.data.begin(), blurred.data.end(),
                ph.volume.data.begin() + static_cast<std::ptrdiff_t>(plane) * z);
    }
  }
  if (spec.bias_field_amp > 0.0) {
    // Anatomy-scale intensity drift: two low-frequency cosine waves.
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::array<std::array<double, 4>, 2> waves;
    for (auto& wv : waves) {
      const double kx = u(rng) * 2.0 * std::numbers::pi / nx;
      const double ky = u(rng) * 2.0 * std::numbers::pi / ny;
      const double kz = u(rng) * 2.0 * std::numbers::pi / nz;
      wv = {kx, ky, kz, phase(rng)};
    }
    for (int z = 0; z < nz; ++z)
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
          double field = 0.0;
          for (const auto& wv : waves)
            field += std::cos(wv[0] * x + wv[1] * y + wv[2] * z + wv[3]);
          ph.volume.at(x, y, z) += static_cast<float>(
              0.5 * spec.bias_field_amp * field);
        }
  }
  if (spec.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (auto& v : ph.volume.data)
      v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
  }
  for (auto& v : ph.volume.data) v = std::clamp(v, 0.0f, 1.0f);

  ph.annotation = mask_to_recist(ph.gt_mask);
  ph.annotation.lesion_id = "phantom-" + std::to_string(spec.seed);
  ph.annotation.patient_id = ph.annotation.lesion_id;
  return ph;
}

std::vector<int> kfold_split(const std::vector<LesionRecord>& lesions, int k,
                             std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k must be >= 2");
  std::map<std::string, int> patient_fold;
  for (const auto& l : lesions) patient_fold.emplace(l.annotation.patient_id, -1);
  if (patient_fold.size() < static_cast<std::size_t>(k))
    throw std::runtime_error("fewer patients than folds");

  std::vector<std::string> patients;
  patients.reserve(patient_fold.size());
  for (const auto& [id, _] : patient_fold) patients.push_back(id);
  std::mt19937_64 rng(seed);
  std::shuffle(patients.begin(), patients.end(), rng);
  for (std::size_t i = 0; i < patients.size(); ++i)
    patient_fold[patients[i]] = static_cast<int>(i % k);

  std::vector<int> folds;
  folds.reserve(lesions.size());
  for (const auto& l : lesions)
    folds.push_back(patient_fold.at(l.annotation.patient_id));
  return folds;
}

// ---- Experiments ---------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct Stats {
  double mean = 0.0, stdev = 0.0;
  std::size_t n = 0;
};

Stats stats_of(const std::vector<double>& v) {
  Stats s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  for (double x : v) s.stdev += (x - s.mean) * (x - s.mean);
  s.stdev = v.size() > 1 ? std::sqrt(s.stdev / (static_cast<double>(v.size()) - 1))
                         : 0.0;
  return s;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

// ROI-slice crop of the ground truth aligned with an RoiVolume.
Mask gt_roi_slice(const Mask& gt, const RoiVolume& roi, int z) {
  Mask m;
  m.dims = {roi.vol.dims[0], roi.vol.dims[1], 1};
  m.spacing_mm = gt.spacing_mm;
  m.data.resize(m.voxel_count());
  for (int y = 0; y < m.dims[1]; ++y)
    for (int x = 0; x < m.dims[0]; ++x)
      m.at(x, y, 0) = gt.at(roi.x0 + x, roi.y0 + y, z);
  return m;
}

Mask bitmap_to_mask(const Bitmap& bm, const std::array<double, 3>& spacing) {
  Mask m;
  m.dims = {bm.width, bm.height, 1};
  m.spacing_mm = spacing;
  m.data = bm.data;
  return m;
}

PhantomSpec ellipse_spec(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ua(8.0, 13.0);
  std::uniform_real_distribution<double> ratio(0.6, 0.95);
  std::uniform_real_distribution<double> uc(4.0, 7.0);
  PhantomSpec spec;
  spec.shape = PhantomShape::ellipsoid;
  const double a = ua(rng);
  spec.semi_axes_mm = {a, a * ratio(rng), uc(rng)};
  spec.lesion_intensity = 0.75;
  spec.background_intensity = 0.25;
  spec.noise_std = 0.05;  // contrast 0.5 = 10x noise
  spec.dims = {72, 72, 20};
  spec.seed = seed;
  return spec;
}

PhantomSpec superellipsoid_spec(std::uint64_t seed) {
  PhantomSpec spec = ellipse_spec(seed);
  spec.shape = PhantomShape::superellipsoid;
  spec.exponent = 4.0;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> uc(5.5, 7.5);
  spec.semi_axes_mm[2] = uc(rng);
  spec.dims = {72, 72, 24};
  return spec;
}

void experiment_trimap_modes(const ExperimentConfig& config) {
  const std::array<std::pair<TrimapMode, const char*>, 4> modes{{
      {TrimapMode::RecistR, "recist-r"},
      {TrimapMode::BboxInner, "bbox-inner"},
      {TrimapMode::BboxPlain, "bbox-plain"},
      {TrimapMode::RecistDilateOnly, "recist-dilate"},
  }};
  std::map<std::string, std::vector<double>> dices, precisions, recalls;

  for (int i = 0; i < config.phantom_count; ++i) {
    const Phantom ph = generate_phantom(ellipse_spec(config.seed * 1000 + i));
    const RoiVolume roi = crop_and_window(ph.volume, ph.annotation);
    const int r = roi.ann.slice_index;
    const Image2D image = roi.vol.slice(r);
    const Mask gt = gt_roi_slice(ph.gt_mask, roi, r);

    for (const auto& [mode, name] : modes) {
      const Trimap tri =
          trimap_from_bbox(roi.ann, roi.vol.dims[0], roi.vol.dims[1], mode);
      Bitmap mask;
      if (mode == TrimapMode::RecistDilateOnly) {
        // The dilated RECIST itself is the label map; no GrabCut.
        mask = Bitmap(tri.width, tri.height);
        for (std::size_t px = 0; px < tri.data.size(); ++px)
          mask.data[px] = tri.data[px] == TrimapLabel::FG ? 1 : 0;
      } else {
        GrabCutParams gp = config.selfpaced.grabcut;
        gp.seed = config.seed;
        mask = grabcut_run(image, tri, gp).mask;
      }
      const Mask pred = bitmap_to_mask(mask, gt.spacing_mm);
      dices[name].push_back(dice(pred, gt));
      const auto [prec, rec] = precision_recall(pred, gt);
      precisions[name].push_back(prec);
      recalls[name].push_back(rec);
    }
  }

  auto csv = open_out(fs::path(config.out_dir) / "trimap_modes.csv");
  csv << "mode,n,dice_mean,dice_std,precision_mean,precision_std,"
         "recall_mean,recall_std\n";
  json agg;
  for (const auto& [mode, name] : modes) {
    const Stats d = stats_of(dices[name]);
    const Stats p = stats_of(precisions[name]);
    const Stats r = stats_of(recalls[name]);
    csv << name << ',' << d.n << ',' << fmt(d.mean) << ',' << fmt(d.stdev)
        << ',' << fmt(p.mean) << ',' << fmt(p.stdev) << ',' << fmt(r.mean)
        << ',' << fmt(r.stdev) << "\n";
    agg[name] = {{"dice", {{"mean", d.mean}, {"std", d.stdev}}},
                 {"precision", {{"mean", p.mean}, {"std", p.stdev}}},
                 {"recall", {{"mean", r.mean}, {"std", r.stdev}}},
                 {"n", d.n}};
  }
  auto jf = open_out(fs::path(config.out_dir) / "trimap_modes.json");
  jf << agg.dump(2) << "\n";
}

void experiment_offset_curve(const ExperimentConfig& config) {
  std::vector<Phantom> phantoms;
  std::vector<LesionData> lesions;
  for (int i = 0; i < config.phantom_count; ++i) {
    phantoms.push_back(
        generate_phantom(superellipsoid_spec(config.seed * 1000 + i)));
    lesions.push_back(
        {phantoms.back().volume, phantoms.back().annotation,
         phantoms.back().annotation.lesion_id});
  }

  SelfPacedConfig sp = config.selfpaced;
  sp.seed = config.seed;
  sp.threads = config.threads;
  const SelfPacedResult trained = selfpaced_run(lesions, sp);
  const AppearanceModel& model = trained.models.back();

  constexpr int kMaxOffset = 6;
  std::map<int, std::vector<double>> wsss_dice, gc3d_dice;
  for (std::size_t i = 0; i < lesions.size(); ++i) {
    const Mask wsss = segment_volume(lesions[i], model, sp);
    const Mask gc3d = grabcut_3de(lesions[i], sp);
    const int r = lesions[i].annotation.slice_index;
    for (int tau = -kMaxOffset; tau <= kMaxOffset; ++tau) {
      const int z = r + tau;
      if (z < 0 || z >= phantoms[i].gt_mask.dims[2]) continue;
      Mask gt_slice, wsss_slice, gc3d_slice;
      gt_slice.dims = wsss_slice.dims = gc3d_slice.dims = {
          phantoms[i].gt_mask.dims[0], phantoms[i].gt_mask.dims[1], 1};
      gt_slice.spacing_mm = wsss_slice.spacing_mm = gc3d_slice.spacing_mm =
          phantoms[i].gt_mask.spacing_mm;
      const std::size_t plane = gt_slice.voxel_count();
      const auto offset = static_cast<std::ptrdiff_t>(plane) * z;
      gt_slice.data.assign(phantoms[i].gt_mask.data.begin() + offset,
                           phantoms[i].gt_mask.data.begin() + offset + plane);
      if (gt_slice.foreground_count() == 0) continue;
      wsss_slice.data.assign(wsss.data.begin() + offset,
                             wsss.data.begin() + offset + plane);
      gc3d_slice.data.assign(gc3d.data.begin() + offset,
                             gc3d.data.begin() + offset + plane);
      wsss_dice[tau].push_back(dice(wsss_slice, gt_slice));
      gc3d_dice[tau].push_back(dice(gc3d_slice, gt_slice));
    }
  }

  auto csv = open_out(fs::path(config.out_dir) / "offset_curve.csv");
  csv << "offset,n,wsss_dice_mean,grabcut3de_dice_mean\n";
  json agg = json::array();
  for (int tau = -kMaxOffset; tau <= kMaxOffset; ++tau) {
    const Stats w = stats_of(wsss_dice[tau]);
    const Stats g = stats_of(gc3d_dice[tau]);
    csv << tau << ',' << w.n << ',' << fmt(w.mean) << ',' << fmt(g.mean)
        << "\n";
    agg.push_back({{"offset", tau},
                   {"n", w.n},
                   {"wsss_dice", w.mean},
                   {"grabcut3de_dice", g.mean}});
  }
  auto jf = open_out(fs::path(config.out_dir) / "offset_curve.json");
  jf << agg.dump(2) << "\n";
}

void experiment_volume_change(const ExperimentConfig& config) {
  std::vector<VolumePairSample> reference, recist_est, wsss_est;
  std::vector<Phantom> baselines, followups;
  std::vector<LesionData> lesions;

  for (int i = 0; i < config.phantom_count; ++i) {
    PhantomSpec base = superellipsoid_spec(config.seed * 1000 + i);
    std::mt19937_64 rng(base.seed ^ 0xabcdef12345ull);
    std::uniform_real_distribution<double> inplane(1.0, 1.08);
    std::uniform_real_distribution<double> axial(1.25, 1.5);
    PhantomSpec follow = base;
    follow.semi_axes_mm[0] *= inplane(rng);
    follow.semi_axes_mm[1] *= inplane(rng);
    follow.semi_axes_mm[2] *= axial(rng);  // growth mostly off-plane
    follow.seed = base.seed + 500000;

    baselines.push_back(generate_phantom(base));
    followups.push_back(generate_phantom(follow));
    reference.push_back({mask_volume_mm3(baselines.back().gt_mask),
                         mask_volume_mm3(followups.back().gt_mask)});
    const auto& sp = base.spacing_mm;
    recist_est.push_back(
        {ellipsoid_volume(baselines.back().annotation, sp[0], sp[1]),
         ellipsoid_volume(followups.back().annotation, sp[0], sp[1])});
    lesions.push_back({baselines.back().volume, baselines.back().annotation,
                       "base-" + std::to_string(i)});
    lesions.push_back({followups.back().volume, followups.back().annotation,
                       "follow-" + std::to_string(i)});
  }

  SelfPacedConfig sp = config.selfpaced;
  sp.seed = config.seed;
  sp.threads = config.threads;
  sp.max_rounds = std::min(sp.max_rounds, 1);  // keep the report affordable
  const SelfPacedResult trained = selfpaced_run(lesions, sp);
  for (int i = 0; i < config.phantom_count; ++i) {
    const Mask base_seg =
        segment_volume(lesions[2 * i], trained.models.back(), sp);
    const Mask follow_seg =
        segment_volume(lesions[2 * i + 1], trained.models.back(), sp);
    wsss_est.push_back(
        {mask_volume_mm3(base_seg), mask_volume_mm3(follow_seg)});
  }

  const auto recist_rep = volume_change_report(reference, recist_est);
  const auto wsss_rep = volume_change_report(reference, wsss_est);

  auto csv = open_out(fs::path(config.out_dir) / "volume_change.csv");
  csv << "pair,reference_delta_mm3,recist_delta_mm3,wsss_delta_mm3\n";
  for (int i = 0; i < config.phantom_count; ++i)
    csv << i << ',' << fmt(recist_rep.reference_delta[i]) << ','
        << fmt(recist_rep.method_delta[i]) << ','
        << fmt(wsss_rep.method_delta[i]) << "\n";

  json agg{{"recist",
            {{"slope", recist_rep.slope},
             {"intercept", recist_rep.intercept},
             {"r2", recist_rep.r2}}},
           {"wsss",
            {{"slope", wsss_rep.slope},
             {"intercept", wsss_rep.intercept},
             {"r2", wsss_rep.r2}}}};
  auto jf = open_out(fs::path(config.out_dir) / "volume_change.json");
  jf << agg.dump(2) << "\n";
}

}  // namespace

void run_experiment(const ExperimentConfig& config) {
  if (config.out_dir.empty())
    throw std::invalid_argument("experiment needs an output directory");
  fs::create_directories(config.out_dir);
  if (config.name == "trimap-modes") return experiment_trimap_modes(config);
  if (config.name == "offset-curve") return experiment_offset_curve(config);
  if (config.name == "volume-change") return experiment_volume_change(config);
  throw std::invalid_argument("unknown experiment '" + config.name + "'");
}

}  // namespace lesionseg
