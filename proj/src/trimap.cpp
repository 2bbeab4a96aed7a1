#include "lesionseg/trimap.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lesionseg/imageops.hpp"

namespace lesionseg {

std::size_t Trimap::count(TrimapLabel l) const {
  return static_cast<std::size_t>(
      std::count(data.begin(), data.end(), l));
}

namespace {

void draw_line(Bitmap& bm, Point2 a, Point2 b) {
  int x0 = static_cast<int>(std::lround(a.x));
  int y0 = static_cast<int>(std::lround(a.y));
  const int x1 = static_cast<int>(std::lround(b.x));
  const int y1 = static_cast<int>(std::lround(b.y));
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    bm.at(x0, y0) = 1;
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) { err += dy; x0 += sx; }
    if (e2 <= dx) { err += dx; y0 += sy; }
  }
}

// Dilate the set until it covers target_px pixels (3x3, 8-connected
// element). The final ring is trimmed back to the target, dropping its
// farthest-from-seed pixels first, so the area lands on the target without
// overshooting by a full ring or skewing to one side.
void dilate_to_area(Bitmap& bm, std::size_t target_px) {
  const std::size_t total = bm.data.size();
  const auto seed_dist = squared_distance_transform(bm);
  std::size_t area = bm.count();
  while (area < target_px && area < total) {
    const Bitmap prev = bm;
    dilate3x3(bm);
    std::size_t grown = bm.count();
    if (grown == area) break;  // saturated
    if (grown > target_px) {
      std::vector<std::size_t> ring;
      for (std::size_t i = 0; i < bm.data.size(); ++i)
        if (bm.data[i] && !prev.data[i]) ring.push_back(i);
      std::stable_sort(ring.begin(), ring.end(),
                       [&](std::size_t a, std::size_t b) {
                         return seed_dist[a] > seed_dist[b];
                       });
      std::size_t excess = grown - target_px;
      for (std::size_t k = 0; k < excess; ++k) bm.data[ring[k]] = 0;
      grown = target_px;
    }
    area = grown;
  }
}

// PFG where the FG set is at least as close as the BG set, PBG otherwise.
void split_uncertain(Trimap& t, const Bitmap& fg, const Bitmap& bg) {
  const bool have_bg = bg.count() > 0;
  const auto d_fg = squared_distance_transform(fg);
  const auto d_bg = have_bg ? squared_distance_transform(bg)
                            : std::vector<double>();
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    if (t.data[i] == TrimapLabel::FG || t.data[i] == TrimapLabel::BG) continue;
    const bool near_fg = !have_bg || d_fg[i] <= d_bg[i];
    t.data[i] = near_fg ? TrimapLabel::PFG : TrimapLabel::PBG;
  }
}

Bitmap label_bitmap(const Trimap& t, TrimapLabel l) {
  Bitmap bm(t.width, t.height);
  for (std::size_t i = 0; i < t.data.size(); ++i)
    bm.data[i] = t.data[i] == l ? 1 : 0;
  return bm;
}

struct IntRect {
  int x0, y0, x1, y1;  // half-open
  bool contains(int x, int y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
};

// Integer pixel rect for the padded RECIST bounding box.
IntRect padded_bbox(const RecistAnnotation& ann, int width, int height,
                    double pad_factor) {
  double bx0 = ann.long_axis[0].x, bx1 = bx0, by0 = ann.long_axis[0].y,
         by1 = by0;
  for (const auto& seg : {ann.long_axis, ann.short_axis}) {
    for (const auto& p : seg) {
      bx0 = std::min(bx0, p.x);
      bx1 = std::max(bx1, p.x);
      by0 = std::min(by0, p.y);
      by1 = std::max(by1, p.y);
    }
  }
  const double cx = 0.5 * (bx0 + bx1), cy = 0.5 * (by0 + by1);
  const double hx = 0.5 * (bx1 - bx0) * pad_factor;
  const double hy = 0.5 * (by1 - by0) * pad_factor;
  IntRect r{static_cast<int>(std::lround(cx - hx)),
            static_cast<int>(std::lround(cy - hy)),
            static_cast<int>(std::lround(cx + hx)),
            static_cast<int>(std::lround(cy + hy))};
  r.x0 = std::clamp(r.x0, 0, width);
  r.x1 = std::clamp(r.x1, r.x0, width);
  r.y0 = std::clamp(r.y0, 0, height);
  r.y1 = std::clamp(r.y1, r.y0, height);
  return r;
}

}  // namespace

Bitmap rasterize_recist(const RecistAnnotation& ann, int width, int height) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("raster dims must be positive");
  for (const auto& seg : {ann.long_axis, ann.short_axis}) {
    for (const auto& p : seg) {
      const int x = static_cast<int>(std::lround(p.x));
      const int y = static_cast<int>(std::lround(p.y));
      if (x < 0 || y < 0 || x >= width || y >= height)
        throw std::invalid_argument("RECIST endpoint outside raster");
    }
  }
  Bitmap bm(width, height);
  draw_line(bm, ann.long_axis[0], ann.long_axis[1]);
  draw_line(bm, ann.short_axis[0], ann.short_axis[1]);
  return bm;
}

Trimap trimap_from_recist(const RecistAnnotation& ann, int width, int height) {
  if (width < 4 || height < 4)
    throw std::invalid_argument("ROI smaller than 4x4");
  const std::size_t total = static_cast<std::size_t>(width) * height;

  Bitmap fg = rasterize_recist(ann, width, height);
  if (fg.count() == 0)
    throw std::invalid_argument("empty RECIST raster");
  dilate_to_area(fg, static_cast<std::size_t>(std::ceil(0.10 * total)));

  // Outer 50% of the ROI area: complement of a centered rectangle scaled by
  // sqrt(1/2) per dimension.
  const int inner_w = static_cast<int>(std::lround(width * std::sqrt(0.5)));
  const int inner_h = static_cast<int>(std::lround(height * std::sqrt(0.5)));
  const int ix0 = (width - inner_w) / 2, iy0 = (height - inner_h) / 2;
  const IntRect inner{ix0, iy0, ix0 + inner_w, iy0 + inner_h};

  Trimap t(width, height, TrimapLabel::PFG);
  Bitmap bg(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (fg.at(x, y)) {
        t.at(x, y) = TrimapLabel::FG;
      } else if (!inner.contains(x, y)) {
        t.at(x, y) = TrimapLabel::BG;
        bg.at(x, y) = 1;
      }
    }
  }
  split_uncertain(t, fg, bg);
  return t;
}

Trimap trimap_from_bbox(const RecistAnnotation& ann, int width, int height,
                        TrimapMode mode) {
  if (width < 4 || height < 4)
    throw std::invalid_argument("ROI smaller than 4x4");
  if (mode == TrimapMode::RecistR) return trimap_from_recist(ann, width, height);
  const IntRect bbox = padded_bbox(ann, width, height, 1.25);
  const std::size_t bbox_area =
      static_cast<std::size_t>(bbox.x1 - bbox.x0) * (bbox.y1 - bbox.y0);
  if (bbox_area == 0) throw std::invalid_argument("degenerate RECIST bbox");

  Trimap t(width, height, TrimapLabel::PFG);
  Bitmap bg(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (!bbox.contains(x, y)) {
        t.at(x, y) = TrimapLabel::BG;
        bg.at(x, y) = 1;
      }

  switch (mode) {
    case TrimapMode::BboxPlain:
      // Inside stays PFG; no hard foreground seeds.
      return t;
    case TrimapMode::BboxInner: {
      const double s = std::sqrt(0.20);
      const int iw = static_cast<int>(std::lround((bbox.x1 - bbox.x0) * s));
      const int ih = static_cast<int>(std::lround((bbox.y1 - bbox.y0) * s));
      const int ix0 = bbox.x0 + (bbox.x1 - bbox.x0 - iw) / 2;
      const int iy0 = bbox.y0 + (bbox.y1 - bbox.y0 - ih) / 2;
      Bitmap fg(width, height);
      for (int y = iy0; y < iy0 + ih; ++y)
        for (int x = ix0; x < ix0 + iw; ++x) {
          t.at(x, y) = TrimapLabel::FG;
          fg.at(x, y) = 1;
        }
      split_uncertain(t, fg, bg);
      return t;
    }
    case TrimapMode::RecistDilateOnly: {
      Bitmap fg = rasterize_recist(ann, width, height);
      dilate_to_area(fg, static_cast<std::size_t>(std::ceil(0.20 * bbox_area)));
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
          if (fg.at(x, y)) t.at(x, y) = TrimapLabel::FG;
      // Remainder is uncertain and excluded from exported labels.
      for (auto& l : t.data)
        if (l == TrimapLabel::PFG) l = TrimapLabel::PBG;
      t.uncertain_ignored = true;
      return t;
    }
    default:
      throw std::invalid_argument("unknown trimap mode");
  }
}

std::optional<BinarizeResult> binarize_to_cover(const Image2D& prob,
                                                const RecistAnnotation& ann) {
  const Bitmap raster = rasterize_recist(ann, prob.width, prob.height);
  std::vector<double> on_raster;
  for (int y = 0; y < prob.height; ++y)
    for (int x = 0; x < prob.width; ++x)
      if (raster.at(x, y)) on_raster.push_back(prob.at(x, y));
  if (on_raster.empty())
    throw std::invalid_argument("empty RECIST raster");
  if (std::all_of(on_raster.begin(), on_raster.end(),
                  [](double v) { return v == 0.0; }))
    return std::nullopt;  // model found nothing

  const std::size_t need = (on_raster.size() + 1) / 2;
  std::nth_element(on_raster.begin(), on_raster.begin() + (need - 1),
                   on_raster.end(), std::greater<double>());
  const double threshold = on_raster[need - 1];

  BinarizeResult res;
  res.threshold = threshold;
  res.mask = Bitmap(prob.width, prob.height);
  for (int y = 0; y < prob.height; ++y)
    for (int x = 0; x < prob.width; ++x)
      res.mask.at(x, y) = prob.at(x, y) >= threshold ? 1 : 0;
  return res;
}

namespace {

// Component stats over a labeling: raster overlap and mean probability.
struct ComponentStats {
  std::vector<char> overlaps;
  std::vector<double> mean_prob;
};

ComponentStats component_stats(const std::vector<int>& labels, int count,
                               const Bitmap& raster, const Image2D& prob) {
  ComponentStats st;
  st.overlaps.assign(count, 0);
  st.mean_prob.assign(count, 0.0);
  std::vector<std::size_t> sizes(count, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    if (c < 0) continue;
    ++sizes[c];
    st.mean_prob[c] += prob.data[i];
    if (raster.data[i]) st.overlaps[c] = 1;
  }
  for (int c = 0; c < count; ++c)
    if (sizes[c] > 0) st.mean_prob[c] /= static_cast<double>(sizes[c]);
  return st;
}

}  // namespace

std::optional<Trimap> trimap_from_model(const Image2D& prob,
                                        const RecistAnnotation& slice_recist,
                                        const ModelTrimapParams& params) {
  const auto bin = binarize_to_cover(prob, slice_recist);
  if (!bin) return std::nullopt;
  const int w = prob.width, h = prob.height;
  const Bitmap raster = rasterize_recist(slice_recist, w, h);

  int n_fg = 0;
  const auto fg_labels = connected_components(bin->mask, 8, &n_fg);
  const auto fg_stats = component_stats(fg_labels, n_fg, raster, prob);

  // Background regions: components of the confidently-background set
  // (foreground probability below the threshold). Raster pixels are always
  // foreground and are carved out first, which keeps "no overlap with the
  // RECIST" intact even when a (possibly over-long) axis pokes past the
  // lesion. Componentizing the whole binarization complement instead would
  // fuse the under-threshold lesion rim with the exterior on sharply
  // calibrated maps and clamp foreground away.
  Bitmap low(w, h);
  for (std::size_t i = 0; i < low.data.size(); ++i)
    low.data[i] =
        (!raster.data[i] && prob.data[i] < params.background_prob) ? 1 : 0;
  int n_low = 0;
  const auto low_labels = connected_components(low, 8, &n_low);

  Trimap t(w, h, TrimapLabel::PFG);
  Bitmap fg(w, h), bg(w, h);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    const int cf = fg_labels[i];
    if ((cf >= 0 && fg_stats.overlaps[cf]) || raster.data[i]) {
      t.data[i] = TrimapLabel::FG;
      fg.data[i] = 1;
      continue;
    }
    if (low_labels[i] >= 0) {
      t.data[i] = TrimapLabel::BG;
      bg.data[i] = 1;
    }
  }
  split_uncertain(t, fg, bg);
  return t;
}

Trimap fallback_labels(const Image2D& prob, const RecistAnnotation& slice_recist,
                       const ModelTrimapParams& params) {
  const int w = prob.width, h = prob.height;
  const Bitmap raster = rasterize_recist(slice_recist, w, h);

  // Strict threshold: an uninformative flat-0.5 map predicts nothing.
  Bitmap predicted(w, h);
  for (std::size_t i = 0; i < predicted.data.size(); ++i)
    predicted.data[i] = prob.data[i] > 0.5f ? 1 : 0;
  int n_fg = 0;
  const auto fg_labels = connected_components(predicted, 8, &n_fg);
  const auto fg_stats = component_stats(fg_labels, n_fg, raster, prob);

  Bitmap complement(w, h);
  for (std::size_t i = 0; i < complement.data.size(); ++i)
    complement.data[i] = predicted.data[i] ? 0 : 1;
  int n_bg = 0;
  const auto bg_labels = connected_components(complement, 8, &n_bg);
  const auto bg_stats = component_stats(bg_labels, n_bg, raster, prob);

  Trimap t(w, h, TrimapLabel::PBG);
  t.uncertain_ignored = true;
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    const int cf = fg_labels[i];
    if ((cf >= 0 && fg_stats.overlaps[cf]) || raster.data[i]) {
      t.data[i] = TrimapLabel::FG;
      continue;
    }
    const int cb = bg_labels[i];
    if (cb >= 0 && !bg_stats.overlaps[cb] &&
        bg_stats.mean_prob[cb] < params.background_prob)
      t.data[i] = TrimapLabel::BG;
  }
  return t;
}

Mask trimap_to_raster(const Trimap& t, const std::array<double, 3>& spacing) {
  Mask m;
  m.dims = {t.width, t.height, 1};
  m.spacing_mm = spacing;
  m.data.resize(t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    const TrimapLabel l = t.data[i];
    if (t.uncertain_ignored &&
        (l == TrimapLabel::PFG || l == TrimapLabel::PBG))
      m.data[i] = kIgnoreValue;
    else
      m.data[i] = static_cast<std::uint8_t>(l);
  }
  return m;
}

LabeledSlice trimap_training_labels(const Trimap& t) {
  LabeledSlice out;
  out.labels = Bitmap(t.width, t.height);
  out.ignore = Bitmap(t.width, t.height);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    switch (t.data[i]) {
      case TrimapLabel::FG: out.labels.data[i] = 1; break;
      case TrimapLabel::BG: break;
      default: out.ignore.data[i] = 1; break;
    }
  }
  return out;
}

}  // namespace lesionseg
