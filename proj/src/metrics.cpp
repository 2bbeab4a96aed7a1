#include "lesionseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace lesionseg {

namespace {

void check_pair(const Mask& pred, const Mask& gt) {
  if (pred.dims != gt.dims) throw std::invalid_argument("mask dims mismatch");
  if (pred.spacing_mm != gt.spacing_mm)
    throw std::invalid_argument("mask spacing mismatch");
  require_binary(pred, "metrics");
  require_binary(gt, "metrics");
}

}  // namespace

ConfusionCounts confusion(const Mask& pred, const Mask& gt) {
  check_pair(pred, gt);
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    if (p && g) ++c.tp;
    else if (p && !g) ++c.fp;
    else if (!p && g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double dice(const Mask& pred, const Mask& gt) {
  const auto c = confusion(pred, gt);
  const double denom = 2.0 * c.tp + c.fp + c.fn;
  if (denom == 0.0) return 1.0;  // both empty
  return 2.0 * c.tp / denom;
}

std::pair<double, double> precision_recall(const Mask& pred, const Mask& gt) {
  const auto c = confusion(pred, gt);
  if (c.tp + c.fp + c.fn == 0) return {1.0, 1.0};  // both empty
  const double precision =
      c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / (c.tp + c.fp);
  const double recall =
      c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / (c.tp + c.fn);
  return {precision, recall};
}

double volumetric_similarity(const Mask& pred, const Mask& gt) {
  const auto c = confusion(pred, gt);
  const double denom = 2.0 * c.tp + c.fp + c.fn;
  if (denom == 0.0) return 1.0;
  return 1.0 - (static_cast<double>(c.fn) - static_cast<double>(c.fp)) / denom;
}

namespace {

// Foreground voxels with a background face neighbor (or volume edge);
// in-plane 4-neighborhood when the mask is a single slice.
std::vector<std::array<int, 3>> boundary_voxels(const Mask& m) {
  const int nx = m.dims[0], ny = m.dims[1], nz = m.dims[2];
  std::vector<std::array<int, 3>> out;
  const auto bg = [&](int x, int y, int z) {
    if (x < 0 || y < 0 || z < 0 || x >= nx || y >= ny || z >= nz) return true;
    return m.at(x, y, z) == 0;
  };
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        if (!m.at(x, y, z)) continue;
        bool edge = bg(x - 1, y, z) || bg(x + 1, y, z) || bg(x, y - 1, z) ||
                    bg(x, y + 1, z);
        if (nz > 1) edge = edge || bg(x, y, z - 1) || bg(x, y, z + 1);
        if (edge) out.push_back({x, y, z});
      }
  return out;
}

constexpr double kEdtInf = 1e20;

// 1D lower-envelope squared distance transform with physical sample spacing.
void dt1d_spaced(std::vector<double>& f, double step) {
  const int n = static_cast<int>(f.size());
  std::vector<double> d(n);
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  const double s2 = step * step;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s = ((f[q] + s2 * q * q) - (f[v[k]] + s2 * v[k] * v[k])) /
               (2.0 * s2 * (q - v[k]));
    while (s <= z[k]) {
      --k;
      s = ((f[q] + s2 * q * q) - (f[v[k]] + s2 * v[k] * v[k])) /
          (2.0 * s2 * (q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = step * (q - v[k]);
    d[q] = dq * dq + f[v[k]];
  }
  f = std::move(d);
}

// Exact anisotropic squared EDT to the given voxel set over the mask grid.
std::vector<double> edt3d(const std::vector<std::array<int, 3>>& sites,
                          const std::array<int, 3>& dims,
                          const std::array<double, 3>& spacing) {
  const int nx = dims[0], ny = dims[1], nz = dims[2];
  std::vector<double> dist(static_cast<std::size_t>(nx) * ny * nz, kEdtInf);
  const auto idx = [&](int x, int y, int z) {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  };
  for (const auto& s : sites) dist[idx(s[0], s[1], s[2])] = 0.0;

  std::vector<double> line;
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y) {
      line.assign(dist.begin() + idx(0, y, z), dist.begin() + idx(0, y, z) + nx);
      dt1d_spaced(line, spacing[0]);
      std::copy(line.begin(), line.end(), dist.begin() + idx(0, y, z));
    }
  for (int z = 0; z < nz; ++z)
    for (int x = 0; x < nx; ++x) {
      line.resize(ny);
      for (int y = 0; y < ny; ++y) line[y] = dist[idx(x, y, z)];
      dt1d_spaced(line, spacing[1]);
      for (int y = 0; y < ny; ++y) dist[idx(x, y, z)] = line[y];
    }
  if (nz > 1)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        line.resize(nz);
        for (int z = 0; z < nz; ++z) line[z] = dist[idx(x, y, z)];
        dt1d_spaced(line, spacing[2]);
        for (int z = 0; z < nz; ++z) dist[idx(x, y, z)] = line[z];
      }
  return dist;
}

double directed_mean_distance(const std::vector<std::array<int, 3>>& from,
                              const std::vector<double>& to_edt,
                              const std::array<int, 3>& dims) {
  double sum = 0.0;
  for (const auto& p : from) {
    const std::size_t i =
        (static_cast<std::size_t>(p[2]) * dims[1] + p[1]) * dims[0] + p[0];
    sum += std::sqrt(to_edt[i]);
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

double avg_hausdorff(const Mask& pred, const Mask& gt) {
  check_pair(pred, gt);
  const auto bp = boundary_voxels(pred);
  const auto bg = boundary_voxels(gt);
  if (bp.empty() || bg.empty())
    throw std::runtime_error("AVD undefined for an empty mask");
  const auto edt_gt = edt3d(bg, gt.dims, gt.spacing_mm);
  const auto edt_pred = edt3d(bp, pred.dims, pred.spacing_mm);
  const double d_pg = directed_mean_distance(bp, edt_gt, pred.dims);
  const double d_gp = directed_mean_distance(bg, edt_pred, gt.dims);
  return std::max(d_pg, d_gp);
}

double ellipsoid_volume(double length_mm, double width_mm) {
  if (length_mm < 0.0 || width_mm < 0.0)
    throw std::invalid_argument("negative axis length");
  return std::numbers::pi * length_mm * width_mm * width_mm / 6.0;
}

double ellipsoid_volume(const RecistAnnotation& ann, double sx, double sy) {
  return ellipsoid_volume(physical_length(ann.long_axis, sx, sy),
                          physical_length(ann.short_axis, sx, sy));
}

double mask_volume_mm3(const Mask& mask) {
  require_binary(mask, "mask_volume");
  const double voxel =
      mask.spacing_mm[0] * mask.spacing_mm[1] * mask.spacing_mm[2];
  return static_cast<double>(mask.foreground_count()) * voxel;
}

VolumeChangeReport volume_change_report(
    std::span<const VolumePairSample> reference,
    std::span<const VolumePairSample> method) {
  if (reference.size() != method.size())
    throw std::invalid_argument("reference/method pair counts differ");
  if (reference.size() < 2)
    throw std::invalid_argument("need at least 2 pairs for a slope");

  VolumeChangeReport rep;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    rep.reference_delta.push_back(reference[i].followup_mm3 -
                                  reference[i].baseline_mm3);
    rep.method_delta.push_back(method[i].followup_mm3 - method[i].baseline_mm3);
  }

  const std::size_t n = rep.reference_delta.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rep.reference_delta[i];
    my += rep.method_delta[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = rep.reference_delta[i] - mx;
    const double dy = rep.method_delta[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0)
    throw std::invalid_argument("reference deltas are constant; slope undefined");
  rep.slope = sxy / sxx;
  rep.intercept = my - rep.slope * mx;
  rep.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return rep;
}

}  // namespace lesionseg
