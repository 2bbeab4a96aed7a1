#include "lesionseg/volume_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "lesionseg/imageops.hpp"

static_assert(std::endian::native == std::endian::little,
              "raw payloads are little-endian");

namespace fs = std::filesystem;
using nlohmann::json;

namespace lesionseg {

Image2D Volume::slice(int z) const {
  Image2D img(dims[0], dims[1], 1);
  const std::size_t plane = static_cast<std::size_t>(dims[0]) * dims[1];
  std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(plane) * z, plane,
              img.data.begin());
  return img;
}

std::size_t Mask::foreground_count() const {
  return static_cast<std::size_t>(
      std::count_if(data.begin(), data.end(), [](auto v) { return v != 0; }));
}

void require_binary(const Mask& m, const char* what) {
  for (auto v : m.data)
    if (v > 1)
      throw std::runtime_error(std::string(what) +
                               ": mask values must be 0 or 1");
}

double long_axis_length_px(const RecistAnnotation& ann) {
  return norm(ann.long_axis[1] - ann.long_axis[0]);
}

double short_axis_length_px(const RecistAnnotation& ann) {
  return norm(ann.short_axis[1] - ann.short_axis[0]);
}

Point2 axis_intersection(const RecistAnnotation& ann) {
  // A zero-length short axis marks a degenerate annotation; treat its point
  // as the intersection when it sits on the long axis.
  if (short_axis_length_px(ann) == 0.0) {
    const Point2 p = ann.short_axis[0];
    if (point_segment_distance(p, ann.long_axis[0], ann.long_axis[1]) <= 0.5)
      return p;
    throw std::runtime_error("RECIST axes do not intersect");
  }
  const auto p = segment_intersection(ann.long_axis, ann.short_axis, 0.5);
  if (!p) throw std::runtime_error("RECIST axes do not intersect");
  return *p;
}

void validate_annotation(const RecistAnnotation& ann, const Volume& vol) {
  if (ann.slice_index < 0 || ann.slice_index >= vol.dims[2])
    throw std::runtime_error("annotation slice outside volume");
  const double sx = vol.spacing_mm[0], sy = vol.spacing_mm[1];
  if (physical_length(ann.long_axis, sx, sy) + 1e-9 <
      physical_length(ann.short_axis, sx, sy))
    throw std::runtime_error("short axis longer than long axis");
  axis_intersection(ann);  // throws when segments do not meet
  for (const auto& seg : {ann.long_axis, ann.short_axis}) {
    for (const auto& p : seg) {
      if (p.x < 0 || p.y < 0 || p.x > vol.dims[0] - 1 || p.y > vol.dims[1] - 1)
        throw std::runtime_error("annotation endpoint outside volume");
    }
  }
}

// ---- File formats -------------------------------------------------------

namespace {

std::string strip_suffix(std::string path, const std::string& suffix) {
  if (path.size() >= suffix.size() &&
      path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0)
    path.resize(path.size() - suffix.size());
  return path;
}

const char* dtype_name(ScalarType t) {
  switch (t) {
    case ScalarType::int16: return "int16";
    case ScalarType::float32: return "float32";
    case ScalarType::uint8: return "uint8";
  }
  throw std::logic_error("unknown dtype");
}

ScalarType dtype_from_name(const std::string& s) {
  if (s == "int16") return ScalarType::int16;
  if (s == "float32") return ScalarType::float32;
  if (s == "uint8") return ScalarType::uint8;
  throw std::runtime_error("unknown dtype '" + s + "'");
}

std::size_t dtype_size(ScalarType t) {
  switch (t) {
    case ScalarType::int16: return 2;
    case ScalarType::float32: return 4;
    case ScalarType::uint8: return 1;
  }
  throw std::logic_error("unknown dtype");
}

struct Header {
  std::array<int, 3> dims;
  std::array<double, 3> spacing;
  ScalarType dtype;
  fs::path raw_path;
};

void write_sidecar(const Header& h, const fs::path& sidecar) {
  json j;
  j["dims"] = h.dims;
  j["spacing_mm"] = h.spacing;
  j["dtype"] = dtype_name(h.dtype);
  j["order"] = "zyx";
  j["data"] = h.raw_path.filename().string();
  std::ofstream f(sidecar);
  if (!f) throw std::runtime_error("cannot write " + sidecar.string());
  f << j.dump(2) << "\n";
}

Header read_sidecar(const std::string& path) {
  const fs::path sidecar = strip_suffix(path, ".vol.json") + ".vol.json";
  std::ifstream f(sidecar);
  if (!f) throw std::runtime_error("cannot open " + sidecar.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(sidecar.string() + ": " + e.what());
  }
  Header h;
  h.dims = j.at("dims").get<std::array<int, 3>>();
  h.spacing = j.at("spacing_mm").get<std::array<double, 3>>();
  h.dtype = dtype_from_name(j.at("dtype").get<std::string>());
  if (j.at("order").get<std::string>() != "zyx")
    throw std::runtime_error("unsupported voxel order");
  for (int d : h.dims)
    if (d < 1) throw std::runtime_error("invalid dims in " + sidecar.string());
  for (double s : h.spacing)
    if (!(s > 0.0))
      throw std::runtime_error("non-positive spacing in " + sidecar.string());
  h.raw_path = sidecar.parent_path() / j.at("data").get<std::string>();
  return h;
}

std::vector<char> read_payload(const Header& h) {
  std::ifstream f(h.raw_path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + h.raw_path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());
  const std::size_t expect = static_cast<std::size_t>(h.dims[0]) * h.dims[1] *
                             h.dims[2] * dtype_size(h.dtype);
  if (bytes.size() != expect)
    throw std::runtime_error("size mismatch: " + h.raw_path.string() +
                             " holds " + std::to_string(bytes.size()) +
                             " bytes, header implies " + std::to_string(expect));
  return bytes;
}

void write_payload(const fs::path& raw, const char* bytes, std::size_t n) {
  std::ofstream f(raw, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + raw.string());
  f.write(bytes, static_cast<std::streamsize>(n));
}

}  // namespace

void write_volume(const Volume& vol, const std::string& path) {
  if (vol.data.size() != vol.voxel_count())
    throw std::runtime_error("volume data length does not match dims");
  const std::string base = strip_suffix(path, ".vol.json");
  Header h{vol.dims, vol.spacing_mm, vol.dtype, base + ".raw"};
  write_sidecar(h, base + ".vol.json");
  switch (vol.dtype) {
    case ScalarType::float32:
      write_payload(h.raw_path,
                    reinterpret_cast<const char*>(vol.data.data()),
                    vol.data.size() * 4);
      break;
    case ScalarType::int16: {
      std::vector<std::int16_t> buf(vol.data.size());
      for (std::size_t i = 0; i < buf.size(); ++i)
        buf[i] = static_cast<std::int16_t>(std::lround(vol.data[i]));
      write_payload(h.raw_path, reinterpret_cast<const char*>(buf.data()),
                    buf.size() * 2);
      break;
    }
    case ScalarType::uint8: {
      std::vector<std::uint8_t> buf(vol.data.size());
      for (std::size_t i = 0; i < buf.size(); ++i)
        buf[i] = static_cast<std::uint8_t>(std::lround(vol.data[i]));
      write_payload(h.raw_path, reinterpret_cast<const char*>(buf.data()),
                    buf.size());
      break;
    }
  }
}

Volume read_volume(const std::string& path) {
  const Header h = read_sidecar(path);
  const auto bytes = read_payload(h);
  Volume vol;
  vol.dims = h.dims;
  vol.spacing_mm = h.spacing;
  vol.dtype = h.dtype;
  vol.data.resize(vol.voxel_count());
  switch (h.dtype) {
    case ScalarType::float32:
      std::memcpy(vol.data.data(), bytes.data(), bytes.size());
      break;
    case ScalarType::int16: {
      const auto* src = reinterpret_cast<const std::int16_t*>(bytes.data());
      for (std::size_t i = 0; i < vol.data.size(); ++i)
        vol.data[i] = static_cast<float>(src[i]);
      break;
    }
    case ScalarType::uint8: {
      const auto* src = reinterpret_cast<const std::uint8_t*>(bytes.data());
      for (std::size_t i = 0; i < vol.data.size(); ++i)
        vol.data[i] = static_cast<float>(src[i]);
      break;
    }
  }
  return vol;
}

void write_mask(const Mask& mask, const std::string& path) {
  if (mask.data.size() != mask.voxel_count())
    throw std::runtime_error("mask data length does not match dims");
  const std::string base = strip_suffix(path, ".vol.json");
  Header h{mask.dims, mask.spacing_mm, ScalarType::uint8, base + ".raw"};
  write_sidecar(h, base + ".vol.json");
  write_payload(h.raw_path, reinterpret_cast<const char*>(mask.data.data()),
                mask.data.size());
}

Mask read_mask(const std::string& path) {
  const Header h = read_sidecar(path);
  if (h.dtype != ScalarType::uint8)
    throw std::runtime_error("mask payload must be uint8: " + path);
  const auto bytes = read_payload(h);
  Mask mask;
  mask.dims = h.dims;
  mask.spacing_mm = h.spacing;
  mask.data.assign(bytes.begin(), bytes.end());
  return mask;
}

namespace {

json to_json(const RecistAnnotation& a) {
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

Segment segment_from_json(const json& j) {
  return Segment{Point2{j.at(0).at(0).get<double>(), j.at(0).at(1).get<double>()},
                 Point2{j.at(1).at(0).get<double>(), j.at(1).at(1).get<double>()}};
}

RecistAnnotation annotation_from_json(const json& j) {
  RecistAnnotation a;
  a.lesion_id = j.value("lesion_id", "");
  a.patient_id = j.value("patient_id", "");
  a.slice_index = j.at("slice_index").get<int>();
  a.long_axis = segment_from_json(j.at("long_axis"));
  a.short_axis = segment_from_json(j.at("short_axis"));
  a.window = j.at("window").get<std::array<double, 2>>();
  return a;
}

}  // namespace

void write_annotations(const std::vector<RecistAnnotation>& anns,
                       const std::string& path) {
  json j = json::array();
  for (const auto& a : anns) j.push_back(to_json(a));
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

std::vector<RecistAnnotation> read_annotations(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  std::vector<RecistAnnotation> out;
  for (const auto& item : j) out.push_back(annotation_from_json(item));
  return out;
}

void write_lesion_records(const std::vector<LesionRecord>& records,
                          const std::string& path) {
  json j = json::array();
  for (const auto& r : records) {
    json item{{"volume", r.volume_path},
              {"annotation", to_json(r.annotation)},
              {"fold", r.fold}};
    if (!r.gt_mask_path.empty()) item["gt_mask"] = r.gt_mask_path;
    j.push_back(item);
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

std::vector<LesionRecord> read_lesion_records(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  std::vector<LesionRecord> out;
  for (const auto& item : j) {
    LesionRecord r;
    r.volume_path = item.at("volume").get<std::string>();
    r.annotation = annotation_from_json(item.at("annotation"));
    r.gt_mask_path = item.value("gt_mask", "");
    r.fold = item.value("fold", -1);
    out.push_back(std::move(r));
  }
  return out;
}

// ---- Preprocessing ------------------------------------------------------

RoiVolume crop_and_window(const Volume& vol, const RecistAnnotation& ann) {
  validate_annotation(ann, vol);
  const double lo = ann.window[0], hi = ann.window[1];
  if (!(lo < hi)) throw std::runtime_error("degenerate window");
  const double len = long_axis_length_px(ann);
  if (len < 1.0) throw std::runtime_error("degenerate long axis");

  const Point2 c = axis_intersection(ann);
  const int half = std::max(1, static_cast<int>(std::lround(len)));
  const int cx = static_cast<int>(std::lround(c.x));
  const int cy = static_cast<int>(std::lround(c.y));
  const int x0 = std::clamp(cx - half, 0, vol.dims[0] - 1);
  const int x1 = std::clamp(cx + half, x0 + 1, vol.dims[0]);
  const int y0 = std::clamp(cy - half, 0, vol.dims[1] - 1);
  const int y1 = std::clamp(cy + half, y0 + 1, vol.dims[1]);

  RoiVolume roi;
  roi.x0 = x0;
  roi.y0 = y0;
  roi.vol.dims = {x1 - x0, y1 - y0, vol.dims[2]};
  roi.vol.spacing_mm = vol.spacing_mm;
  roi.vol.dtype = ScalarType::float32;
  roi.vol.data.resize(roi.vol.voxel_count());
  const double scale = 1.0 / (hi - lo);
  for (int z = 0; z < vol.dims[2]; ++z)
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        roi.vol.at(x - x0, y - y0, z) = static_cast<float>(
            std::clamp((vol.at(x, y, z) - lo) * scale, 0.0, 1.0));

  roi.ann = ann;
  const Point2 shift{static_cast<double>(x0), static_cast<double>(y0)};
  for (auto* seg : {&roi.ann.long_axis, &roi.ann.short_axis})
    for (auto& p : *seg) p = p - shift;
  roi.ann.window = {0.0, 1.0};
  return roi;
}

namespace {

// Integer-endpoint chord test: every Bresenham pixel is foreground.
bool chord_in_mask(const Mask& m, int z, int x0, int y0, int x1, int y1) {
  int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  int x = x0, y = y0;
  while (true) {
    if (!m.at(x, y, z)) return false;
    if (x == x1 && y == y1) return true;
    const int e2 = 2 * err;
    if (e2 >= dy) { err += dy; x += sx; }
    if (e2 <= dx) { err += dx; y += sy; }
  }
}

}  // namespace

RecistAnnotation mask_to_recist(const Mask& mask) {
  require_binary(mask, "mask_to_recist");
  if (mask.foreground_count() == 0)
    throw std::runtime_error("mask_to_recist: empty mask");

  const int nx = mask.dims[0], ny = mask.dims[1], nz = mask.dims[2];
  int best_z = -1;
  std::size_t best_area = 0;
  for (int z = 0; z < nz; ++z) {
    std::size_t area = 0;
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) area += mask.at(x, y, z);
    if (area > best_area) {
      best_area = area;
      best_z = z;
    }
  }
  if (best_area < 2)
    throw std::runtime_error("mask_to_recist: single-pixel cross-section");

  // Boundary pixels of the chosen slice (4-neighbor background or edge).
  std::vector<std::pair<int, int>> boundary;
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      if (!mask.at(x, y, best_z)) continue;
      const bool edge =
          x == 0 || y == 0 || x == nx - 1 || y == ny - 1 ||
          !mask.at(x - 1, y, best_z) || !mask.at(x + 1, y, best_z) ||
          !mask.at(x, y - 1, best_z) || !mask.at(x, y + 1, best_z);
      if (edge) boundary.emplace_back(x, y);
    }
  }

  const double sx = mask.spacing_mm[0], sy = mask.spacing_mm[1];
  double best_len = -1.0;
  Segment long_axis{};
  for (std::size_t i = 0; i < boundary.size(); ++i) {
    for (std::size_t j = i + 1; j < boundary.size(); ++j) {
      const auto [ax, ay] = boundary[i];
      const auto [bx, by] = boundary[j];
      const double len = std::hypot((bx - ax) * sx, (by - ay) * sy);
      if (len <= best_len) continue;
      if (!chord_in_mask(mask, best_z, ax, ay, bx, by)) continue;
      best_len = len;
      long_axis = {Point2{static_cast<double>(ax), static_cast<double>(ay)},
                   Point2{static_cast<double>(bx), static_cast<double>(by)}};
    }
  }
  if (best_len <= 0.0)
    throw std::runtime_error("mask_to_recist: no in-mask chord found");

  // Longest in-mask chord within 5 degrees of perpendicular that crosses
  // the long axis.
  const Point2 long_dir{(long_axis[1].x - long_axis[0].x) * sx,
                        (long_axis[1].y - long_axis[0].y) * sy};
  const double long_norm = norm(long_dir);
  const double cos_tol = std::cos(85.0 * std::numbers::pi / 180.0);
  double best_short = -1.0;
  Segment short_axis{};
  for (std::size_t i = 0; i < boundary.size(); ++i) {
    for (std::size_t j = i + 1; j < boundary.size(); ++j) {
      const auto [ax, ay] = boundary[i];
      const auto [bx, by] = boundary[j];
      const Point2 dir{(bx - ax) * sx, (by - ay) * sy};
      const double len = norm(dir);
      if (len <= best_short || len == 0.0) continue;
      if (std::abs(dot(dir, long_dir)) / (len * long_norm) > cos_tol) continue;
      const Segment cand{
          Point2{static_cast<double>(ax), static_cast<double>(ay)},
          Point2{static_cast<double>(bx), static_cast<double>(by)}};
      if (!segment_intersection(long_axis, cand, 0.5)) continue;
      if (!chord_in_mask(mask, best_z, ax, ay, bx, by)) continue;
      best_short = len;
      short_axis = cand;
    }
  }
  if (best_short < 0.0) {
    // No perpendicular chord exists (e.g. a 1-px-thick mask); fall back to a
    // degenerate short axis at the long-axis midpoint.
    const Point2 mid = 0.5 * (long_axis[0] + long_axis[1]);
    short_axis = {mid, mid};
  }

  RecistAnnotation ann;
  ann.slice_index = best_z;
  ann.long_axis = long_axis;
  ann.short_axis = short_axis;
  ann.window = {0.0, 1.0};
  return ann;
}

RecistAnnotation inject_recist_noise(const RecistAnnotation& ann,
                                     double max_fraction, std::uint64_t seed,
                                     double sx, double sy) {
  if (max_fraction < 0.0 || max_fraction >= 1.0)
    throw std::invalid_argument("max_fraction must be in [0, 1)");
  const Point2 c = axis_intersection(ann);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(1.0 - max_fraction,
                                              1.0 + max_fraction);
  const double f_long_drawn = dist(rng);
  const double f_short_drawn = dist(rng);

  const auto scaled = [&c](const Segment& seg, double f) {
    if (f == 1.0) return seg;
    return Segment{c + f * (seg[0] - c), c + f * (seg[1] - c)};
  };
  const auto clamp_min_px = [](const Segment& seg, double f) {
    const double len = norm(seg[1] - seg[0]);
    return (len > 0.0 && f * len < 1.0) ? 1.0 / len : f;
  };

  RecistAnnotation out = ann;
  const double f_long = clamp_min_px(ann.long_axis, f_long_drawn);
  out.long_axis = scaled(ann.long_axis, f_long);

  double f_short = clamp_min_px(ann.short_axis, f_short_drawn);
  const double long_mm = physical_length(out.long_axis, sx, sy);
  const double short_mm = physical_length(ann.short_axis, sx, sy);
  if (short_mm > 0.0 && f_short * short_mm > long_mm)
    f_short = long_mm / short_mm;  // keep short <= long
  out.short_axis = scaled(ann.short_axis, f_short);
  return out;
}

}  // namespace lesionseg
