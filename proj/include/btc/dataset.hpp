#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "btc/rng.hpp"
#include "btc/serialize.hpp"
#include "btc/tensor.hpp"

namespace btc {

struct VideoClip {
  Tensor frames;  // T x C x H x W, pixels in [0,1]
  int label = 0;
  std::string clip_id;
};

struct ImageSample {
  Tensor image;  // C x H x W in [0,1]
  std::string source_clip;
  int frame_index = -1;
};

struct ManifestEntry {
  std::string rel_path;
  int label = 0;
  std::string kind;  // "clip" or "image"
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> params;

  std::vector<ManifestEntry> clips() const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.kind == "clip") out.push_back(e);
    return out;
  }
  std::vector<ManifestEntry> images() const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.kind == "image") out.push_back(e);
    return out;
  }
  int class_count() const {
    int mx = 0;
    for (const auto& e : entries) mx = std::max(mx, e.label);
    return mx + 1;
  }
};

struct GenerationParams {
  int classes = 8;
  int clips_per_class = 20;
  int frames = 16;  // T
  int height = 32;
  int width = 32;
  int channels = 3;
  // Static per-clip background grain. Without it a flat background drives
  // near-constant activation fields through the bias-free extractor and
  // every l-inf-bounded perturbation leaves feature cosines pinned near 1.
  float background_grain = 0.10f;
  // Output mapping v -> floor + scale * v. The extractor is positively
  // homogeneous (bias-free conv, relu, mean pool), so feature cosines at
  // budget eps on content scaled by s equal cosines at budget eps/s on
  // unscaled content: the scale sets how much bite a 16/255 budget has.
  float pixel_scale = 0.35f;
  float pixel_floor = 0.06f;
};

namespace detail {

// Per-class motion/texture recipe. Classes come in pairs (c, c+4) that share
// a texture frequency and differ only in translation speed, so time-averaged
// features cannot separate the pair and the classifier has to read the
// temporal-difference half of its pooled features. Each class also has a
// fixed direction; it carries no label information (speed does) but keeps
// the visited-position distribution consistent within a class.
struct ClassPattern {
  float freq;    // texture cycles per 32 px
  float speed;   // px per frame
  float angle;   // motion direction, radians
  float radius;  // disk radius, px
};

inline ClassPattern class_pattern(int c) {
  static constexpr float kPi = 3.14159265358979323846f;
  ClassPattern p;
  p.freq = 2.0f + static_cast<float>(c % 4);
  p.speed = ((c / 4) % 2 == 0) ? 1.0f : 3.0f;
  p.speed += 0.4f * static_cast<float>(c / 8);
  p.angle = (2.0f * kPi / 8.0f) * static_cast<float>(c % 8);
  p.radius = 9.0f;
  return p;
}

inline float torus_delta(float a, float b, float period) {
  float d = std::fmod(a - b, period);
  if (d > period / 2) d -= period;
  if (d < -period / 2) d += period;
  return d;
}

}  // namespace detail

// Render one clip. The shape is a soft-edged textured disk translating on a
// torus; all per-clip randomness comes from `rng`, class identity fixes the
// texture frequency and velocity.
inline VideoClip render_clip(int label, const GenerationParams& gp, Rng rng, const std::string& clip_id) {
  static constexpr float kPi = 3.14159265358979323846f;
  const detail::ClassPattern pat = detail::class_pattern(label);
  const float h = static_cast<float>(gp.height), w = static_cast<float>(gp.width);

  const float cx0 = w / 2.0f + rng.uniform(-1.5f, 1.5f);
  const float cy0 = h / 2.0f + rng.uniform(-1.5f, 1.5f);
  const float angle = pat.angle;
  const float speed = pat.speed * rng.uniform(0.9f, 1.1f);
  const float phase0 = rng.uniform(-0.15f, 0.15f) * 2.0f * kPi;
  const float background = rng.uniform(0.35f, 0.55f);
  const float contrast = rng.uniform(0.8f, 1.0f);
  const float tex_axis = 30.0f * kPi / 180.0f;

  // Background grain: a fixed "scene" texture shared by every clip and
  // corpus (it depends only on the frame size), plus a small per-clip
  // component. The shared part anchors what universal perturbations have to
  // fight against; the per-clip part keeps clips distinguishable.
  std::vector<float> grain(static_cast<std::size_t>(gp.height) * gp.width);
  {
    Rng scene(0xB7C5CE17ULL ^ (static_cast<std::uint64_t>(gp.height) << 16) ^ gp.width);
    for (float& g : grain) g = scene.uniform(-gp.background_grain, gp.background_grain);
    for (float& g : grain) g += rng.uniform(-0.25f * gp.background_grain, 0.25f * gp.background_grain);
  }

  const float vx = speed * std::cos(angle);
  const float vy = speed * std::sin(angle);

  Tensor frames({gp.frames, gp.channels, gp.height, gp.width});
  const float chan_gain[3] = {1.0f, 0.9f, 0.8f};
  const float chan_bias[3] = {0.0f, -0.02f, -0.04f};

  for (int t = 0; t < gp.frames; ++t) {
    const float jx = rng.uniform(-0.2f, 0.2f);
    const float jy = rng.uniform(-0.2f, 0.2f);
    const float cx = std::fmod(cx0 + vx * t + jx + 8.0f * w, w);
    const float cy = std::fmod(cy0 + vy * t + jy + 8.0f * h, h);
    Tensor frame({gp.channels, gp.height, gp.width});
    for (int y = 0; y < gp.height; ++y)
      for (int x = 0; x < gp.width; ++x) {
        const float dx = detail::torus_delta(static_cast<float>(x), cx, w);
        const float dy = detail::torus_delta(static_cast<float>(y), cy, h);
        const float dist = std::sqrt(dx * dx + dy * dy);
        // 2 px soft edge keeps neighboring frames close in pixel space.
        float mask = (pat.radius - dist) / 2.0f;
        mask = std::min(1.0f, std::max(0.0f, mask));
        float tex = 0.0f;
        if (mask > 0.0f) {
          const float proj = dx * std::cos(tex_axis) + dy * std::sin(tex_axis);
          tex = std::sin(2.0f * kPi * pat.freq * proj / 32.0f + phase0);
        }
        const float base = background + (1.0f - mask) * grain[static_cast<std::size_t>(y) * gp.width + x];
        for (int c = 0; c < gp.channels; ++c) {
          const int ci = c % 3;
          const float v = base + chan_bias[ci] + mask * contrast * chan_gain[ci] * 0.4f * tex;
          const float mapped = gp.pixel_floor + gp.pixel_scale * std::min(1.0f, std::max(0.0f, v));
          frame.at3(c, y, x, gp.height, gp.width) = std::min(1.0f, std::max(0.0f, mapped));
        }
      }
    frames.assign_frame(t, frame);
  }

  VideoClip clip;
  clip.frames = std::move(frames);
  clip.label = label;
  clip.clip_id = clip_id;
  return clip;
}

inline float mean_abs_neighbor_diff(const Tensor& frames) {
  const int t_count = frames.dim(0);
  const std::size_t stride = frames.numel() / t_count;
  double worst = 0.0;
  for (int t = 0; t + 1 < t_count; ++t) {
    double acc = 0.0;
    const float* a = frames.data() + t * stride;
    const float* b = frames.data() + (t + 1) * stride;
    for (std::size_t i = 0; i < stride; ++i) acc += std::abs(static_cast<double>(b[i]) - a[i]);
    worst = std::max(worst, acc / static_cast<double>(stride));
  }
  return static_cast<float>(worst);
}

inline std::string manifest_text(const DatasetManifest& m) {
  std::ostringstream os;
  os << "#btc-manifest v1\n";
  os << "#param seed " << m.seed << "\n";
  for (const auto& [k, v] : m.params) os << "#param " << k << " " << v << "\n";
  for (const auto& e : m.entries) os << e.rel_path << "\t" << e.label << "\t" << e.kind << "\n";
  return os.str();
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write manifest: " + path.string());
  os << manifest_text(m);
}

// Parse and validate a manifest. Lines starting with '#' after the header
// carry generation metadata; entry lines are `path TAB label TAB kind`.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open manifest: " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "#btc-manifest v1")
        throw std::runtime_error(path.string() + ":1: missing '#btc-manifest v1' header");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string tag, key, value;
      ls >> tag >> key;
      std::getline(ls, value);
      if (!value.empty() && value[0] == ' ') value.erase(0, 1);
      if (tag == "param") {
        if (key == "seed")
          m.seed = std::strtoull(value.c_str(), nullptr, 10);
        else
          m.params[key] = value;
      }
      continue;
    }
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected path TAB label TAB kind");
    ManifestEntry e;
    e.rel_path = line.substr(0, tab1);
    const std::string label_str = line.substr(tab1 + 1, tab2 - tab1 - 1);
    e.kind = line.substr(tab2 + 1);
    std::size_t consumed = 0;
    try {
      e.label = std::stoi(label_str, &consumed);
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (consumed != label_str.size() || e.label < 0)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad label '" + label_str + "'");
    if (e.kind != "clip" && e.kind != "image")
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad kind '" + e.kind + "'");
    m.entries.push_back(std::move(e));
  }
  if (!header_seen) throw std::runtime_error(path.string() + ": empty manifest");
  if (m.entries.empty()) throw std::runtime_error(path.string() + ": empty dataset");
  std::string missing;
  for (const auto& e : m.entries)
    if (!std::filesystem::exists(m.root / e.rel_path)) missing += "\n  " + (m.root / e.rel_path).string();
  if (!missing.empty()) throw std::runtime_error("manifest " + path.string() + " lists missing files:" + missing);
  return m;
}

inline VideoClip load_clip(const DatasetManifest& m, const ManifestEntry& e) {
  VideoClip clip;
  clip.frames = deserialize_tensor((m.root / e.rel_path).string());
  if (clip.frames.rank() != 4)
    throw std::runtime_error("clip " + e.rel_path + " is not rank 4: " + shape_str(clip.frames.shape()));
  clip.label = e.label;
  clip.clip_id = std::filesystem::path(e.rel_path).stem().string();
  return clip;
}

inline std::vector<VideoClip> load_clips(const DatasetManifest& m) {
  std::vector<VideoClip> out;
  for (const auto& e : m.clips()) out.push_back(load_clip(m, e));
  return out;
}

inline std::vector<Tensor> load_images(const DatasetManifest& m) {
  std::vector<Tensor> out;
  for (const auto& e : m.images()) {
    Tensor img = deserialize_tensor((m.root / e.rel_path).string());
    if (img.rank() != 3)
      throw std::runtime_error("image " + e.rel_path + " is not rank 3: " + shape_str(img.shape()));
    out.push_back(std::move(img));
  }
  return out;
}

// Generate the corpus: per class `clips_per_class` clips plus one derived
// image per clip (a seeded random frame). Deterministic for a fixed seed.
inline DatasetManifest generate_dataset(const GenerationParams& gp, std::uint64_t seed,
                                        const std::filesystem::path& out_dir) {
  if (gp.classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (gp.frames < 4) throw std::invalid_argument("need at least 4 frames per clip");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "clips", ec);
  std::filesystem::create_directories(out_dir / "images", ec);
  if (!std::filesystem::is_directory(out_dir / "clips") || !std::filesystem::is_directory(out_dir / "images"))
    throw std::runtime_error("cannot create dataset directories under " + out_dir.string());

  Rng master(seed);
  DatasetManifest m;
  m.root = out_dir;
  m.seed = seed;
  m.params["classes"] = std::to_string(gp.classes);
  m.params["clips_per_class"] = std::to_string(gp.clips_per_class);
  m.params["frames"] = std::to_string(gp.frames);
  m.params["height"] = std::to_string(gp.height);
  m.params["width"] = std::to_string(gp.width);
  m.params["channels"] = std::to_string(gp.channels);
  m.params["background_grain"] = std::to_string(gp.background_grain);
  m.params["pixel_scale"] = std::to_string(gp.pixel_scale);
  m.params["pixel_floor"] = std::to_string(gp.pixel_floor);

  for (int c = 0; c < gp.classes; ++c)
    for (int k = 0; k < gp.clips_per_class; ++k) {
      const std::string id = "c" + std::to_string(c) + "_k" + std::to_string(k);
      Rng clip_rng = master.fork(static_cast<std::uint64_t>(c) * 100003ULL + static_cast<std::uint64_t>(k) + 1ULL);
      Rng frame_pick = clip_rng.fork(777);
      VideoClip clip = render_clip(c, gp, clip_rng, id);
      if (mean_abs_neighbor_diff(clip.frames) >= 0.2f)
        throw std::runtime_error("generated clip " + id + " violates temporal consistency bound");
      const std::string clip_rel = "clips/" + id + ".btct";
      serialize_tensor(clip.frames, (out_dir / clip_rel).string());
      m.entries.push_back({clip_rel, c, "clip"});

      const int pick = static_cast<int>(frame_pick.next_below(static_cast<std::uint64_t>(gp.frames)));
      const std::string img_rel = "images/" + id + ".btct";
      serialize_tensor(clip.frames.slice_frame(pick), (out_dir / img_rel).string());
      m.entries.push_back({img_rel, c, "image"});
    }

  save_manifest(m, out_dir / "manifest.txt");
  return m;
}

}  // namespace btc
