#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "intercnn/container.hpp"
#include "intercnn/data.hpp"
#include "intercnn/labels.hpp"

namespace icnn {

namespace {

using Rgb = std::array<double, 3>;

// Hand trajectory and held object per behaviour, in normalized scene
// coordinates (x right, y down).
struct Motion {
  double ax, ay;       // anchor
  double mx, my;       // amplitude
  double hz;           // oscillation frequency
  bool circular;       // elliptical path instead of a line
  Rgb object;          // colour of the held object
  double object_size;  // relative radius, 0 = empty hand
  double nod;          // head bob amplitude
  double flicker;      // object brightness modulation
};

constexpr double kPi = 3.14159265358979323846;

const std::array<Motion, 9> kMotions{{
    {0.30, 0.62, 0.03, 0.01, 0.3, false, {0.0, 0.0, 0.0}, 0.0, 0.00, 0.0},   // NormalDriving
    {0.50, 0.82, 0.02, 0.02, 2.0, true, {0.15, 0.25, 0.85}, 0.9, 0.00, 0.0},  // Texting
    {0.52, 0.55, 0.02, 0.22, 0.6, false, {0.65, 0.42, 0.12}, 1.0, 0.01, 0.0},  // Eating
    {0.30, 0.62, 0.02, 0.01, 1.2, false, {0.0, 0.0, 0.0}, 0.0, 0.05, 0.0},   // Talking
    {0.72, 0.70, 0.22, 0.02, 0.4, false, {0.55, 0.55, 0.55}, 0.7, 0.00, 0.0},  // Searching
    {0.55, 0.45, 0.05, 0.15, 0.35, false, {0.20, 0.80, 0.90}, 1.1, 0.02, 0.0},  // Drinking
    {0.56, 0.45, 0.01, 0.01, 0.2, false, {0.90, 0.90, 0.25}, 1.0, 0.00, 0.35},  // WatchingVideo
    {0.50, 0.80, 0.08, 0.01, 1.5, false, {0.90, 0.20, 0.80}, 0.9, 0.00, 0.1},  // Gaming
    {0.40, 0.50, 0.12, 0.12, 0.5, true, {0.20, 0.80, 0.25}, 0.9, 0.00, 0.0},  // Preparing
}};

struct ClipStyle {
  Rgb background, skin, shirt;
  double brightness;
  std::array<double, 9> phase, amp;
  std::array<double, 9> jx, jy;
  std::array<Rgb, 9> tint;
};

struct Canvas {
  std::size_t h, w;
  float* px;

  void blob(double cx, double cy, double radius, const Rgb& c, double strength = 1.0) {
    const double sx = cx * static_cast<double>(w), sy = cy * static_cast<double>(h);
    const double r = radius * static_cast<double>(w);
    const double inv = 1.0 / (2.0 * r * r);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dx = static_cast<double>(x) - sx, dy = static_cast<double>(y) - sy;
        const double a = strength * std::exp(-(dx * dx + dy * dy) * inv);
        if (a < 1e-4) continue;
        float* p = px + (y * w + x) * 3;
        for (int k = 0; k < 3; ++k) p[k] = static_cast<float>((1.0 - a) * p[k] + a * c[k]);
      }
  }
};

Rgb jitter(const Rgb& c, std::mt19937_64& rng, double amount) {
  std::uniform_real_distribution<double> u(-amount, amount);
  Rgb out;
  for (int k = 0; k < 3; ++k) out[k] = std::clamp(c[k] + u(rng), 0.0, 1.0);
  return out;
}

ClipStyle make_style(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ClipStyle s;
  s.background = jitter({0.45, 0.45, 0.5}, rng, 0.15);
  s.skin = jitter({0.85, 0.65, 0.5}, rng, 0.06);
  s.shirt = jitter({0.2, 0.2, 0.3}, rng, 0.15);
  s.brightness = 0.9 + 0.2 * u(rng);
  for (std::size_t c = 0; c < 9; ++c) {
    s.phase[c] = 2 * kPi * u(rng);
    s.amp[c] = 0.8 + 0.4 * u(rng);
    s.jx[c] = 0.06 * (u(rng) - 0.5);
    s.jy[c] = 0.06 * (u(rng) - 0.5);
    s.tint[c] = jitter(kMotions[c].object, rng, 0.06);
  }
  return s;
}

// Renders one frame of one view. The front view mirrors and compresses the
// horizontal hand position so both cameras observe the same motion.
void render(Canvas& cv, View view, int label, double t, const ClipStyle& s, std::size_t frame,
            std::mt19937_64& noise_rng, double noise) {
  const Motion& m = kMotions[static_cast<std::size_t>(label)];
  const std::size_t c = static_cast<std::size_t>(label);
  const double phase = 2 * kPi * m.hz * t + s.phase[c];
  double hx = m.ax + s.jx[c] + s.amp[c] * m.mx * std::sin(phase);
  double hy = m.ay + s.jy[c] + s.amp[c] * m.my * (m.circular ? std::cos(phase) : std::sin(phase));
  const double nod = m.nod * std::sin(2 * kPi * 1.1 * t + s.phase[c]);

  for (std::size_t y = 0; y < cv.h; ++y)
    for (std::size_t x = 0; x < cv.w; ++x) {
      const double fx = static_cast<double>(x) / static_cast<double>(cv.w);
      const double fy = static_cast<double>(y) / static_cast<double>(cv.h);
      const double tex = view == View::Side ? 0.05 * std::sin(9 * fx + 3 * fy) : 0.05 * std::cos(7 * fy - 2 * fx);
      float* p = cv.px + (y * cv.w + x) * 3;
      for (int k = 0; k < 3; ++k) p[k] = static_cast<float>(s.background[static_cast<std::size_t>(k)] + tex);
    }

  double head_x = 0.55, head_y = 0.25;
  if (view == View::Front) {
    hx = 1.0 - (0.2 + 0.7 * hx);
    head_x = 0.5;
    head_y = 0.3;
  }
  cv.blob(head_x, 0.75, 0.28, s.shirt);
  cv.blob(head_x, head_y + nod, 0.12, s.skin);
  if (label == static_cast<int>(Behavior::Talking))
    cv.blob(head_x, head_y + nod + 0.08, 0.03, {0.4, 0.1, 0.1}, 0.5 + 0.5 * std::sin(2 * kPi * 3.0 * t));
  cv.blob(hx, hy, 0.06, s.skin);
  if (m.object_size > 0.0) {
    const double strength = 1.0 - m.flicker * (0.5 + 0.5 * std::sin(2 * kPi * 2.7 * t + static_cast<double>(frame)));
    cv.blob(hx + 0.03, hy - 0.03, 0.05 * m.object_size, s.tint[c], strength);
  }

  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t i = 0; i < cv.h * cv.w * 3; ++i)
    cv.px[i] = static_cast<float>(std::clamp(cv.px[i] * s.brightness + noise * n(noise_rng), 0.0, 1.0));
}

}  // namespace

DatasetManifest generate_synthetic_dataset(const DataConfig& cfg, std::uint64_t seed,
                                           const std::filesystem::path& out_dir) {
  cfg.validate();
  DatasetManifest manifest;
  const std::size_t total = cfg.train_clips + cfg.validation_clips + cfg.test_clips;
  // The first and last segments get half a window of extra frames so every
  // behaviour owns the same number of majority-labelled windows.
  const std::size_t pad = (kWindowFrames / 2) * kDownsampleFactor;
  const std::size_t frames = 9 * cfg.segment_frames + 2 * pad;
  for (std::size_t i = 0; i < total; ++i) {
    const Split split = i < cfg.train_clips                          ? Split::Train
                        : i < cfg.train_clips + cfg.validation_clips ? Split::Validation
                                                                     : Split::Test;
    std::mt19937_64 rng(mix_seed(seed, i));
    const ClipStyle style = make_style(rng);
    std::vector<int> order(9);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<int> labels(frames);
    for (std::size_t f = 0; f < frames; ++f)
      labels[f] = order[std::min<std::size_t>(8, f < pad ? 0 : (f - pad) / cfg.segment_frames)];

    Tensor side({frames, cfg.source_height, cfg.source_width, 3});
    Tensor front({frames, cfg.source_height, cfg.source_width, 3});
    const std::size_t per = cfg.source_height * cfg.source_width * 3;
    std::mt19937_64 noise_rng(mix_seed(seed, 1000003 + i));
    for (std::size_t f = 0; f < frames; ++f) {
      const double t = static_cast<double>(f) / cfg.source_fps;
      Canvas cs{cfg.source_height, cfg.source_width, side.data<float>().data() + f * per};
      render(cs, View::Side, labels[f], t, style, f, noise_rng, cfg.noise);
      Canvas cf{cfg.source_height, cfg.source_width, front.data<float>().data() + f * per};
      render(cf, View::Front, labels[f], t, style, f, noise_rng, cfg.noise);
    }

    char id[32];
    std::snprintf(id, sizeof id, "clip_%03zu", i);
    const std::string rel = std::string("clips/") + id + ".ictn";
    write_container({{"side", side}, {"front", front}}, out_dir / rel);

    ClipRecord rec;
    rec.clip_id = id;
    rec.split = split;
    rec.views = {View::Side, View::Front};
    rec.fps = cfg.source_fps;
    rec.frames = frames;
    rec.labels = compress_labels(labels);
    rec.files = {{"frames", rel}};
    manifest.clips.push_back(std::move(rec));
  }
  write_manifest(manifest, out_dir / kManifestName);
  return manifest;
}

}  // namespace icnn
