#include "intercnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "config_json.hpp"
#include "intercnn/container.hpp"

namespace icnn {

using detail::json;

const char* view_name(View v) { return v == View::Side ? "side" : "front"; }

View parse_view(const std::string& s) {
  if (s == "side") return View::Side;
  if (s == "front") return View::Front;
  fail(ErrorKind::Config, "unknown view '" + s + "'");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "validation" || s == "val") return Split::Validation;
  if (s == "test") return Split::Test;
  fail(ErrorKind::Config, "unknown split '" + s + "' (expected train|validation|test)");
}

// ---------------------------------------------------------------------------

namespace {

template <class T>
void resize_frame(const T* src, std::size_t src_w, const CropSpec& spec, T* dst) {
  const CropBox& b = spec.box;
  auto coord = [](std::size_t i, std::size_t out, std::size_t in) {
    return out == 1 ? 0.5 * static_cast<double>(in - 1)
                    : static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
  };
  for (std::size_t i = 0; i < spec.out_h; ++i) {
    const double y = coord(i, spec.out_h, b.height);
    const std::size_t y0 = std::min(static_cast<std::size_t>(y), b.height - 1);
    const std::size_t y1 = std::min(y0 + 1, b.height - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t j = 0; j < spec.out_w; ++j) {
      const double x = coord(j, spec.out_w, b.width);
      const std::size_t x0 = std::min(static_cast<std::size_t>(x), b.width - 1);
      const std::size_t x1 = std::min(x0 + 1, b.width - 1);
      const double fx = x - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        auto px = [&](std::size_t yy, std::size_t xx) {
          return static_cast<double>(src[((b.y0 + yy) * src_w + (b.x0 + xx)) * 3 + c]);
        };
        const double top = px(y0, x0) + fx * (px(y0, x1) - px(y0, x0));
        const double bottom = px(y1, x0) + fx * (px(y1, x1) - px(y1, x0));
        dst[(i * spec.out_w + j) * 3 + c] = static_cast<T>(top + fy * (bottom - top));
      }
    }
  }
}

}  // namespace

Tensor crop_resize(const Tensor& frames, const CropSpec& spec) {
  const std::size_t r = frames.rank();
  if ((r != 3 && r != 4) || frames.dim(-1) != 3)
    fail(ErrorKind::Shape, "crop_resize expects [H,W,3] or [T,H,W,3], got " + shape_str(frames.shape()));
  const std::size_t h = frames.dim(-3), w = frames.dim(-2);
  const CropBox& b = spec.box;
  if (b.width == 0 || b.height == 0 || b.x0 + b.width > w || b.y0 + b.height > h)
    fail(ErrorKind::Crop, "crop box (" + std::to_string(b.x0) + "," + std::to_string(b.y0) + "," +
                              std::to_string(b.width) + "," + std::to_string(b.height) + ") exceeds the " +
                              std::to_string(w) + "x" + std::to_string(h) + " frame");
  if (spec.out_h == 0 || spec.out_w == 0) fail(ErrorKind::Crop, "crop target dims must be positive");
  const std::size_t t = r == 4 ? frames.dim(0) : 1;
  Shape out_shape{spec.out_h, spec.out_w, 3};
  if (r == 4) out_shape.insert(out_shape.begin(), t);
  Tensor out(out_shape, frames.dtype());
  dispatch(frames.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* src = frames.data<T>().data();
    T* dst = out.data<T>().data();
    for (std::size_t i = 0; i < t; ++i)
      resize_frame(src + i * h * w * 3, w, spec, dst + i * spec.out_h * spec.out_w * 3);
  });
  return out;
}

Tensor temporal_downsample(const Tensor& frames, std::size_t factor) {
  if (factor == 0) fail(ErrorKind::InvalidInput, "downsample factor must be positive");
  const std::size_t t = frames.dim(0);
  const std::size_t kept = (t + factor - 1) / factor;
  Shape s = frames.shape();
  s[0] = kept;
  Tensor out(s, frames.dtype());
  const std::size_t per = frames.numel() / t;
  dispatch(frames.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* src = frames.data<T>().data();
    T* dst = out.data<T>().data();
    for (std::size_t i = 0; i < kept; ++i) std::memcpy(dst + i * per, src + i * factor * per, per * sizeof(T));
  });
  return out;
}

std::vector<int> temporal_downsample(std::span<const int> labels, std::size_t factor) {
  if (factor == 0) fail(ErrorKind::InvalidInput, "downsample factor must be positive");
  std::vector<int> out;
  for (std::size_t i = 0; i < labels.size(); i += factor) out.push_back(labels[i]);
  return out;
}

std::vector<int> expand_label_runs(const std::vector<LabelRun>& runs, std::size_t frames) {
  std::vector<int> out(frames, -1);
  for (const LabelRun& r : runs) {
    if (r.label_id < 0 || r.label_id > 8)
      fail(ErrorKind::InvalidLabel, "label id " + std::to_string(r.label_id) + " outside 0..8");
    if (r.start >= r.end || r.end > frames)
      fail(ErrorKind::Config, "label run [" + std::to_string(r.start) + "," + std::to_string(r.end) +
                                  ") is empty or exceeds " + std::to_string(frames) + " frames");
    for (std::size_t i = r.start; i < r.end; ++i) {
      if (out[i] != -1) fail(ErrorKind::Config, "frame " + std::to_string(i) + " is labelled twice");
      out[i] = r.label_id;
    }
  }
  for (std::size_t i = 0; i < frames; ++i)
    if (out[i] == -1) fail(ErrorKind::Config, "frame " + std::to_string(i) + " has no label");
  return out;
}

std::vector<LabelRun> compress_labels(std::span<const int> labels) {
  std::vector<LabelRun> runs;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (runs.empty() || runs.back().label_id != labels[i]) runs.push_back({labels[i], i, i});
    runs.back().end = i + 1;
  }
  return runs;
}

int window_label(std::span<const int> frame_labels) {
  if (frame_labels.empty()) fail(ErrorKind::InsufficientFrames, "window has no frames");
  std::map<int, std::size_t> counts;
  for (int l : frame_labels) counts[l]++;
  std::size_t best = 0;
  for (auto& [l, c] : counts) best = std::max(best, c);
  for (int l : frame_labels)
    if (counts[l] == best) return l;
  return frame_labels.front();
}

// ---------------------------------------------------------------------------

PreparedClip prepare_clip(std::string id, Tensor side_frames, Tensor front_frames, std::vector<int> labels,
                          const HornSchunckOptions& flow) {
  for (const Tensor* t : {&side_frames, &front_frames})
    if (t->rank() != 4 || t->dim(3) != 3 || t->dim(0) != labels.size())
      fail(ErrorKind::Shape, "clip " + id + ": frames must be [T,H,W,3] with one label per frame, got " +
                                 shape_str(t->shape()) + " and " + std::to_string(labels.size()) + " labels");
  if (side_frames.shape() != front_frames.shape())
    fail(ErrorKind::Shape, "clip " + id + ": side and front frames differ in shape");
  PreparedClip c;
  c.id = std::move(id);
  c.side_flows = stack_flows(flow_sequence(to_grayscale(side_frames), flow), side_frames.dtype());
  c.front_flows = stack_flows(flow_sequence(to_grayscale(front_frames), flow), front_frames.dtype());
  c.side_frames = std::move(side_frames);
  c.front_frames = std::move(front_frames);
  c.labels = std::move(labels);
  return c;
}

std::size_t window_count(std::size_t frames, std::size_t stride) {
  if (stride == 0) fail(ErrorKind::InvalidInput, "window stride must be positive");
  return frames < kWindowFrames ? 0 : (frames - kWindowFrames) / stride + 1;
}

namespace {

Tensor slice(const Tensor& t, std::size_t start, std::size_t count) {
  Shape s = t.shape();
  s[0] = count;
  Tensor out(s, t.dtype());
  const std::size_t per = t.numel() / t.dim(0);
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::memcpy(out.data<T>().data(), t.data<T>().data() + start * per, count * per * sizeof(T));
  });
  return out;
}

}  // namespace

SampleWindow window_at(const PreparedClip& clip, std::size_t start) {
  if (start + kWindowFrames > clip.frames())
    fail(ErrorKind::InsufficientFrames, "clip " + clip.id + " has " + std::to_string(clip.frames()) +
                                            " frames, window at " + std::to_string(start) + " needs 15");
  SampleWindow w;
  w.side_frames = slice(clip.side_frames, start, kWindowFrames);
  w.side_flows = slice(clip.side_flows, start, kWindowFlows);
  w.front_frames = slice(clip.front_frames, start, kWindowFrames);
  w.front_flows = slice(clip.front_flows, start, kWindowFlows);
  w.label = window_label(std::span<const int>(clip.labels).subspan(start, kWindowFrames));
  return w;
}

std::vector<SampleWindow> assemble_windows(const PreparedClip& clip, std::size_t stride) {
  const std::size_t n = window_count(clip.frames(), stride);
  if (n == 0)
    fail(ErrorKind::InsufficientFrames,
         "clip " + clip.id + " has " + std::to_string(clip.frames()) + " frames; a window needs 15");
  std::vector<SampleWindow> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(window_at(clip, i * stride));
  return out;
}

std::vector<WindowRef> index_windows(std::span<const PreparedClip> clips, std::size_t stride) {
  std::vector<WindowRef> refs;
  for (std::size_t c = 0; c < clips.size(); ++c) {
    const std::size_t n = window_count(clips[c].frames(), stride);
    for (std::size_t i = 0; i < n; ++i)
      refs.push_back({c, i * stride,
                      window_label(std::span<const int>(clips[c].labels).subspan(i * stride, kWindowFrames))});
  }
  return refs;
}

// ---------------------------------------------------------------------------

std::vector<const ClipRecord*> DatasetManifest::split(Split s) const {
  std::vector<const ClipRecord*> out;
  for (const ClipRecord& c : clips)
    if (c.split == s) out.push_back(&c);
  return out;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json clips = json::array();
  for (const ClipRecord& c : m.clips) {
    json labels = json::array();
    for (const LabelRun& r : c.labels) labels.push_back({{"label_id", r.label_id}, {"start", r.start}, {"end", r.end}});
    json views = json::array();
    for (View v : c.views) views.push_back(view_name(v));
    clips.push_back({{"clip_id", c.clip_id},
                     {"split", split_name(c.split)},
                     {"view", views},
                     {"fps", c.fps},
                     {"frames", c.frames},
                     {"labels", labels},
                     {"files", c.files}});
  }
  return json{{"format", "intercnn-manifest"}, {"version", 1}, {"clips", clips}}.dump(2);
}

DatasetManifest manifest_from_json(const std::string& text) {
  const json doc = detail::parse_json(text, "manifest");
  detail::require_keys(doc, {"format", "version", "clips"}, "manifest");
  if (doc.value("format", "") != "intercnn-manifest" || doc.value("version", 0) != 1)
    fail(ErrorKind::Config, "not an intercnn manifest (format/version)");
  DatasetManifest m;
  try {
    for (const json& j : doc.at("clips")) {
      detail::require_keys(j, {"clip_id", "split", "view", "fps", "frames", "labels", "files"}, "manifest clip");
      ClipRecord c;
      c.clip_id = j.at("clip_id").get<std::string>();
      c.split = parse_split(j.at("split").get<std::string>());
      for (const json& v : j.at("view")) c.views.push_back(parse_view(v.get<std::string>()));
      c.fps = j.at("fps").get<double>();
      c.frames = j.at("frames").get<std::size_t>();
      for (const json& r : j.at("labels")) {
        detail::require_keys(r, {"label_id", "start", "end"}, "manifest label run");
        c.labels.push_back({r.at("label_id").get<int>(), r.at("start").get<std::size_t>(),
                            r.at("end").get<std::size_t>()});
      }
      c.files = j.at("files").get<std::map<std::string, std::string>>();
      expand_label_runs(c.labels, c.frames);
      m.clips.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << manifest_to_json(m) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read manifest " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  DatasetManifest m = manifest_from_json(text.str());
  const auto root = path.parent_path();
  for (const ClipRecord& c : m.clips)
    for (const auto& [key, file] : c.files) {
      const auto p = root / file;
      if (!std::filesystem::exists(p))
        fail(ErrorKind::Io, "clip " + c.clip_id + " references missing file " + p.string());
      decode_container(read_file_bytes(p));
    }
  return m;
}

// ---------------------------------------------------------------------------

void DataConfig::validate() const {
  if (source_height < 2 || source_width < 2) fail(ErrorKind::Config, "source dims must be at least 2x2");
  if (!(source_fps > 0.0)) fail(ErrorKind::Config, "source_fps must be positive");
  if (segment_frames < kDownsampleFactor) fail(ErrorKind::Config, "segment_frames is too short");
  if (train_clips + validation_clips + test_clips == 0) fail(ErrorKind::Config, "dataset has no clips");
  if (!(noise >= 0.0)) fail(ErrorKind::Config, "noise must be >= 0");
  if (train_stride == 0 || eval_stride == 0) fail(ErrorKind::Config, "window strides must be positive");
  if (!(flow.smoothness > 0.0) || flow.iterations == 0) fail(ErrorKind::Config, "invalid flow settings");
  for (const CropSpec* c : {&side_crop, &front_crop}) {
    const CropBox& b = c->box;
    if (b.width == 0 || b.height == 0 || b.x0 + b.width > source_width || b.y0 + b.height > source_height)
      fail(ErrorKind::Config, std::string(view_name(c->view)) + " crop box exceeds the source frame");
    if (c->out_h == 0 || c->out_w == 0) fail(ErrorKind::Config, "crop target dims must be positive");
  }
  if (side_crop.out_h != front_crop.out_h || side_crop.out_w != front_crop.out_w)
    fail(ErrorKind::Config, "side and front crops must resize to the same dims");
  const std::size_t per_clip = 9 * ((segment_frames + kDownsampleFactor - 1) / kDownsampleFactor);
  if (per_clip < kWindowFrames) fail(ErrorKind::Config, "clips would be shorter than one window");
}

namespace detail {

namespace {

json crop_json(const CropSpec& c) {
  return json{{"box", {c.box.x0, c.box.y0, c.box.width, c.box.height}}, {"out_h", c.out_h}, {"out_w", c.out_w}};
}

void apply_crop_json(CropSpec& c, const json& j, const std::string& where) {
  require_keys(j, {"box", "out_h", "out_w"}, where);
  if (j.contains("box")) {
    const auto b = j.at("box").get<std::vector<std::size_t>>();
    if (b.size() != 4) fail(ErrorKind::Config, where + ".box must be [x0, y0, width, height]");
    c.box = {b[0], b[1], b[2], b[3]};
  }
  read_opt(j, "out_h", c.out_h, where);
  read_opt(j, "out_w", c.out_w, where);
}

}  // namespace

json data_json(const DataConfig& c) {
  return json{{"source_height", c.source_height},
              {"source_width", c.source_width},
              {"source_fps", c.source_fps},
              {"segment_frames", c.segment_frames},
              {"clips", {c.train_clips, c.validation_clips, c.test_clips}},
              {"noise", c.noise},
              {"side_crop", crop_json(c.side_crop)},
              {"front_crop", crop_json(c.front_crop)},
              {"flow", {{"smoothness", c.flow.smoothness}, {"iterations", c.flow.iterations}}},
              {"train_stride", c.train_stride},
              {"eval_stride", c.eval_stride}};
}

void apply_data_json(DataConfig& c, const json& j) {
  require_keys(j,
               {"source_height", "source_width", "source_fps", "segment_frames", "clips", "noise", "side_crop",
                "front_crop", "flow", "train_stride", "eval_stride", "dims"},
               "data");
  read_opt(j, "source_height", c.source_height, "data");
  read_opt(j, "source_width", c.source_width, "data");
  read_opt(j, "source_fps", c.source_fps, "data");
  read_opt(j, "segment_frames", c.segment_frames, "data");
  if (j.contains("clips")) {
    const auto v = j.at("clips").get<std::vector<std::size_t>>();
    if (v.size() != 3) fail(ErrorKind::Config, "data.clips must be [train, validation, test]");
    c.train_clips = v[0];
    c.validation_clips = v[1];
    c.test_clips = v[2];
  }
  read_opt(j, "noise", c.noise, "data");
  if (j.contains("side_crop")) apply_crop_json(c.side_crop, j.at("side_crop"), "data.side_crop");
  if (j.contains("front_crop")) apply_crop_json(c.front_crop, j.at("front_crop"), "data.front_crop");
  if (j.contains("dims")) {
    const auto d = j.at("dims").get<std::vector<std::size_t>>();
    if (d.size() != 2) fail(ErrorKind::Config, "data.dims must be [height, width]");
    for (CropSpec* s : {&c.side_crop, &c.front_crop}) {
      s->out_h = d[0];
      s->out_w = d[1];
    }
  }
  if (j.contains("flow")) {
    const json& f = j.at("flow");
    require_keys(f, {"smoothness", "iterations"}, "data.flow");
    read_opt(f, "smoothness", c.flow.smoothness, "data.flow");
    read_opt(f, "iterations", c.flow.iterations, "data.flow");
  }
  read_opt(j, "train_stride", c.train_stride, "data");
  read_opt(j, "eval_stride", c.eval_stride, "data");
}

}  // namespace detail

std::string data_config_to_json(const DataConfig& c) { return detail::data_json(c).dump(2); }

// ---------------------------------------------------------------------------

DatasetManifest preprocess_dataset(const std::filesystem::path& raw_dir, const DataConfig& cfg,
                                   const std::filesystem::path& out_dir) {
  cfg.validate();
  const DatasetManifest raw = read_manifest(raw_dir / kManifestName);
  DatasetManifest out;
  for (const ClipRecord& rec : raw.clips) {
    const auto file = rec.files.find("frames");
    if (file == rec.files.end()) fail(ErrorKind::Config, "clip " + rec.clip_id + " has no frames file");
    TensorMap entries = read_container(raw_dir / file->second);
    auto get = [&](const char* name) {
      auto it = entries.find(name);
      if (it == entries.end()) fail(ErrorKind::Config, "clip " + rec.clip_id + " lacks tensor '" + name + "'");
      if (it->second.rank() != 4 || it->second.dim(0) != rec.frames)
        fail(ErrorKind::Shape, "clip " + rec.clip_id + " tensor '" + name + "' has shape " +
                                   shape_str(it->second.shape()));
      return it->second;
    };
    const std::vector<int> labels = expand_label_runs(rec.labels, rec.frames);
    std::vector<int> kept = temporal_downsample(std::span<const int>(labels));
    Tensor side = crop_resize(temporal_downsample(get("side")), cfg.side_crop);
    Tensor front = crop_resize(temporal_downsample(get("front")), cfg.front_crop);
    PreparedClip clip = prepare_clip(rec.clip_id, std::move(side), std::move(front), kept, cfg.flow);

    TensorMap processed;
    processed.emplace("side/frames", clip.side_frames);
    processed.emplace("side/flows", clip.side_flows);
    processed.emplace("front/frames", clip.front_frames);
    processed.emplace("front/flows", clip.front_flows);
    const std::string rel = "clips/" + rec.clip_id + ".ictn";
    write_container(processed, out_dir / rel);

    ClipRecord r = rec;
    r.fps = rec.fps / static_cast<double>(kDownsampleFactor);
    r.frames = kept.size();
    r.labels = compress_labels(kept);
    r.files = {{"clip", rel}};
    out.clips.push_back(std::move(r));
  }
  write_manifest(out, out_dir / kManifestName);
  return out;
}

std::vector<PreparedClip> load_split(const std::filesystem::path& processed_dir, Split split) {
  const DatasetManifest m = read_manifest(processed_dir / kManifestName);
  std::vector<PreparedClip> clips;
  for (const ClipRecord* rec : m.split(split)) {
    const auto file = rec->files.find("clip");
    if (file == rec->files.end())
      fail(ErrorKind::Config, "clip " + rec->clip_id + " is not preprocessed (no 'clip' file)");
    TensorMap entries = read_container(processed_dir / file->second);
    PreparedClip c;
    c.id = rec->clip_id;
    c.labels = expand_label_runs(rec->labels, rec->frames);
    auto take = [&](const char* name, std::size_t depth, std::size_t channels) {
      auto it = entries.find(name);
      if (it == entries.end()) fail(ErrorKind::Config, "clip " + c.id + " lacks tensor '" + name + "'");
      if (it->second.rank() != 4 || it->second.dim(0) != depth || it->second.dim(3) != channels)
        fail(ErrorKind::Shape, "clip " + c.id + " tensor '" + name + "' has shape " + shape_str(it->second.shape()));
      return std::move(it->second);
    };
    c.side_frames = take("side/frames", rec->frames, 3);
    c.side_flows = take("side/flows", rec->frames - 1, 2);
    c.front_frames = take("front/frames", rec->frames, 3);
    c.front_flows = take("front/flows", rec->frames - 1, 2);
    clips.push_back(std::move(c));
  }
  return clips;
}

}  // namespace icnn
