#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "intercnn/optical_flow.hpp"
#include "intercnn/window.hpp"

namespace icnn {

enum class View { Side, Front };
const char* view_name(View v);
View parse_view(const std::string& s);

/// Pixel box within a source frame.
struct CropBox {
  std::size_t x0 = 0, y0 = 0, width = 0, height = 0;
};

struct CropSpec {
  View view = View::Side;
  CropBox box;
  std::size_t out_h = 32, out_w = 32;
};

/// Crops [H,W,3] (or every frame of [T,H,W,3]) and resizes bilinearly with
/// corner-aligned sampling.
Tensor crop_resize(const Tensor& frames, const CropSpec& spec);

inline constexpr std::size_t kDownsampleFactor = 3;

/// Keeps frames 0, f, 2f, ... along the leading axis.
Tensor temporal_downsample(const Tensor& frames, std::size_t factor = kDownsampleFactor);
std::vector<int> temporal_downsample(std::span<const int> labels, std::size_t factor = kDownsampleFactor);

/// Frames [start, end) carry label_id.
struct LabelRun {
  int label_id = 0;
  std::size_t start = 0, end = 0;
};

/// Throws Config unless the runs tile [0, frames) exactly.
std::vector<int> expand_label_runs(const std::vector<LabelRun>& runs, std::size_t frames);
std::vector<LabelRun> compress_labels(std::span<const int> labels);

/// Most frequent label; ties go to the label of the earliest frame among them.
int window_label(std::span<const int> frame_labels);

/// Both views at model resolution, flows between consecutive frames.
struct PreparedClip {
  std::string id;
  Tensor side_frames;   // [T,h,w,3]
  Tensor side_flows;    // [T-1,h,w,2]
  Tensor front_frames;  // [T,h,w,3]
  Tensor front_flows;   // [T-1,h,w,2]
  std::vector<int> labels;

  std::size_t frames() const { return labels.size(); }
};

/// Computes per-view flow sequences over the given frames.
PreparedClip prepare_clip(std::string id, Tensor side_frames, Tensor front_frames, std::vector<int> labels,
                          const HornSchunckOptions& flow = {});

std::size_t window_count(std::size_t frames, std::size_t stride);
SampleWindow window_at(const PreparedClip& clip, std::size_t start);
/// Sliding 15-frame windows; throws InsufficientFrames for short clips.
std::vector<SampleWindow> assemble_windows(const PreparedClip& clip, std::size_t stride);

struct WindowRef {
  std::size_t clip = 0;
  std::size_t start = 0;
  int label = 0;
};
std::vector<WindowRef> index_windows(std::span<const PreparedClip> clips, std::size_t stride);

enum class Split { Train, Validation, Test };
const char* split_name(Split s);
Split parse_split(const std::string& s);

struct ClipRecord {
  std::string clip_id;
  Split split = Split::Train;
  std::vector<View> views;
  double fps = 0.0;
  std::size_t frames = 0;
  std::vector<LabelRun> labels;
  std::map<std::string, std::string> files;  // relative to the manifest directory
};

struct DatasetManifest {
  std::vector<ClipRecord> clips;

  std::vector<const ClipRecord*> split(Split s) const;
};

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
/// Parses the manifest and checks that every referenced file exists and decodes.
DatasetManifest read_manifest(const std::filesystem::path& path);

inline constexpr const char* kManifestName = "manifest.json";

struct DataConfig {
  std::size_t source_height = 18;
  std::size_t source_width = 32;
  double source_fps = 24.0;
  std::size_t segment_frames = 48;  // source frames per behaviour segment
  std::size_t train_clips = 30;
  std::size_t validation_clips = 10;
  std::size_t test_clips = 10;
  double noise = 0.03;
  CropSpec side_crop{View::Side, {2, 0, 28, 18}, 32, 32};
  CropSpec front_crop{View::Front, {6, 1, 20, 17}, 32, 32};
  HornSchunckOptions flow;
  std::size_t train_stride = 1;
  std::size_t eval_stride = 15;

  void validate() const;
};

std::string data_config_to_json(const DataConfig& c);

/// Renders clips at source resolution and writes raw frame containers plus a
/// manifest under out_dir. Every clip holds one segment of each behaviour in
/// a random order.
DatasetManifest generate_synthetic_dataset(const DataConfig& cfg, std::uint64_t seed,
                                           const std::filesystem::path& out_dir);

/// Downsample, crop/resize and flow for every clip of a raw dataset.
DatasetManifest preprocess_dataset(const std::filesystem::path& raw_dir, const DataConfig& cfg,
                                   const std::filesystem::path& out_dir);

/// Loads the preprocessed clips of one split.
std::vector<PreparedClip> load_split(const std::filesystem::path& processed_dir, Split split);

}  // namespace icnn
