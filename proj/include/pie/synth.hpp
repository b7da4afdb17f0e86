#ifndef PIE_SYNTH_HPP_
#define PIE_SYNTH_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pie/types.hpp"

namespace pie {

/// Synthetic pedestrian benchmark: stick figures with per-identity clothing
/// colors, camera-specific backgrounds, seeded pose jitter, vertical
/// misalignment and joint corruption.
struct SynthConfig {
  int n_ids = 10;
  int images_per_id = 4;
  int n_cameras = 2;
  double pose_jitter_deg = 0.0;   // max limb-angle perturbation
  double v_misalign_px = 0.0;     // max vertical offset (detector error)
  double conf_noise = 0.0;        // per-joint corruption probability
  std::uint64_t seed = 0;
  int image_h = 128;
  int image_w = 64;

  void validate() const;
};

struct SynthSample {
  ImageTensor image;
  JointSet joints;
  SampleRecord record;
};

struct SynthDataset {
  DatasetManifest manifest;
  std::vector<SynthSample> samples;  // parallel to manifest.records
};

/// Generates the dataset in memory. Half the identities go to train; the
/// other half contribute one query (camera 0) and the remaining images as
/// gallery. Deterministic per (config, seed): per-image state derives from
/// seed and image index only.
SynthDataset synth_generate(const SynthConfig& config);

/// Generates and writes PNGs, manifest.csv and keypoints.jsonl to out_dir.
void synth_write(const SynthConfig& config, const std::string& out_dir);

}  // namespace pie

#endif  // PIE_SYNTH_HPP_
