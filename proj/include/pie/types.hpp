#ifndef PIE_TYPES_HPP_
#define PIE_TYPES_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pie {

// ---------------------------------------------------------------------------
// Joints
// ---------------------------------------------------------------------------

inline constexpr int kNumJoints = 14;

/// Fixed joint order used in every keypoints file and confidence vector.
enum class JointId : int {
  kHead = 0,
  kNeck,
  kRShoulder,
  kRElbow,
  kRWrist,
  kLShoulder,
  kLElbow,
  kLWrist,
  kRHip,
  kRKnee,
  kRAnkle,
  kLHip,
  kLKnee,
  kLAnkle,
};

inline const char* joint_name(JointId id) {
  static const char* names[kNumJoints] = {
      "head",    "neck",    "r_shoulder", "r_elbow", "r_wrist",
      "l_shoulder", "l_elbow", "l_wrist", "r_hip",   "r_knee",
      "r_ankle", "l_hip",   "l_knee",     "l_ankle"};
  return names[static_cast<int>(id)];
}

struct Joint {
  double x = 0.0;  // pixels; may lie outside image bounds
  double y = 0.0;
  double c = 0.0;  // confidence in [0, 1]
};

struct JointSet {
  std::array<Joint, kNumJoints> joints;

  const Joint& at(JointId id) const { return joints[static_cast<int>(id)]; }
  Joint& at(JointId id) { return joints[static_cast<int>(id)]; }
};

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

enum class Split { kTrain, kQuery, kGallery };

const char* split_name(Split s);
Split split_from_string(const std::string& s);

struct SampleRecord {
  std::string image_path;
  int identity = 0;
  int camera = 0;
  Split split = Split::kTrain;
};

struct DatasetManifest {
  std::vector<SampleRecord> records;
  std::map<int, std::vector<std::size_t>> id_index;

  std::vector<std::size_t> split_indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i)
      if (records[i].split == s) out.push_back(i);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Images and features
// ---------------------------------------------------------------------------

/// Row-major H x W x 3 image, values in [0, 1].
struct ImageTensor {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // height * width * 3

  ImageTensor() = default;
  ImageTensor(int h, int w, float fill = 0.0f)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int ch) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }
  float at(int y, int x, int ch) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }
};

enum class FeatureProvenance : std::uint8_t {
  kBaselineImg = 0,
  kBaselinePb = 1,
  kPieConcat = 2,
  kPieFused = 3,
};

/// n row vectors of equal dimension, stored row-major as f32.
struct FeatureMatrix {
  std::uint32_t n = 0;
  std::uint32_t dim = 0;
  std::vector<float> rows;  // n * dim
  FeatureProvenance provenance = FeatureProvenance::kPieConcat;

  const float* row(std::size_t i) const { return rows.data() + i * dim; }
  float* row(std::size_t i) { return rows.data() + i * dim; }
};

}  // namespace pie

#endif  // PIE_TYPES_HPP_
