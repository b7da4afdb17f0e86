#ifndef PIE_IO_HPP_
#define PIE_IO_HPP_

#include <map>
#include <string>

#include "pie/types.hpp"

namespace pie {

// Manifest CSV: header `image_path,identity,camera,split`, one record per
// line. Train identities must be disjoint from query/gallery identities and
// every query identity must appear in the gallery under a different camera.
DatasetManifest parse_manifest(const std::string& path);
void write_manifest(const DatasetManifest& manifest, const std::string& path);

// Keypoints: JSON lines, one object per image:
//   {"image": <path>, "joints": [[x, y, c] x 14]}
// Joint order is the JointId order.
std::map<std::string, JointSet> parse_keypoints(const std::string& path);
void write_keypoints(const std::map<std::string, JointSet>& keypoints,
                     const std::string& path);

// Feature file: magic `PIEF`, u16 version, u32 count, u32 dim, then
// little-endian f32 row-major payload. Round-trip is bit-exact.
void write_features(const FeatureMatrix& features, const std::string& path);
FeatureMatrix read_features(const std::string& path);

// PNG I/O. Pixels are scaled by 1/255 into [0, 1] on load and rounded back
// to 8-bit on save.
ImageTensor load_png(const std::string& path);
void save_png(const ImageTensor& image, const std::string& path);

}  // namespace pie

#endif  // PIE_IO_HPP_
