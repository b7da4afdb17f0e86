#ifndef PIE_POSEBOX_HPP_
#define PIE_POSEBOX_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "pie/types.hpp"

namespace pie {

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Half-open axis-aligned rectangle in canvas pixels: [x0,x1) x [y0,y1).
struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

/// 2x3 affine map from canvas (destination) coordinates to image (source)
/// coordinates -- the inverse-warp direction.
struct AffineTransform {
  double a00 = 1.0, a01 = 0.0, tx = 0.0;
  double a10 = 0.0, a11 = 1.0, ty = 0.0;

  Point apply(const Point& p) const {
    return {a00 * p.x + a01 * p.y + tx, a10 * p.x + a11 * p.y + ty};
  }
};

// ---------------------------------------------------------------------------
// Parts
// ---------------------------------------------------------------------------

inline constexpr int kNumParts = 10;

enum class PartName : int {
  kHead = 0,
  kTorso,
  kUpperArmL,
  kLowerArmL,
  kUpperArmR,
  kLowerArmR,
  kUpperLegL,
  kLowerLegL,
  kUpperLegR,
  kLowerLegR,
};

const char* part_name(PartName p);

/// A body part as a source quadrilateral in image pixels. Corners are
/// ordered [proximal-left, proximal-right, distal-right, distal-left] so
/// they correspond one-to-one with the target rectangle corners
/// [top-left, top-right, bottom-right, bottom-left].
struct PartSpec {
  PartName name = PartName::kHead;
  std::array<Point, 4> src_quad;
  double confidence = 0.0;  // min over the part's defining joints
};

/// Fixed target-rectangle layout shared by all PoseBoxes.
struct PoseBoxTemplate {
  int canvas_h = 0;
  int canvas_w = 0;
  std::map<PartName, Rect> target_rects;

  /// 128(H) x 64(W) canvas: head on top, torso centered, arms at the
  /// sides, legs below.
  static PoseBoxTemplate standard();

  /// Parts of a PoseBox type in paint order (torso, legs, arms, head).
  /// Type 1 = torso + legs, type 2 adds arms, type 3 adds the head.
  static std::vector<PartName> type_subset(int box_type);
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// A part whose affine fit stayed singular after all jitter retries.
class PartDegenerate : public std::runtime_error {
 public:
  explicit PartDegenerate(PartName part)
      : std::runtime_error("degenerate part"), part_(part) {}
  PartName part() const { return part_; }

 private:
  PartName part_;
};

/// Derives the 10 part quadrilaterals from a joint set. Head box height is
/// the head-neck distance and its width 2/3 of that; arm segments are 20 px
/// wide, leg segments 30 px, both perpendicular to the joint segment; the
/// torso is the shoulder/hip quadrangle. Degenerate geometry is not an
/// error here -- it surfaces in fit_affine.
std::array<PartSpec, kNumParts> derive_parts(const JointSet& joints);

/// Least-squares affine fit over the 4 corner correspondences, mapping
/// dst_rect corners to src_quad corners. When the fitted linear part is
/// near-singular (condition number > 1e6) and part_confidence < 0.4, the
/// source corners are jittered by +-2 px (seeded) and the fit retried, up
/// to 5 attempts. Throws PartDegenerate if still singular.
AffineTransform fit_affine(const std::array<Point, 4>& src_quad,
                           const Rect& dst_rect, double part_confidence,
                           std::uint64_t rng_seed,
                           PartName part = PartName::kHead);

/// Maximum corner residual of the fit (image pixels).
double fit_residual(const AffineTransform& xform,
                    const std::array<Point, 4>& src_quad, const Rect& dst_rect);

/// Inverse-warps the source image into canvas[dst_rect] by sampling img at
/// the affine-mapped location of each destination pixel center, bilinear,
/// background 0 outside the image.
void warp_part(const ImageTensor& img, const AffineTransform& xform,
               const Rect& dst_rect, ImageTensor& canvas);

struct PoseBoxResult {
  ImageTensor canvas;
  std::vector<PartName> degenerate_parts;  // left as background
};

/// Builds a type-1/2/3 PoseBox. Degenerate parts are reported, not fatal.
PoseBoxResult build_posebox(const ImageTensor& img, const JointSet& joints,
                            int box_type, const PoseBoxTemplate& tmpl,
                            std::uint64_t rng_seed);

}  // namespace pie

#endif  // PIE_POSEBOX_HPP_
