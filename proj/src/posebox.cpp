#include <Eigen/Dense>
#include <cmath>

#include "pie/errors.hpp"
#include "pie/image.hpp"
#include "pie/posebox.hpp"
#include "pie/rng.hpp"

namespace pie {

const char* part_name(PartName p) {
  static const char* names[kNumParts] = {
      "head",     "torso",    "ul_arm_l", "ll_arm_l", "ul_arm_r",
      "ll_arm_r", "ul_leg_l", "ll_leg_l", "ul_leg_r", "ll_leg_r"};
  return names[static_cast<int>(p)];
}

PoseBoxTemplate PoseBoxTemplate::standard() {
  PoseBoxTemplate t;
  t.canvas_h = 128;
  t.canvas_w = 64;
  t.target_rects = {
      {PartName::kHead, {24, 0, 40, 16}},
      {PartName::kTorso, {16, 16, 48, 72}},
      {PartName::kUpperArmL, {0, 16, 16, 44}},
      {PartName::kLowerArmL, {0, 44, 16, 72}},
      {PartName::kUpperArmR, {48, 16, 64, 44}},
      {PartName::kLowerArmR, {48, 44, 64, 72}},
      {PartName::kUpperLegL, {8, 72, 32, 100}},
      {PartName::kLowerLegL, {8, 100, 32, 128}},
      {PartName::kUpperLegR, {32, 72, 56, 100}},
      {PartName::kLowerLegR, {32, 100, 56, 128}},
  };
  return t;
}

std::vector<PartName> PoseBoxTemplate::type_subset(int box_type) {
  if (box_type < 1 || box_type > 3)
    throw ValidationError("PoseBox type must be 1, 2 or 3, got " +
                          std::to_string(box_type));
  std::vector<PartName> parts = {PartName::kTorso, PartName::kUpperLegL,
                                 PartName::kLowerLegL, PartName::kUpperLegR,
                                 PartName::kLowerLegR};
  if (box_type >= 2) {
    parts.push_back(PartName::kUpperArmL);
    parts.push_back(PartName::kLowerArmL);
    parts.push_back(PartName::kUpperArmR);
    parts.push_back(PartName::kLowerArmR);
  }
  if (box_type >= 3) parts.push_back(PartName::kHead);
  return parts;
}

namespace {

double min_conf(const JointSet& js, std::initializer_list<JointId> ids) {
  double c = 1.0;
  for (JointId id : ids) c = std::min(c, js.at(id).c);
  return c;
}

Point joint_point(const JointSet& js, JointId id) {
  return {js.at(id).x, js.at(id).y};
}

/// Quad of the given width centered on the p1->p2 segment, corners ordered
/// proximal-left, proximal-right, distal-right, distal-left.
std::array<Point, 4> segment_quad(const Point& p1, const Point& p2,
                                  double width) {
  const double dx = p2.x - p1.x;
  const double dy = p2.y - p1.y;
  const double len = std::hypot(dx, dy);
  Point perp{0.0, 0.0};
  if (len > 0.0) perp = {dy / len, -dx / len};
  const double h = width / 2.0;
  return {Point{p1.x - h * perp.x, p1.y - h * perp.y},
          Point{p1.x + h * perp.x, p1.y + h * perp.y},
          Point{p2.x + h * perp.x, p2.y + h * perp.y},
          Point{p2.x - h * perp.x, p2.y - h * perp.y}};
}

}  // namespace

std::array<PartSpec, kNumParts> derive_parts(const JointSet& js) {
  constexpr double kArmWidth = 20.0;
  constexpr double kLegWidth = 30.0;

  std::array<PartSpec, kNumParts> parts;
  auto set = [&](PartName name, const std::array<Point, 4>& quad,
                 std::initializer_list<JointId> defining) {
    auto& p = parts[static_cast<int>(name)];
    p.name = name;
    p.src_quad = quad;
    p.confidence = min_conf(js, defining);
  };

  // Head: box along the head->neck axis, width 2/3 of its height.
  {
    const Point head = joint_point(js, JointId::kHead);
    const Point neck = joint_point(js, JointId::kNeck);
    const double height = std::hypot(neck.x - head.x, neck.y - head.y);
    set(PartName::kHead, segment_quad(head, neck, height * 2.0 / 3.0),
        {JointId::kHead, JointId::kNeck});
  }

  // Torso: quadrangle through the two shoulders and the two hips.
  set(PartName::kTorso,
      {joint_point(js, JointId::kRShoulder), joint_point(js, JointId::kLShoulder),
       joint_point(js, JointId::kLHip), joint_point(js, JointId::kRHip)},
      {JointId::kRShoulder, JointId::kLShoulder, JointId::kLHip,
       JointId::kRHip});

  auto limb = [&](PartName name, JointId a, JointId b, double width) {
    set(name, segment_quad(joint_point(js, a), joint_point(js, b), width),
        {a, b});
  };
  limb(PartName::kUpperArmL, JointId::kLShoulder, JointId::kLElbow, kArmWidth);
  limb(PartName::kLowerArmL, JointId::kLElbow, JointId::kLWrist, kArmWidth);
  limb(PartName::kUpperArmR, JointId::kRShoulder, JointId::kRElbow, kArmWidth);
  limb(PartName::kLowerArmR, JointId::kRElbow, JointId::kRWrist, kArmWidth);
  limb(PartName::kUpperLegL, JointId::kLHip, JointId::kLKnee, kLegWidth);
  limb(PartName::kLowerLegL, JointId::kLKnee, JointId::kLAnkle, kLegWidth);
  limb(PartName::kUpperLegR, JointId::kRHip, JointId::kRKnee, kLegWidth);
  limb(PartName::kLowerLegR, JointId::kRKnee, JointId::kRAnkle, kLegWidth);
  return parts;
}

namespace {

constexpr double kConditionLimit = 1e6;
constexpr double kJitterThreshold = 0.4;  // confidence below which jitter runs
constexpr double kJitterPx = 2.0;
constexpr int kMaxAttempts = 5;

std::array<Point, 4> rect_corners(const Rect& r) {
  return {Point{static_cast<double>(r.x0), static_cast<double>(r.y0)},
          Point{static_cast<double>(r.x1), static_cast<double>(r.y0)},
          Point{static_cast<double>(r.x1), static_cast<double>(r.y1)},
          Point{static_cast<double>(r.x0), static_cast<double>(r.y1)}};
}

/// Solves min sum_i |A d_i + t - s_i|^2 over the 4 correspondences.
AffineTransform solve_least_squares(const std::array<Point, 4>& dst,
                                    const std::array<Point, 4>& src) {
  Eigen::Matrix<double, 4, 3> design;
  Eigen::Matrix<double, 4, 2> target;
  for (int i = 0; i < 4; ++i) {
    design(i, 0) = dst[i].x;
    design(i, 1) = dst[i].y;
    design(i, 2) = 1.0;
    target(i, 0) = src[i].x;
    target(i, 1) = src[i].y;
  }
  const Eigen::Matrix<double, 3, 2> sol =
      design.colPivHouseholderQr().solve(target);
  AffineTransform t;
  t.a00 = sol(0, 0);
  t.a01 = sol(1, 0);
  t.tx = sol(2, 0);
  t.a10 = sol(0, 1);
  t.a11 = sol(1, 1);
  t.ty = sol(2, 1);
  return t;
}

// A fit is unusable when the linear part is ill-conditioned or when its
// minimum stretch falls to the jitter scale: a quad whose whole image-space
// extent is comparable to the +-2 px disturbance carries no geometry, so a
// jittered refit must not be able to fake a valid map from it.
constexpr double kMinStretch = 0.2;

bool near_singular(const AffineTransform& t) {
  Eigen::Matrix2d a;
  a << t.a00, t.a01, t.a10, t.a11;
  const Eigen::JacobiSVD<Eigen::Matrix2d> svd(a);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(1);
  if (!(smax > 0.0) || !std::isfinite(smax)) return true;
  return smin < kMinStretch || smax / smin > kConditionLimit;
}

}  // namespace

AffineTransform fit_affine(const std::array<Point, 4>& src_quad,
                           const Rect& dst_rect, double part_confidence,
                           std::uint64_t rng_seed, PartName part) {
  if (dst_rect.width() <= 0 || dst_rect.height() <= 0)
    throw ValidationError("degenerate destination rectangle");

  const auto dst = rect_corners(dst_rect);
  AffineTransform fit = solve_least_squares(dst, src_quad);
  if (!near_singular(fit)) return fit;

  // Low-confidence parts get seeded jitter on the source corners.
  if (part_confidence >= kJitterThreshold) throw PartDegenerate(part);
  Rng rng(rng_seed);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::array<Point, 4> jittered = src_quad;
    for (auto& p : jittered) {
      p.x += rng.uniform(-kJitterPx, kJitterPx);
      p.y += rng.uniform(-kJitterPx, kJitterPx);
    }
    fit = solve_least_squares(dst, jittered);
    if (!near_singular(fit)) return fit;
  }
  throw PartDegenerate(part);
}

double fit_residual(const AffineTransform& xform,
                    const std::array<Point, 4>& src_quad,
                    const Rect& dst_rect) {
  const auto dst = rect_corners(dst_rect);
  double worst = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Point mapped = xform.apply(dst[i]);
    worst = std::max(worst, std::hypot(mapped.x - src_quad[i].x,
                                       mapped.y - src_quad[i].y));
  }
  return worst;
}

void warp_part(const ImageTensor& img, const AffineTransform& xform,
               const Rect& dst_rect, ImageTensor& canvas) {
  for (int y = dst_rect.y0; y < dst_rect.y1; ++y) {
    for (int x = dst_rect.x0; x < dst_rect.x1; ++x) {
      // Pixel centers; bilinear_sample's integer grid is pixel centers too.
      const Point src = xform.apply({x + 0.5, y + 0.5});
      for (int ch = 0; ch < 3; ++ch)
        canvas.at(y, x, ch) = bilinear_sample(img, src.x - 0.5, src.y - 0.5, ch);
    }
  }
}

PoseBoxResult build_posebox(const ImageTensor& img, const JointSet& joints,
                            int box_type, const PoseBoxTemplate& tmpl,
                            std::uint64_t rng_seed) {
  const auto parts = derive_parts(joints);
  PoseBoxResult result;
  result.canvas = ImageTensor(tmpl.canvas_h, tmpl.canvas_w, 0.0f);

  for (PartName name : PoseBoxTemplate::type_subset(box_type)) {
    const auto& part = parts[static_cast<int>(name)];
    const Rect& rect = tmpl.target_rects.at(name);
    try {
      const AffineTransform xform =
          fit_affine(part.src_quad, rect, part.confidence,
                     Rng::derive(rng_seed, static_cast<std::uint64_t>(name)),
                     name);
      warp_part(img, xform, rect, result.canvas);
    } catch (const PartDegenerate&) {
      result.degenerate_parts.push_back(name);
    }
  }
  return result;
}

}  // namespace pie
