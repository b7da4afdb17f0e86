#include <algorithm>
#include <cmath>
#include <filesystem>

#include "pie/errors.hpp"
#include "pie/io.hpp"
#include "pie/rng.hpp"
#include "pie/synth.hpp"

namespace pie {

void SynthConfig::validate() const {
  if (n_ids < 2) throw ValidationError("need at least 2 identities");
  if (images_per_id < 2)
    throw ValidationError("need at least 2 images per identity");
  if (n_cameras < 2) throw ValidationError("need at least 2 cameras");
  if (pose_jitter_deg < 0.0 || v_misalign_px < 0.0)
    throw ValidationError("jitter magnitudes must be >= 0");
  if (conf_noise < 0.0 || conf_noise > 1.0)
    throw ValidationError("conf_noise must be in [0,1]");
  if (image_h < 96 || image_w < 48)
    throw ValidationError("image canvas too small for the figure");
}

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - f * s);
  const double t = v * (1.0 - (1.0 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

/// Per-identity clothing signature: golden-ratio hue spacing keeps colors
/// well separated across identities.
struct IdentityColors {
  Rgb torso, arms, legs, hair;
};

IdentityColors identity_colors(int id, std::uint64_t seed) {
  Rng rng(Rng::derive(seed, 5000 + static_cast<std::uint64_t>(id)));
  const double hue_t = std::fmod(id * 0.6180339887 + rng.uniform() * 0.05, 1.0);
  const double hue_l = std::fmod(hue_t + 0.38 + rng.uniform() * 0.05, 1.0);
  IdentityColors c;
  c.torso = hsv_to_rgb(hue_t, 0.65 + 0.3 * rng.uniform(), 0.6 + 0.35 * rng.uniform());
  c.arms = {c.torso.r * 0.8, c.torso.g * 0.8, c.torso.b * 0.8};
  c.legs = hsv_to_rgb(hue_l, 0.65 + 0.3 * rng.uniform(), 0.55 + 0.35 * rng.uniform());
  const double hue_h = std::fmod(hue_t + 0.17 + rng.uniform() * 0.08, 1.0);
  c.hair = hsv_to_rgb(hue_h, 0.45 + 0.45 * rng.uniform(), 0.2 + 0.7 * rng.uniform());
  return c;
}

struct Pt {
  double x, y;
};

/// Fills a convex quad given in consistent winding.
void fill_quad(ImageTensor& img, const Pt q[4], const Rgb& color) {
  double min_x = q[0].x, max_x = q[0].x, min_y = q[0].y, max_y = q[0].y;
  for (int i = 1; i < 4; ++i) {
    min_x = std::min(min_x, q[i].x);
    max_x = std::max(max_x, q[i].x);
    min_y = std::min(min_y, q[i].y);
    max_y = std::max(max_y, q[i].y);
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(min_x)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(max_x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(min_y)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(max_y)));

  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      bool pos = false, neg = false;
      for (int i = 0; i < 4; ++i) {
        const Pt& a = q[i];
        const Pt& b = q[(i + 1) % 4];
        const double cross = (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
        pos |= cross > 0.0;
        neg |= cross < 0.0;
      }
      if (pos && neg) continue;  // outside
      img.at(y, x, 0) = static_cast<float>(color.r);
      img.at(y, x, 1) = static_cast<float>(color.g);
      img.at(y, x, 2) = static_cast<float>(color.b);
    }
  }
}

void fill_segment(ImageTensor& img, const Pt& a, const Pt& b, double width,
                  const Rgb& color) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len = std::hypot(dx, dy);
  if (len <= 0.0) return;
  const double ox = dy / len * width / 2.0, oy = -dx / len * width / 2.0;
  const Pt quad[4] = {{a.x - ox, a.y - oy},
                      {a.x + ox, a.y + oy},
                      {b.x + ox, b.y + oy},
                      {b.x - ox, b.y - oy}};
  fill_quad(img, quad, color);
}

/// True joint positions of the rendered figure, before corruption.
JointSet make_pose(Rng& rng, double jitter_deg, double v_off, double x_off,
                   int canvas_h, int canvas_w) {
  const double cx = canvas_w / 2.0 + x_off;
  const double top = (canvas_h - 128.0) / 2.0 + v_off;
  auto jangle = [&](double base_deg) {
    return (base_deg + rng.uniform(-jitter_deg, jitter_deg)) * kPi / 180.0;
  };
  // Limb endpoint at `len` from the parent, angle measured from vertical-down.
  auto limb = [&](const Joint& parent, double len, double angle) {
    Joint j;
    j.x = parent.x + len * std::sin(angle);
    j.y = parent.y + len * std::cos(angle);
    j.c = 1.0;
    return j;
  };

  JointSet js;
  Joint neck{cx, top + 26.0, 1.0};
  // Head sits above the neck, jittered about vertical-up.
  const double head_angle = jangle(180.0);
  Joint head = limb(neck, 14.0, head_angle);

  Joint r_sh{cx - 10.0, top + 30.0, 1.0};
  Joint l_sh{cx + 10.0, top + 30.0, 1.0};
  Joint r_hip{cx - 8.0, top + 70.0, 1.0};
  Joint l_hip{cx + 8.0, top + 70.0, 1.0};

  const double r_ua = jangle(-14.0);
  const double l_ua = jangle(14.0);
  Joint r_el = limb(r_sh, 20.0, r_ua);
  Joint l_el = limb(l_sh, 20.0, l_ua);
  Joint r_wr = limb(r_el, 18.0, jangle(-10.0));
  Joint l_wr = limb(l_el, 18.0, jangle(10.0));

  Joint r_kn = limb(r_hip, 26.0, jangle(-4.0));
  Joint l_kn = limb(l_hip, 26.0, jangle(4.0));
  Joint r_an = limb(r_kn, 24.0, jangle(-2.0));
  Joint l_an = limb(l_kn, 24.0, jangle(2.0));

  js.at(JointId::kHead) = head;
  js.at(JointId::kNeck) = neck;
  js.at(JointId::kRShoulder) = r_sh;
  js.at(JointId::kRElbow) = r_el;
  js.at(JointId::kRWrist) = r_wr;
  js.at(JointId::kLShoulder) = l_sh;
  js.at(JointId::kLElbow) = l_el;
  js.at(JointId::kLWrist) = l_wr;
  js.at(JointId::kRHip) = r_hip;
  js.at(JointId::kRKnee) = r_kn;
  js.at(JointId::kRAnkle) = r_an;
  js.at(JointId::kLHip) = l_hip;
  js.at(JointId::kLKnee) = l_kn;
  js.at(JointId::kLAnkle) = l_an;
  return js;
}

void render_background(ImageTensor& img, int camera, Rng& rng) {
  // Fixed per-camera base color plus stripes and per-pixel noise.
  const Rgb bases[4] = {{0.50, 0.48, 0.45},
                        {0.44, 0.46, 0.50},
                        {0.48, 0.50, 0.44},
                        {0.46, 0.44, 0.49}};
  const Rgb base = bases[camera % 4];
  const double phase = rng.uniform(0.0, 2.0 * kPi);
  for (int y = 0; y < img.height; ++y) {
    const double stripe = 0.03 * std::sin(y / 3.0 + phase);
    for (int x = 0; x < img.width; ++x) {
      const double noise = rng.uniform(-0.02, 0.02);
      const double vals[3] = {base.r + stripe + noise, base.g + stripe + noise,
                              base.b + stripe + noise};
      for (int ch = 0; ch < 3; ++ch)
        img.at(y, x, ch) = static_cast<float>(std::clamp(vals[ch], 0.0, 1.0));
    }
  }
}

void render_figure(ImageTensor& img, const JointSet& js,
                   const IdentityColors& colors) {
  auto pt = [&](JointId id) {
    return Pt{js.at(id).x, js.at(id).y};
  };
  // Torso first, arms and legs over it, head last.
  {
    const Pt torso[4] = {
        {pt(JointId::kRShoulder).x - 3, pt(JointId::kRShoulder).y},
        {pt(JointId::kLShoulder).x + 3, pt(JointId::kLShoulder).y},
        {pt(JointId::kLHip).x + 3, pt(JointId::kLHip).y},
        {pt(JointId::kRHip).x - 3, pt(JointId::kRHip).y}};
    fill_quad(img, torso, colors.torso);
  }
  fill_segment(img, pt(JointId::kRShoulder), pt(JointId::kRElbow), 7, colors.arms);
  fill_segment(img, pt(JointId::kRElbow), pt(JointId::kRWrist), 7, colors.arms);
  fill_segment(img, pt(JointId::kLShoulder), pt(JointId::kLElbow), 7, colors.arms);
  fill_segment(img, pt(JointId::kLElbow), pt(JointId::kLWrist), 7, colors.arms);
  fill_segment(img, pt(JointId::kRHip), pt(JointId::kRKnee), 9, colors.legs);
  fill_segment(img, pt(JointId::kRKnee), pt(JointId::kRAnkle), 9, colors.legs);
  fill_segment(img, pt(JointId::kLHip), pt(JointId::kLKnee), 9, colors.legs);
  fill_segment(img, pt(JointId::kLKnee), pt(JointId::kLAnkle), 9, colors.legs);
  const Rgb skin{0.88, 0.72, 0.58};
  fill_segment(img, pt(JointId::kHead), pt(JointId::kNeck), 9, skin);
  // Hair cap over the upper half of the head: an identity cue that only the
  // original-image stream can exploit (PoseBox types 1-2 omit the head).
  const Pt h = pt(JointId::kHead), n = pt(JointId::kNeck);
  const Pt mid{(h.x + n.x) / 2.0, (h.y + n.y) / 2.0};
  fill_segment(img, h, mid, 11, colors.hair);
}

void apply_camera_cast(ImageTensor& img, int camera) {
  if (camera == 0) return;
  const double gains[3] = {1.0 - 0.04 * camera, 1.0 - 0.01 * camera,
                           1.0 + 0.03 * camera};
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int ch = 0; ch < 3; ++ch)
        img.at(y, x, ch) = static_cast<float>(
            std::clamp(img.at(y, x, ch) * gains[ch], 0.0, 1.0));
}

}  // namespace

SynthDataset synth_generate(const SynthConfig& config) {
  config.validate();
  const int n_train_ids = config.n_ids / 2;

  SynthDataset ds;
  std::uint64_t image_index = 0;
  for (int id = 0; id < config.n_ids; ++id) {
    const IdentityColors colors = identity_colors(id, config.seed);
    for (int k = 0; k < config.images_per_id; ++k, ++image_index) {
      Rng rng(Rng::derive(config.seed, image_index));
      const int camera = k % config.n_cameras;

      SynthSample sample;
      sample.image = ImageTensor(config.image_h, config.image_w);
      render_background(sample.image, camera, rng);

      const double v_off = rng.uniform(-config.v_misalign_px, config.v_misalign_px);
      const JointSet true_pose = make_pose(rng, config.pose_jitter_deg, v_off,
                                           0.0, config.image_h, config.image_w);
      render_figure(sample.image, true_pose, colors);
      apply_camera_cast(sample.image, camera);

      // Reported joints: corrupted with probability conf_noise each.
      sample.joints = true_pose;
      for (auto& j : sample.joints.joints) {
        if (rng.uniform() < config.conf_noise) {
          j.x += rng.uniform(-40.0, 40.0);
          j.y += rng.uniform(-40.0, 40.0);
          j.c = rng.uniform(0.0, 0.4);
        }
      }

      sample.record.image_path = "img_" + std::to_string(id) + "_" +
                                 std::to_string(k) + "_cam" +
                                 std::to_string(camera) + ".png";
      sample.record.identity = id;
      sample.record.camera = camera;
      // Test identities contribute two queries (one per camera) when
      // enough images exist, halving the evaluation variance.
      const int n_query = config.images_per_id >= 4 ? 2 : 1;
      if (id < n_train_ids)
        sample.record.split = Split::kTrain;
      else
        sample.record.split = k < n_query ? Split::kQuery : Split::kGallery;

      ds.manifest.id_index[id].push_back(ds.manifest.records.size());
      ds.manifest.records.push_back(sample.record);
      ds.samples.push_back(std::move(sample));
    }
  }

  // Cross-camera coverage for every query identity.
  for (const auto& q : ds.manifest.records) {
    if (q.split != Split::kQuery) continue;
    bool found = false;
    for (const auto& g : ds.manifest.records)
      if (g.split == Split::kGallery && g.identity == q.identity &&
          g.camera != q.camera)
        found = true;
    if (!found)
      throw ValidationError("config yields query identity " +
                            std::to_string(q.identity) +
                            " without cross-camera gallery images");
  }
  return ds;
}

void synth_write(const SynthConfig& config, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  SynthDataset ds = synth_generate(config);

  std::map<std::string, JointSet> keypoints;
  for (const auto& s : ds.samples) {
    save_png(s.image, (fs::path(out_dir) / s.record.image_path).string());
    keypoints[s.record.image_path] = s.joints;
  }
  write_manifest(ds.manifest, (fs::path(out_dir) / "manifest.csv").string());
  write_keypoints(keypoints, (fs::path(out_dir) / "keypoints.jsonl").string());
}

}  // namespace pie
