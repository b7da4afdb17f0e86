#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pie/errors.hpp"
#include "pie/net.hpp"
#include "pie/rng.hpp"

namespace pie {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void NetConfig::validate() const {
  if (n2 != kConfDim)
    throw ValidationError("n2 must be " + std::to_string(kConfDim));
  if (n3 < 2) throw ValidationError("n3 (class count) must be >= 2");
  if (!stream_img && !stream_pb && !stream_conf)
    throw ValidationError("at least one stream must be enabled");
  if (n1 < 1) throw ValidationError("n1 must be positive");
  if (conv_channels.empty())
    throw ValidationError("need at least one conv block");
  for (int c : conv_channels)
    if (c < 1) throw ValidationError("conv channel widths must be positive");
  int h = input_h, w = input_w;
  for (std::size_t i = 0; i < conv_channels.size(); ++i) {
    if (h % 2 != 0 || w % 2 != 0)
      throw ValidationError("input dims must be divisible by 2 per pool block");
    h /= 2;
    w /= 2;
  }
  if (h < 1 || w < 1) throw ValidationError("input too small for conv stack");
  if (batch_size < 1) throw ValidationError("batch_size must be positive");
}

NetConfig NetConfig::toy(int n3) {
  NetConfig c;
  c.n3 = n3;
  return c;
}

NetConfig NetConfig::baseline(int kind, int n3) {
  if (kind != 1 && kind != 2)
    throw ValidationError("baseline kind must be 1 or 2");
  NetConfig c = toy(n3);
  c.stream_img = kind == 1;
  c.stream_pb = kind == 2;
  c.stream_conf = false;
  c.aux_losses = false;  // single softmax loss on the fused head
  return c;
}

NetConfig NetConfig::gradcheck_tiny() {
  NetConfig c;
  c.input_h = 8;
  c.input_w = 8;
  c.n1 = 6;
  c.n3 = 3;
  c.conv_channels = {2, 3};
  c.batch_size = 1;
  return c;
}

const char* ablation_name(AblationArm arm) {
  switch (arm) {
    case AblationArm::kFull:
      return "full";
    case AblationArm::kNoPosebox:
      return "-posebox";
    case AblationArm::kNoImage:
      return "-img";
    case AblationArm::kNoConfidence:
      return "-confidence";
    case AblationArm::kNoAuxLosses:
      return "-aux-losses";
    case AblationArm::kBaseline1:
      return "baseline1";
    case AblationArm::kBaseline2:
      return "baseline2";
  }
  return "?";
}

NetConfig ablation_config(AblationArm arm, const NetConfig& base) {
  NetConfig c = base;
  switch (arm) {
    case AblationArm::kFull:
      break;
    case AblationArm::kNoPosebox:
      c.stream_pb = false;
      break;
    case AblationArm::kNoImage:
      c.stream_img = false;
      break;
    case AblationArm::kNoConfidence:
      c.stream_conf = false;
      break;
    case AblationArm::kNoAuxLosses:
      c.aux_losses = false;
      break;
    case AblationArm::kBaseline1:
      c = NetConfig::baseline(1, base.n3);
      c.input_h = base.input_h;
      c.input_w = base.input_w;
      c.n1 = base.n1;
      c.conv_channels = base.conv_channels;
      c.batch_size = base.batch_size;
      break;
    case AblationArm::kBaseline2:
      c = NetConfig::baseline(2, base.n3);
      c.input_h = base.input_h;
      c.input_w = base.input_w;
      c.n1 = base.n1;
      c.conv_channels = base.conv_channels;
      c.batch_size = base.batch_size;
      break;
  }
  c.validate();
  return c;
}

NetConfig NetConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  NetConfig c;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(line_no) +
                       ": expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "input_h")
      c.input_h = std::stoi(value);
    else if (key == "input_w")
      c.input_w = std::stoi(value);
    else if (key == "n1")
      c.n1 = std::stoi(value);
    else if (key == "n2")
      c.n2 = std::stoi(value);
    else if (key == "n3")
      c.n3 = std::stoi(value);
    else if (key == "batch_size")
      c.batch_size = std::stoi(value);
    else if (key == "aux_losses")
      c.aux_losses = value == "1" || value == "true";
    else if (key == "conv_channels") {
      c.conv_channels.clear();
      std::stringstream ss(value);
      std::string tok;
      while (std::getline(ss, tok, ',')) c.conv_channels.push_back(std::stoi(tok));
    } else if (key == "streams") {
      c.stream_img = c.stream_pb = c.stream_conf = false;
      std::stringstream ss(value);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        if (tok == "img")
          c.stream_img = true;
        else if (tok == "pb")
          c.stream_pb = true;
        else if (tok == "conf")
          c.stream_conf = true;
        else
          throw ParseError("config line " + std::to_string(line_no) +
                           ": unknown stream '" + tok + "'");
      }
    } else {
      throw ParseError("config line " + std::to_string(line_no) +
                       ": unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

void NetConfig::to_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config '" + path + "'");
  out << "input_h=" << input_h << "\ninput_w=" << input_w << "\nn1=" << n1
      << "\nn2=" << n2 << "\nn3=" << n3 << "\nbatch_size=" << batch_size
      << "\naux_losses=" << (aux_losses ? 1 : 0) << "\nconv_channels=";
  for (std::size_t i = 0; i < conv_channels.size(); ++i)
    out << (i ? "," : "") << conv_channels[i];
  out << "\nstreams=";
  bool first = true;
  auto emit = [&](bool on, const char* name) {
    if (!on) return;
    out << (first ? "" : ",") << name;
    first = false;
  };
  emit(stream_img, "img");
  emit(stream_pb, "pb");
  emit(stream_conf, "conf");
  out << "\n";
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

namespace {

void visit_linear(const std::string& prefix, Linear& l,
                  const std::function<void(const std::string&, double*,
                                           std::size_t)>& fn) {
  fn(prefix + ".w", l.w.data(), static_cast<std::size_t>(l.w.size()));
  fn(prefix + ".b", l.b.data(), static_cast<std::size_t>(l.b.size()));
}

void visit_stream(const std::string& prefix, StreamParams& s,
                  const std::function<void(const std::string&, double*,
                                           std::size_t)>& fn) {
  for (std::size_t i = 0; i < s.convs.size(); ++i) {
    fn(prefix + ".conv" + std::to_string(i) + ".w", s.convs[i].w.data(),
       static_cast<std::size_t>(s.convs[i].w.size()));
    fn(prefix + ".conv" + std::to_string(i) + ".b", s.convs[i].b.data(),
       static_cast<std::size_t>(s.convs[i].b.size()));
  }
  visit_linear(prefix + ".embed", s.embed, fn);
}

}  // namespace

void for_each_param(NetParams& p,
                    const std::function<void(const std::string&, double*,
                                             std::size_t)>& fn) {
  visit_stream("img", p.img, fn);
  visit_stream("pb", p.pb, fn);
  visit_linear("conf_fc", p.conf_fc, fn);
  visit_linear("head_img", p.head_img, fn);
  visit_linear("head_pb", p.head_pb, fn);
  visit_linear("head_fused", p.head_fused, fn);
}

void axpy_params(NetParams& dst, const NetParams& delta, double scale) {
  std::vector<std::pair<double*, std::size_t>> d, s;
  for_each_param(dst, [&](const std::string&, double* ptr, std::size_t n) {
    d.emplace_back(ptr, n);
  });
  for_each_param(const_cast<NetParams&>(delta),
                 [&](const std::string&, double* ptr, std::size_t n) {
                   s.emplace_back(ptr, n);
                 });
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d[i].second; ++j)
      d[i].first[j] += scale * s[i].first[j];
}

NetParams zeros_like(const NetParams& p) {
  NetParams z = p;
  for_each_param(z, [](const std::string&, double* ptr, std::size_t n) {
    std::fill(ptr, ptr + n, 0.0);
  });
  return z;
}

namespace {

Linear make_linear(int out, int in) {
  Linear l;
  l.w = Eigen::MatrixXd::Zero(out, in);
  l.b = Eigen::VectorXd::Zero(out);
  return l;
}

void he_fill(Eigen::MatrixXd& w, int fan_in, Rng& rng) {
  const double scale = std::sqrt(2.0 / fan_in);
  for (Eigen::Index c = 0; c < w.cols(); ++c)
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = scale * rng.normal();
}

int flat_dim(const NetConfig& c) {
  int h = c.input_h, w = c.input_w;
  for (std::size_t i = 0; i < c.conv_channels.size(); ++i) {
    h /= 2;
    w /= 2;
  }
  return h * w * c.conv_channels.back();
}

StreamParams make_stream(const NetConfig& c) {
  StreamParams s;
  int in_ch = 3;
  for (int out_ch : c.conv_channels) {
    ConvLayer conv;
    conv.in_ch = in_ch;
    conv.out_ch = out_ch;
    conv.w = Eigen::MatrixXd::Zero(out_ch, 9 * in_ch);
    conv.b = Eigen::VectorXd::Zero(out_ch);
    s.convs.push_back(std::move(conv));
    in_ch = out_ch;
  }
  s.embed = make_linear(c.n1, flat_dim(c));
  return s;
}

}  // namespace

NetParams init_params(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  NetParams p;
  // One seed draw shared by both image streams; they diverge in training.
  p.img = make_stream(config);
  for (auto& conv : p.img.convs) he_fill(conv.w, 9 * conv.in_ch, rng);
  he_fill(p.img.embed.w, static_cast<int>(p.img.embed.w.cols()), rng);
  p.pb = p.img;

  p.conf_fc = make_linear(kConfDim, kConfDim);
  he_fill(p.conf_fc.w, kConfDim, rng);
  // The confidence input is a near-constant vector of ones (norm ~sqrt(14)),
  // unlike the centered pooled activations feeding the embedding FCs, so a
  // plain fan-in init makes this stream dominate the concatenation.  Damp the
  // gain to bring its initial output RMS in line with the two conv streams.
  p.conf_fc.w *= 0.1;
  p.head_img = make_linear(config.n3, config.n1);
  he_fill(p.head_img.w, config.n1, rng);
  p.head_pb = make_linear(config.n3, config.n1);
  he_fill(p.head_pb.w, config.n1, rng);
  p.head_fused = make_linear(config.n3, config.concat_dim());
  he_fill(p.head_fused.w, config.concat_dim(), rng);
  return p;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

FeatureMap to_feature_map(const ImageTensor& img) {
  FeatureMap f;
  f.h = img.height;
  f.w = img.width;
  f.ch = 3;
  f.m.resize(3, static_cast<Eigen::Index>(img.height) * img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        f.m(c, static_cast<Eigen::Index>(y) * img.width + x) = img.at(y, x, c);
  return f;
}

namespace {

Eigen::MatrixXd im2col(const FeatureMap& x) {
  const int h = x.h, w = x.w, in_ch = x.ch;
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(9 * in_ch,
                                               static_cast<Eigen::Index>(h) * w);
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) {
      const int k = ky * 3 + kx;
      for (int y = 0; y < h; ++y) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int xx = 0; xx < w; ++xx) {
          const int sx = xx + kx - 1;
          if (sx < 0 || sx >= w) continue;
          const Eigen::Index src = static_cast<Eigen::Index>(sy) * w + sx;
          const Eigen::Index dst = static_cast<Eigen::Index>(y) * w + xx;
          for (int ic = 0; ic < in_ch; ++ic)
            cols(k * in_ch + ic, dst) = x.m(ic, src);
        }
      }
    }
  }
  return cols;
}

void col2im_add(const Eigen::MatrixXd& dcols, FeatureMap& dx) {
  const int h = dx.h, w = dx.w, in_ch = dx.ch;
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) {
      const int k = ky * 3 + kx;
      for (int y = 0; y < h; ++y) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int xx = 0; xx < w; ++xx) {
          const int sx = xx + kx - 1;
          if (sx < 0 || sx >= w) continue;
          const Eigen::Index src = static_cast<Eigen::Index>(sy) * w + sx;
          const Eigen::Index dst = static_cast<Eigen::Index>(y) * w + xx;
          for (int ic = 0; ic < in_ch; ++ic)
            dx.m(ic, src) += dcols(k * in_ch + ic, dst);
        }
      }
    }
  }
}

/// 2x2 max-pool, stride 2, with argmax bookkeeping for backprop.
FeatureMap max_pool(const FeatureMap& x, std::vector<Eigen::Index>& argmax) {
  FeatureMap out;
  out.h = x.h / 2;
  out.w = x.w / 2;
  out.ch = x.ch;
  out.m.resize(x.ch, static_cast<Eigen::Index>(out.h) * out.w);
  argmax.assign(static_cast<std::size_t>(x.ch) * out.h * out.w, 0);
  for (int c = 0; c < x.ch; ++c) {
    for (int y = 0; y < out.h; ++y) {
      for (int xx = 0; xx < out.w; ++xx) {
        double best = -1e300;
        Eigen::Index best_pos = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const Eigen::Index pos =
                static_cast<Eigen::Index>(2 * y + dy) * x.w + (2 * xx + dx);
            if (x.m(c, pos) > best) {
              best = x.m(c, pos);
              best_pos = pos;
            }
          }
        const Eigen::Index opos = static_cast<Eigen::Index>(y) * out.w + xx;
        out.m(c, opos) = best;
        argmax[static_cast<std::size_t>(c) * out.h * out.w + opos] = best_pos;
      }
    }
  }
  return out;
}

void stream_forward(const StreamParams& params, const ImageTensor& img,
                    const NetConfig& config, StreamCache& cache,
                    Eigen::VectorXd& emb) {
  if (img.height != config.input_h || img.width != config.input_w)
    throw ValidationError("input image is " + std::to_string(img.height) + "x" +
                          std::to_string(img.width) + ", config wants " +
                          std::to_string(config.input_h) + "x" +
                          std::to_string(config.input_w));
  FeatureMap x = to_feature_map(img);
  cache.inputs.clear();
  cache.cols.clear();
  cache.pre_pool.clear();
  cache.pooled.clear();
  cache.pool_argmax.clear();

  for (const auto& conv : params.convs) {
    cache.inputs.push_back(x);
    Eigen::MatrixXd cols = im2col(x);
    FeatureMap y;
    y.h = x.h;
    y.w = x.w;
    y.ch = conv.out_ch;
    y.m.noalias() = conv.w * cols;
    y.m.colwise() += conv.b;
    y.m = y.m.cwiseMax(0.0);  // ReLU
    cache.cols.push_back(std::move(cols));
    cache.pre_pool.push_back(y);
    std::vector<Eigen::Index> argmax;
    x = max_pool(y, argmax);
    cache.pool_argmax.push_back(std::move(argmax));
    cache.pooled.push_back(x);
  }

  cache.flat = Eigen::Map<const Eigen::VectorXd>(x.m.data(), x.m.size());
  cache.embed_pre.noalias() = params.embed.w * cache.flat;
  cache.embed_pre += params.embed.b;
  emb = cache.embed_pre.cwiseMax(0.0);
}

}  // namespace

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

ForwardOutput forward(const NetParams& params, const NetConfig& config,
                      const ImageTensor& img, const ImageTensor& pb,
                      const std::array<double, kConfDim>& conf) {
  ForwardOutput out;
  out.emb_img = Eigen::VectorXd::Zero(config.n1);
  out.emb_pb = Eigen::VectorXd::Zero(config.n1);
  out.emb_conf = Eigen::VectorXd::Zero(kConfDim);

  if (config.stream_img)
    stream_forward(params.img, img, config, out.cache_img, out.emb_img);
  if (config.stream_pb)
    stream_forward(params.pb, pb, config, out.cache_pb, out.emb_pb);
  if (config.stream_conf) {
    out.conf_in = Eigen::Map<const Eigen::VectorXd>(conf.data(), kConfDim);
    out.conf_pre.noalias() = params.conf_fc.w * out.conf_in;
    out.conf_pre += params.conf_fc.b;
    out.emb_conf = out.conf_pre.cwiseMax(0.0);
  }

  out.concat.resize(config.concat_dim());
  Eigen::Index offset = 0;
  if (config.stream_img) {
    out.concat.segment(offset, config.n1) = out.emb_img;
    offset += config.n1;
  }
  if (config.stream_pb) {
    out.concat.segment(offset, config.n1) = out.emb_pb;
    offset += config.n1;
  }
  if (config.stream_conf) out.concat.segment(offset, kConfDim) = out.emb_conf;

  out.logits_fused.noalias() = params.head_fused.w * out.concat;
  out.logits_fused += params.head_fused.b;
  if (config.aux_losses && config.stream_img) {
    out.logits_img.noalias() = params.head_img.w * out.emb_img;
    out.logits_img += params.head_img.b;
  }
  if (config.aux_losses && config.stream_pb) {
    out.logits_pb.noalias() = params.head_pb.w * out.emb_pb;
    out.logits_pb += params.head_pb.b;
  }
  return out;
}

namespace {

double cross_entropy(const Eigen::VectorXd& logits, int label) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(label);
}

}  // namespace

LossReport total_loss(const ForwardOutput& out, int label,
                      const NetConfig& config) {
  if (label < 0 || label >= config.n3)
    throw ValidationError("label " + std::to_string(label) +
                          " out of range for n3=" + std::to_string(config.n3));
  LossReport r;
  r.ce_fused = cross_entropy(out.logits_fused, label);
  r.total = r.ce_fused;
  if (config.aux_losses && config.stream_img) {
    r.ce_img = cross_entropy(out.logits_img, label);
    r.total += r.ce_img;
  }
  if (config.aux_losses && config.stream_pb) {
    r.ce_pb = cross_entropy(out.logits_pb, label);
    r.total += r.ce_pb;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

namespace {

void stream_backward(const StreamParams& params, const StreamCache& cache,
                     const Eigen::VectorXd& d_emb, StreamParams& grads) {
  // Through the embedding FC and its ReLU.
  Eigen::VectorXd d_pre = d_emb;
  for (Eigen::Index i = 0; i < d_pre.size(); ++i)
    if (cache.embed_pre(i) <= 0.0) d_pre(i) = 0.0;
  grads.embed.w.noalias() += d_pre * cache.flat.transpose();
  grads.embed.b += d_pre;
  Eigen::VectorXd d_flat = params.embed.w.transpose() * d_pre;

  // Reshape to the last pooled map.
  const FeatureMap& last = cache.pooled.back();
  FeatureMap d_x;
  d_x.h = last.h;
  d_x.w = last.w;
  d_x.ch = last.ch;
  d_x.m = Eigen::Map<const Eigen::MatrixXd>(d_flat.data(), last.m.rows(),
                                            last.m.cols());

  for (int bi = static_cast<int>(params.convs.size()) - 1; bi >= 0; --bi) {
    const auto& conv = params.convs[bi];
    const FeatureMap& pre_pool = cache.pre_pool[bi];
    const auto& argmax = cache.pool_argmax[bi];

    // Un-pool: route each gradient to its argmax position.
    Eigen::MatrixXd d_y = Eigen::MatrixXd::Zero(pre_pool.m.rows(),
                                                pre_pool.m.cols());
    const Eigen::Index opix = d_x.m.cols();
    for (int c = 0; c < d_x.ch; ++c)
      for (Eigen::Index p = 0; p < opix; ++p)
        d_y(c, argmax[static_cast<std::size_t>(c) * opix + p]) += d_x.m(c, p);

    // ReLU mask (post-activation value > 0 iff pre-activation > 0).
    d_y = (pre_pool.m.array() > 0.0).select(d_y, 0.0);

    grads.convs[bi].w.noalias() += d_y * cache.cols[bi].transpose();
    grads.convs[bi].b += d_y.rowwise().sum();

    const Eigen::MatrixXd d_cols = conv.w.transpose() * d_y;
    FeatureMap d_in;
    d_in.h = cache.inputs[bi].h;
    d_in.w = cache.inputs[bi].w;
    d_in.ch = cache.inputs[bi].ch;
    d_in.m = Eigen::MatrixXd::Zero(d_in.ch,
                                   static_cast<Eigen::Index>(d_in.h) * d_in.w);
    if (bi > 0) col2im_add(d_cols, d_in);  // input gradient unused at block 0
    d_x = std::move(d_in);
  }
}

Eigen::VectorXd d_softmax_ce(const Eigen::VectorXd& logits, int label) {
  Eigen::VectorXd d = softmax(logits);
  d(label) -= 1.0;
  return d;
}

}  // namespace

NetParams backward(const NetParams& params, const NetConfig& config,
                   const ForwardOutput& out, int label) {
  NetParams grads = zeros_like(params);

  // Fused head.
  const Eigen::VectorXd d_fused = d_softmax_ce(out.logits_fused, label);
  grads.head_fused.w.noalias() += d_fused * out.concat.transpose();
  grads.head_fused.b += d_fused;
  const Eigen::VectorXd d_concat = params.head_fused.w.transpose() * d_fused;

  Eigen::Index offset = 0;
  Eigen::VectorXd d_emb_img = Eigen::VectorXd::Zero(config.n1);
  Eigen::VectorXd d_emb_pb = Eigen::VectorXd::Zero(config.n1);
  Eigen::VectorXd d_emb_conf = Eigen::VectorXd::Zero(kConfDim);
  if (config.stream_img) {
    d_emb_img = d_concat.segment(offset, config.n1);
    offset += config.n1;
  }
  if (config.stream_pb) {
    d_emb_pb = d_concat.segment(offset, config.n1);
    offset += config.n1;
  }
  if (config.stream_conf) d_emb_conf = d_concat.segment(offset, kConfDim);

  // Auxiliary heads add into the stream embedding gradients.
  if (config.aux_losses && config.stream_img) {
    const Eigen::VectorXd d_aux = d_softmax_ce(out.logits_img, label);
    grads.head_img.w.noalias() += d_aux * out.emb_img.transpose();
    grads.head_img.b += d_aux;
    d_emb_img += params.head_img.w.transpose() * d_aux;
  }
  if (config.aux_losses && config.stream_pb) {
    const Eigen::VectorXd d_aux = d_softmax_ce(out.logits_pb, label);
    grads.head_pb.w.noalias() += d_aux * out.emb_pb.transpose();
    grads.head_pb.b += d_aux;
    d_emb_pb += params.head_pb.w.transpose() * d_aux;
  }

  if (config.stream_img)
    stream_backward(params.img, out.cache_img, d_emb_img, grads.img);
  if (config.stream_pb)
    stream_backward(params.pb, out.cache_pb, d_emb_pb, grads.pb);
  if (config.stream_conf) {
    Eigen::VectorXd d_pre = d_emb_conf;
    for (Eigen::Index i = 0; i < d_pre.size(); ++i)
      if (out.conf_pre(i) <= 0.0) d_pre(i) = 0.0;
    grads.conf_fc.w.noalias() += d_pre * out.conf_in.transpose();
    grads.conf_fc.b += d_pre;
  }
  return grads;
}

std::vector<float> extract_pie(const NetParams& params, const NetConfig& config,
                               const ImageTensor& img, const ImageTensor& pb,
                               const std::array<double, kConfDim>& conf,
                               PieLayer layer) {
  const ForwardOutput out = forward(params, config, img, pb, conf);
  const Eigen::VectorXd& raw =
      layer == PieLayer::kConcat ? out.concat : out.logits_fused;
  std::vector<float> v(static_cast<std::size_t>(raw.size()));
  for (Eigen::Index i = 0; i < raw.size(); ++i)
    v[static_cast<std::size_t>(i)] =
        static_cast<float>(std::max(0.0, raw(i)));  // ReLU on extraction
  return v;
}

// ---------------------------------------------------------------------------
// Params file
// ---------------------------------------------------------------------------

namespace {
constexpr char kParamsMagic[4] = {'P', 'I', 'E', 'P'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("params file truncated");
  return v;
}
}  // namespace

void write_params(const NetParams& params, const NetConfig& config,
                  const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write params file '" + path + "'");
  out.write(kParamsMagic, 4);
  put<std::int32_t>(out, config.input_h);
  put<std::int32_t>(out, config.input_w);
  put<std::int32_t>(out, config.n1);
  put<std::int32_t>(out, config.n2);
  put<std::int32_t>(out, config.n3);
  put<std::int32_t>(out, config.batch_size);
  const std::uint8_t flags =
      static_cast<std::uint8_t>((config.stream_img ? 1 : 0) |
                                (config.stream_pb ? 2 : 0) |
                                (config.stream_conf ? 4 : 0) |
                                (config.aux_losses ? 8 : 0));
  put(out, flags);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(config.conv_channels.size()));
  for (int c : config.conv_channels) put<std::int32_t>(out, c);

  for_each_param(const_cast<NetParams&>(params),
                 [&](const std::string&, double* ptr, std::size_t n) {
                   put<std::uint64_t>(out, n);
                   out.write(reinterpret_cast<const char*>(ptr),
                             static_cast<std::streamsize>(n * sizeof(double)));
                 });
  if (!out) throw IoError("short write on params file '" + path + "'");
}

std::pair<NetParams, NetConfig> read_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open params file '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kParamsMagic, 4) != 0)
    throw IoError("bad magic in params file '" + path + "'");

  NetConfig config;
  config.input_h = get<std::int32_t>(in);
  config.input_w = get<std::int32_t>(in);
  config.n1 = get<std::int32_t>(in);
  config.n2 = get<std::int32_t>(in);
  config.n3 = get<std::int32_t>(in);
  config.batch_size = get<std::int32_t>(in);
  const auto flags = get<std::uint8_t>(in);
  config.stream_img = flags & 1;
  config.stream_pb = flags & 2;
  config.stream_conf = flags & 4;
  config.aux_losses = flags & 8;
  const auto n_conv = get<std::uint32_t>(in);
  config.conv_channels.clear();
  for (std::uint32_t i = 0; i < n_conv; ++i)
    config.conv_channels.push_back(get<std::int32_t>(in));
  config.validate();

  NetParams params = init_params(config, 0);
  for_each_param(params, [&](const std::string& name, double* ptr,
                             std::size_t n) {
    const auto stored = get<std::uint64_t>(in);
    if (stored != n)
      throw IoError("params file '" + path + "': size mismatch for " + name);
    in.read(reinterpret_cast<char*>(ptr),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw IoError("params file '" + path + "' truncated");
  });
  return {std::move(params), config};
}

}  // namespace pie
