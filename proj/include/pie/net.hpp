#ifndef PIE_NET_HPP_
#define PIE_NET_HPP_

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pie/types.hpp"

namespace pie {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Width of the confidence FC stream, fixed by the joint count.
inline constexpr int kConfDim = 14;

struct NetConfig {
  int input_h = 64;
  int input_w = 32;
  int n1 = 64;   // per-stream embedding width
  int n2 = kConfDim;
  int n3 = 2;    // class count
  std::vector<int> conv_channels = {8, 16};  // one [conv-relu-pool] block each
  bool stream_img = true;
  bool stream_pb = true;
  bool stream_conf = true;
  bool aux_losses = true;
  int batch_size = 16;

  /// Embedding width: sum of the enabled stream widths.
  int concat_dim() const {
    return (stream_img ? n1 : 0) + (stream_pb ? n1 : 0) +
           (stream_conf ? n2 : 0);
  }
  int num_blocks() const { return static_cast<int>(conv_channels.size()); }
  void validate() const;

  static NetConfig toy(int n3);
  /// kind 1: original-image stream only; kind 2: PoseBox stream only.
  /// Single loss (no aux heads).
  static NetConfig baseline(int kind, int n3);
  /// Small instance sized for exhaustive finite-difference checking.
  static NetConfig gradcheck_tiny();

  // Flat key=value text file mirroring the fields above.
  static NetConfig from_file(const std::string& path);
  void to_file(const std::string& path) const;
};

enum class AblationArm {
  kFull,
  kNoPosebox,
  kNoImage,
  kNoConfidence,
  kNoAuxLosses,
  kBaseline1,
  kBaseline2,
};

const char* ablation_name(AblationArm arm);
NetConfig ablation_config(AblationArm arm, const NetConfig& base);

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct ConvLayer {
  int in_ch = 0;
  int out_ch = 0;
  Eigen::MatrixXd w;  // out_ch x (9 * in_ch), 3x3 kernels
  Eigen::VectorXd b;
};

struct Linear {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;
};

struct StreamParams {
  std::vector<ConvLayer> convs;
  Linear embed;  // flattened conv output -> n1
};

/// All learnable tensors. The two image streams have identical shapes but
/// never share storage; gradients reuse this struct.
struct NetParams {
  StreamParams img;
  StreamParams pb;
  Linear conf_fc;     // 14 -> 14
  Linear head_img;    // n1 -> n3 auxiliary classifier
  Linear head_pb;     // n1 -> n3 auxiliary classifier
  Linear head_fused;  // concat_dim -> n3
};

/// Visits every parameter buffer as a flat span, in a fixed order.
void for_each_param(NetParams& p,
                    const std::function<void(const std::string&, double*,
                                             std::size_t)>& fn);
void axpy_params(NetParams& dst, const NetParams& delta, double scale);
NetParams zeros_like(const NetParams& p);

/// He fan-in initialization, zero biases, deterministic per seed. The two
/// image streams start from the same draw and diverge only in training.
NetParams init_params(const NetConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/// Channel-major feature map: m(ch, y * w + x).
struct FeatureMap {
  int h = 0, w = 0, ch = 0;
  Eigen::MatrixXd m;
};

FeatureMap to_feature_map(const ImageTensor& img);

struct StreamCache {
  std::vector<FeatureMap> inputs;      // input to each conv block
  std::vector<Eigen::MatrixXd> cols;   // im2col of each block input
  std::vector<FeatureMap> pre_pool;    // post-conv post-relu maps
  std::vector<FeatureMap> pooled;
  std::vector<std::vector<Eigen::Index>> pool_argmax;
  Eigen::VectorXd flat;
  Eigen::VectorXd embed_pre;           // pre-ReLU FC output
};

struct ForwardOutput {
  Eigen::VectorXd emb_img;   // n1, post-ReLU (zero when stream disabled)
  Eigen::VectorXd emb_pb;    // n1
  Eigen::VectorXd emb_conf;  // 14
  Eigen::VectorXd concat;    // concat_dim(), enabled streams only
  Eigen::VectorXd logits_img;
  Eigen::VectorXd logits_pb;
  Eigen::VectorXd logits_fused;
  StreamCache cache_img;
  StreamCache cache_pb;
  Eigen::VectorXd conf_in;
  Eigen::VectorXd conf_pre;
};

ForwardOutput forward(const NetParams& params, const NetConfig& config,
                      const ImageTensor& img, const ImageTensor& pb,
                      const std::array<double, kConfDim>& conf);

struct LossReport {
  double ce_img = 0.0;
  double ce_pb = 0.0;
  double ce_fused = 0.0;
  double total = 0.0;
};

LossReport total_loss(const ForwardOutput& out, int label,
                      const NetConfig& config);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// Exact analytic gradient of total_loss with respect to every parameter.
NetParams backward(const NetParams& params, const NetConfig& config,
                   const ForwardOutput& out, int label);

/// PIE extraction: the ReLU'd concat vector or the ReLU'd fused logits.
enum class PieLayer { kConcat, kFused };
std::vector<float> extract_pie(const NetParams& params, const NetConfig& config,
                               const ImageTensor& img, const ImageTensor& pb,
                               const std::array<double, kConfDim>& conf,
                               PieLayer layer);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainItem {
  ImageTensor img;
  ImageTensor pb;
  std::array<double, kConfDim> conf{};
  int label = 0;
};

struct TrainResult {
  NetParams params;
  std::vector<double> epoch_mean_loss;
};

/// lr0 * 10^(-floor(epoch/6)): a tenfold drop every 6 epochs.
double sgd_learning_rate(double lr0, int epoch);

/// Plain SGD over seeded shuffled mini-batches,
/// lr = sgd_learning_rate(lr0, epoch). Aborts on non-finite loss.
TrainResult train(const NetConfig& config, const std::vector<TrainItem>& items,
                  int epochs, double lr0, std::uint64_t seed);

/// Central finite differences over every parameter; returns the worst
/// relative error.
double gradient_check(const NetConfig& config, std::uint64_t seed,
                      double epsilon = 1e-5);

// Params file: magic `PIEP`, the config, then every parameter buffer as
// little-endian f64 in for_each_param order.
void write_params(const NetParams& params, const NetConfig& config,
                  const std::string& path);
std::pair<NetParams, NetConfig> read_params(const std::string& path);

}  // namespace pie

#endif  // PIE_NET_HPP_
