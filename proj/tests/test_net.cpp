#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <vector>

#include "pie/errors.hpp"
#include "pie/net.hpp"
#include "pie/rng.hpp"

using namespace pie;

namespace {

ImageTensor random_image(int h, int w, Rng& rng) {
  ImageTensor img(h, w);
  for (auto& v : img.data) v = float(rng.uniform());
  return img;
}

std::array<double, kConfDim> random_conf(Rng& rng) {
  std::array<double, kConfDim> conf{};
  for (auto& c : conf) c = rng.uniform();
  return conf;
}

double max_abs_diff_params(NetParams& a, NetParams& b) {
  std::vector<std::pair<const double*, std::size_t>> bufs_a, bufs_b;
  for_each_param(a, [&](const std::string&, double* p, std::size_t n) {
    bufs_a.emplace_back(p, n);
  });
  for_each_param(b, [&](const std::string&, double* p, std::size_t n) {
    bufs_b.emplace_back(p, n);
  });
  REQUIRE(bufs_a.size() == bufs_b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < bufs_a.size(); ++i) {
    REQUIRE(bufs_a[i].second == bufs_b[i].second);
    for (std::size_t k = 0; k < bufs_a[i].second; ++k)
      worst = std::max(worst,
                       std::fabs(bufs_a[i].first[k] - bufs_b[i].first[k]));
  }
  return worst;
}

}  // namespace

TEST_CASE("concat width arithmetic") {
  CHECK(NetConfig::toy(10).concat_dim() == 142);
  NetConfig paper;
  paper.n1 = 4096;
  paper.n3 = 751;
  CHECK(paper.concat_dim() == 8206);
  NetConfig no_conf = ablation_config(AblationArm::kNoConfidence,
                                      NetConfig::toy(10));
  CHECK(no_conf.concat_dim() == 128);
  CHECK(NetConfig::baseline(1, 10).concat_dim() == 64);
  CHECK(NetConfig::baseline(2, 10).concat_dim() == 64);
}

TEST_CASE("init is deterministic with equal streams and zero biases") {
  const NetConfig cfg = NetConfig::toy(5);
  NetParams a = init_params(cfg, 42);
  NetParams b = init_params(cfg, 42);
  CHECK(max_abs_diff_params(a, b) == 0.0);

  // Both image streams start from the same draw.
  for (std::size_t i = 0; i < a.img.convs.size(); ++i) {
    CHECK((a.img.convs[i].w - a.pb.convs[i].w).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.img.convs[i].b.cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK((a.img.embed.w - a.pb.embed.w).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.img.embed.b.cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.conf_fc.b.cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.head_fused.b.cwiseAbs().maxCoeff() == 0.0);

  NetParams c = init_params(cfg, 43);
  CHECK(max_abs_diff_params(a, c) > 0.0);
}

TEST_CASE("uniform logits give ln C per head") {
  const int n3 = 7;
  NetConfig cfg = NetConfig::gradcheck_tiny();
  cfg.n3 = n3;
  ForwardOutput out;
  out.logits_img = Eigen::VectorXd::Zero(n3);
  out.logits_pb = Eigen::VectorXd::Zero(n3);
  out.logits_fused = Eigen::VectorXd::Zero(n3);
  const LossReport loss = total_loss(out, 2, cfg);
  CHECK(loss.ce_fused == doctest::Approx(std::log(n3)).epsilon(1e-12));
  CHECK(loss.total == doctest::Approx(3 * std::log(n3)).epsilon(1e-12));

  cfg.aux_losses = false;
  const LossReport solo = total_loss(out, 2, cfg);
  CHECK(solo.total == doctest::Approx(std::log(n3)).epsilon(1e-12));
}

TEST_CASE("confident correct logit drives the loss to zero") {
  NetConfig cfg = NetConfig::gradcheck_tiny();
  cfg.aux_losses = false;
  ForwardOutput out;
  out.logits_fused = Eigen::VectorXd::Zero(cfg.n3);
  out.logits_fused(1) = 50.0;
  CHECK(total_loss(out, 1, cfg).total == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fused-head bias gradient is softmax minus one-hot") {
  const NetConfig cfg = NetConfig::gradcheck_tiny();
  const NetParams params = init_params(cfg, 3);
  Rng rng(4);
  const ImageTensor img = random_image(cfg.input_h, cfg.input_w, rng);
  const ImageTensor pb = random_image(cfg.input_h, cfg.input_w, rng);
  const ForwardOutput out = forward(params, cfg, img, pb, random_conf(rng));
  const int label = 1;
  const NetParams grads = backward(params, cfg, out, label);
  Eigen::VectorXd want = softmax(out.logits_fused);
  want(label) -= 1.0;
  CHECK((grads.head_fused.b - want).cwiseAbs().maxCoeff() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("disabled streams receive exactly zero gradient") {
  const NetConfig cfg =
      ablation_config(AblationArm::kBaseline1, NetConfig::gradcheck_tiny());
  const NetParams params = init_params(cfg, 3);
  Rng rng(4);
  const ImageTensor img = random_image(cfg.input_h, cfg.input_w, rng);
  const ImageTensor pb = random_image(cfg.input_h, cfg.input_w, rng);
  const ForwardOutput out = forward(params, cfg, img, pb, random_conf(rng));
  NetParams grads = backward(params, cfg, out, 0);
  double pb_conf_mag = 0.0, img_mag = 0.0;
  for_each_param(grads, [&](const std::string& name, double* p, std::size_t n) {
    double mag = 0.0;
    for (std::size_t i = 0; i < n; ++i) mag += std::fabs(p[i]);
    if (name.rfind("pb", 0) == 0 || name.rfind("conf", 0) == 0 ||
        name.rfind("head_pb", 0) == 0)
      pb_conf_mag += mag;
    if (name.rfind("img", 0) == 0) img_mag += mag;
  });
  CHECK(pb_conf_mag == 0.0);
  CHECK(img_mag > 0.0);
}

TEST_CASE("finite differences confirm the full tiny gradient") {
  CHECK(gradient_check(NetConfig::gradcheck_tiny(), 12) <= 1e-4);
}

TEST_CASE("learning rate drops tenfold every 6 epochs") {
  CHECK(sgd_learning_rate(0.01, 0) == doctest::Approx(0.01));
  CHECK(sgd_learning_rate(0.01, 5) == doctest::Approx(0.01));
  CHECK(sgd_learning_rate(0.01, 6) == doctest::Approx(0.001));
  CHECK(sgd_learning_rate(0.01, 12) == doctest::Approx(0.0001));
}

TEST_CASE("training separable identities collapses the loss") {
  NetConfig cfg = NetConfig::gradcheck_tiny();
  cfg.n3 = 2;
  std::vector<TrainItem> items;
  Rng rng(9);
  for (int i = 0; i < 8; ++i) {
    TrainItem item;
    item.label = i % 2;
    const float base = item.label == 0 ? 0.15f : 0.85f;
    item.img = ImageTensor(cfg.input_h, cfg.input_w, base);
    item.pb = ImageTensor(cfg.input_h, cfg.input_w, 1.0f - base);
    for (auto& v : item.img.data) v += float(rng.uniform(-0.05, 0.05));
    item.conf.fill(item.label == 0 ? 0.2 : 0.9);
    items.push_back(std::move(item));
  }
  const TrainResult result = train(cfg, items, 50, 0.1, 13);
  CHECK(result.epoch_mean_loss.back() <
        0.1 * result.epoch_mean_loss.front());
}

TEST_CASE("loss history is deterministic per seed") {
  NetConfig cfg = NetConfig::gradcheck_tiny();
  std::vector<TrainItem> items;
  Rng rng(2);
  for (int i = 0; i < 6; ++i) {
    TrainItem item;
    item.label = i % cfg.n3;
    item.img = random_image(cfg.input_h, cfg.input_w, rng);
    item.pb = random_image(cfg.input_h, cfg.input_w, rng);
    item.conf = random_conf(rng);
    items.push_back(std::move(item));
  }
  const TrainResult a = train(cfg, items, 5, 0.01, 21);
  const TrainResult b = train(cfg, items, 5, 0.01, 21);
  CHECK(a.epoch_mean_loss == b.epoch_mean_loss);
  const TrainResult c = train(cfg, items, 5, 0.01, 22);
  CHECK(a.epoch_mean_loss != c.epoch_mean_loss);
}

TEST_CASE("extracted embeddings have contract dims and ReLU range") {
  const NetConfig cfg = NetConfig::toy(9);
  const NetParams params = init_params(cfg, 1);
  Rng rng(3);
  const ImageTensor img = random_image(cfg.input_h, cfg.input_w, rng);
  const ImageTensor pb = random_image(cfg.input_h, cfg.input_w, rng);
  const auto conf = random_conf(rng);
  const auto concat = extract_pie(params, cfg, img, pb, conf, PieLayer::kConcat);
  const auto fused = extract_pie(params, cfg, img, pb, conf, PieLayer::kFused);
  CHECK(concat.size() == 142);
  CHECK(fused.size() == 9);
  for (float v : concat) CHECK(v >= 0.0f);
  for (float v : fused) CHECK(v >= 0.0f);
}

TEST_CASE("zeroed confidence stream reduces to the ablated network") {
  // With zero conf input and zero conf_fc bias the conf embedding is zero,
  // so the fused logits must equal those of a conf-ablated network whose
  // fused head keeps only the img/pb columns.
  const NetConfig full = NetConfig::toy(4);
  const NetConfig ablated = ablation_config(AblationArm::kNoConfidence, full);
  const NetParams params = init_params(full, 31);

  NetParams cut = init_params(ablated, 31);
  cut.img = params.img;
  cut.pb = params.pb;
  cut.head_fused.w = params.head_fused.w.leftCols(ablated.concat_dim());
  cut.head_fused.b = params.head_fused.b;

  Rng rng(6);
  const ImageTensor img = random_image(full.input_h, full.input_w, rng);
  const ImageTensor pb = random_image(full.input_h, full.input_w, rng);
  std::array<double, kConfDim> zero_conf{};
  const ForwardOutput a = forward(params, full, img, pb, zero_conf);
  const ForwardOutput b = forward(cut, ablated, img, pb, zero_conf);
  CHECK((a.logits_fused - b.logits_fused).cwiseAbs().maxCoeff() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("params file round-trips bit-exactly") {
  const NetConfig cfg = NetConfig::gradcheck_tiny();
  NetParams params = init_params(cfg, 77);
  const std::string path = "/tmp/pie_test_params.piep";
  write_params(params, cfg, path);
  auto [back, back_cfg] = read_params(path);
  CHECK(back_cfg.concat_dim() == cfg.concat_dim());
  CHECK(back_cfg.n3 == cfg.n3);
  CHECK(max_abs_diff_params(params, back) == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("config file round-trips") {
  NetConfig cfg = NetConfig::toy(17);
  cfg.stream_conf = false;
  cfg.aux_losses = false;
  const std::string path = "/tmp/pie_test_config.txt";
  cfg.to_file(path);
  const NetConfig back = NetConfig::from_file(path);
  CHECK(back.n3 == 17);
  CHECK(back.stream_conf == false);
  CHECK(back.aux_losses == false);
  CHECK(back.concat_dim() == cfg.concat_dim());
  CHECK(back.conv_channels == cfg.conv_channels);
  std::remove(path.c_str());
}

TEST_CASE("invalid configs are rejected") {
  NetConfig cfg = NetConfig::toy(5);
  cfg.stream_img = false;
  cfg.stream_pb = false;
  cfg.stream_conf = false;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  CHECK_THROWS_AS(NetConfig::baseline(3, 5), ValidationError);
}
