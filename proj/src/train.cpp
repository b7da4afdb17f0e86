#include <cmath>

#include "pie/errors.hpp"
#include "pie/net.hpp"
#include "pie/rng.hpp"

namespace pie {

double sgd_learning_rate(double lr0, int epoch) {
  return lr0 * std::pow(10.0, -(epoch / 6));
}

TrainResult train(const NetConfig& config, const std::vector<TrainItem>& items,
                  int epochs, double lr0, std::uint64_t seed) {
  config.validate();
  if (items.empty()) throw ValidationError("training set is empty");
  for (const auto& item : items)
    if (item.label < 0 || item.label >= config.n3)
      throw ValidationError("training label " + std::to_string(item.label) +
                            " outside 0.." + std::to_string(config.n3 - 1));

  TrainResult result;
  result.params = init_params(config, seed);

  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double lr = sgd_learning_rate(lr0, epoch);
    Rng shuffle_rng(Rng::derive(seed, 1000 + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), pos + static_cast<std::size_t>(config.batch_size));
      NetParams grads = zeros_like(result.params);
      for (std::size_t i = pos; i < batch_end; ++i) {
        const TrainItem& item = items[order[i]];
        const ForwardOutput out =
            forward(result.params, config, item.img, item.pb, item.conf);
        const LossReport loss = total_loss(out, item.label, config);
        if (!std::isfinite(loss.total))
          throw ValidationError(
              "non-finite loss at epoch " + std::to_string(epoch) +
              ", sample " + std::to_string(order[i]) +
              " (lr=" + std::to_string(lr) + ")");
        epoch_loss += loss.total;
        axpy_params(grads, backward(result.params, config, out, item.label),
                    1.0);
      }
      const double batch_n = static_cast<double>(batch_end - pos);
      axpy_params(result.params, grads, -lr / batch_n);
      pos = batch_end;
    }
    result.epoch_mean_loss.push_back(epoch_loss /
                                     static_cast<double>(items.size()));
  }
  return result;
}

double gradient_check(const NetConfig& config, std::uint64_t seed,
                      double epsilon) {
  config.validate();
  Rng rng(Rng::derive(seed, 77));

  auto random_image = [&](int h, int w) {
    ImageTensor img(h, w);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
  };
  const ImageTensor img = random_image(config.input_h, config.input_w);
  const ImageTensor pb = random_image(config.input_h, config.input_w);
  std::array<double, kConfDim> conf{};
  for (auto& c : conf) c = rng.uniform();
  const int label = static_cast<int>(rng.uniform_int(0, config.n3 - 1));

  NetParams params = init_params(config, seed);
  const ForwardOutput out = forward(params, config, img, pb, conf);
  NetParams analytic = backward(params, config, out, label);

  auto loss_at = [&]() {
    const ForwardOutput o = forward(params, config, img, pb, conf);
    return total_loss(o, label, config).total;
  };

  std::vector<std::pair<double*, std::size_t>> theta, grad;
  for_each_param(params, [&](const std::string&, double* ptr, std::size_t n) {
    theta.emplace_back(ptr, n);
  });
  for_each_param(analytic, [&](const std::string&, double* ptr, std::size_t n) {
    grad.emplace_back(ptr, n);
  });

  double worst = 0.0;
  for (std::size_t t = 0; t < theta.size(); ++t) {
    for (std::size_t i = 0; i < theta[t].second; ++i) {
      double& p = theta[t].first[i];
      const double saved = p;
      p = saved + epsilon;
      const double lp = loss_at();
      p = saved - epsilon;
      const double lm = loss_at();
      p = saved;
      const double numeric = (lp - lm) / (2.0 * epsilon);
      const double a = grad[t].first[i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1.0});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace pie
