#include <cmath>
#include <cstring>
#include <fstream>

#include "pie/errors.hpp"
#include "pie/metric.hpp"
#include "pie/rng.hpp"

namespace pie {

std::vector<float> l2_normalize(const std::vector<float>& v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0))
    throw ValidationError("cannot l2-normalize a zero vector");
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = static_cast<float>(v[i] / norm);
  return out;
}

void l2_normalize_rows(FeatureMatrix& features) {
  for (std::uint32_t i = 0; i < features.n; ++i) {
    float* row = features.row(i);
    double sq = 0.0;
    for (std::uint32_t j = 0; j < features.dim; ++j)
      sq += static_cast<double>(row[j]) * row[j];
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0))
      throw ValidationError("feature row " + std::to_string(i) +
                            " has zero norm");
    for (std::uint32_t j = 0; j < features.dim; ++j)
      row[j] = static_cast<float>(row[j] / norm);
  }
}

double euclidean_distance(const float* x, const float* y, std::size_t dim) {
  double sq = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = static_cast<double>(x[i]) - y[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

namespace {

Eigen::MatrixXd difference_covariance(
    const FeatureMatrix& f,
    const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  const auto d = static_cast<Eigen::Index>(f.dim);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd diff(d);
  for (const auto& [a, b] : pairs) {
    const float* ra = f.row(a);
    const float* rb = f.row(b);
    for (Eigen::Index i = 0; i < d; ++i)
      diff(i) = static_cast<double>(ra[i]) - rb[i];
    cov.noalias() += diff * diff.transpose();
  }
  cov /= static_cast<double>(pairs.size());
  return cov;
}

Eigen::MatrixXd regularized_inverse(const Eigen::MatrixXd& sigma, double reg,
                                    const char* which) {
  const auto d = sigma.rows();
  Eigen::MatrixXd ridged = sigma;
  ridged.diagonal().array() += reg;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(ridged);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 0.0)
    throw ValidationError(std::string(which) +
                          " difference covariance is singular; rerun with "
                          "reg > 0");
  return ldlt.solve(Eigen::MatrixXd::Identity(d, d));
}

}  // namespace

std::pair<MetricModel, Eigen::MatrixXd> kissme_from_covariances(
    const Eigen::MatrixXd& sigma_similar,
    const Eigen::MatrixXd& sigma_dissimilar, double reg) {
  const auto d = sigma_similar.rows();
  if (sigma_dissimilar.rows() != d || sigma_similar.cols() != d ||
      sigma_dissimilar.cols() != d)
    throw ValidationError("covariance dimension mismatch");

  auto default_reg = [&](const Eigen::MatrixXd& s) {
    return 1e-3 * s.trace() / static_cast<double>(d);
  };
  const double reg_s = reg >= 0.0 ? reg : default_reg(sigma_similar);
  const double reg_d = reg >= 0.0 ? reg : default_reg(sigma_dissimilar);

  const Eigen::MatrixXd m0 =
      regularized_inverse(sigma_similar, reg_s, "similar") -
      regularized_inverse(sigma_dissimilar, reg_d, "dissimilar");

  // Symmetrize against round-off, then clip negative eigenvalues.
  const Eigen::MatrixXd sym = 0.5 * (m0 + m0.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
  MetricModel model;
  model.kind = MetricKind::kKissme;
  model.m = eig.eigenvectors() * clipped.asDiagonal() *
            eig.eigenvectors().transpose();
  model.m = 0.5 * (model.m + model.m.transpose());
  return {model, m0};
}

MetricModel kissme_fit(const FeatureMatrix& features, const PairSet& pairs,
                       double reg) {
  if (pairs.similar.empty() || pairs.dissimilar.empty())
    throw ValidationError("KISSME needs non-empty similar and dissimilar pairs");
  const Eigen::MatrixXd sigma_s =
      difference_covariance(features, pairs.similar);
  const Eigen::MatrixXd sigma_d =
      difference_covariance(features, pairs.dissimilar);
  return kissme_from_covariances(sigma_s, sigma_d, reg).first;
}

double metric_distance(const MetricModel& model, const float* x, const float* y,
                       std::size_t dim) {
  if (model.kind == MetricKind::kEuclidean) {
    double sq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = static_cast<double>(x[i]) - y[i];
      sq += d * d;
    }
    return sq;
  }
  if (static_cast<std::size_t>(model.m.rows()) != dim)
    throw ValidationError("metric dimension " + std::to_string(model.m.rows()) +
                          " does not match feature dimension " +
                          std::to_string(dim));
  Eigen::VectorXd diff(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i)
    diff(static_cast<Eigen::Index>(i)) = static_cast<double>(x[i]) - y[i];
  return diff.dot(model.m * diff);
}

PairSet sample_pairs(const DatasetManifest& manifest,
                     const std::vector<std::size_t>& record_indices,
                     std::uint64_t seed) {
  PairSet pairs;
  for (std::size_t a = 0; a < record_indices.size(); ++a) {
    for (std::size_t b = a + 1; b < record_indices.size(); ++b) {
      const auto& ra = manifest.records[record_indices[a]];
      const auto& rb = manifest.records[record_indices[b]];
      if (ra.identity == rb.identity && ra.camera != rb.camera)
        pairs.similar.emplace_back(a, b);
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> negatives;
  for (std::size_t a = 0; a < record_indices.size(); ++a)
    for (std::size_t b = a + 1; b < record_indices.size(); ++b)
      if (manifest.records[record_indices[a]].identity !=
          manifest.records[record_indices[b]].identity)
        negatives.emplace_back(a, b);

  Rng rng(seed);
  rng.shuffle(negatives);
  const std::size_t want = std::min(pairs.similar.size(), negatives.size());
  pairs.dissimilar.assign(negatives.begin(),
                          negatives.begin() + static_cast<std::ptrdiff_t>(want));
  return pairs;
}

namespace {
constexpr char kMetricMagic[4] = {'P', 'I', 'E', 'M'};
}

void write_metric(const MetricModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write metric file '" + path + "'");
  out.write(kMetricMagic, 4);
  const auto dim = static_cast<std::uint32_t>(model.m.rows());
  out.write(reinterpret_cast<const char*>(&dim), 4);
  for (Eigen::Index r = 0; r < model.m.rows(); ++r)
    for (Eigen::Index c = 0; c < model.m.cols(); ++c) {
      const double v = model.m(r, c);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
  if (!out) throw IoError("short write on metric file '" + path + "'");
}

MetricModel read_metric(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open metric file '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMetricMagic, 4) != 0)
    throw IoError("bad magic in metric file '" + path + "'");
  std::uint32_t dim = 0;
  in.read(reinterpret_cast<char*>(&dim), 4);
  if (!in) throw IoError("metric file '" + path + "' truncated");
  MetricModel model;
  model.kind = MetricKind::kKissme;
  model.m.resize(dim, dim);
  for (std::uint32_t r = 0; r < dim; ++r)
    for (std::uint32_t c = 0; c < dim; ++c) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), 8);
      if (!in) throw IoError("metric file '" + path + "' truncated");
      model.m(r, c) = v;
    }
  return model;
}

}  // namespace pie
