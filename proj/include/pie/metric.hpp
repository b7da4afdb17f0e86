#ifndef PIE_METRIC_HPP_
#define PIE_METRIC_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pie/types.hpp"

namespace pie {

enum class MetricKind { kEuclidean, kKissme };

/// Distance model for retrieval: identity (Euclidean) or a learned
/// symmetric PSD Mahalanobis matrix (KISSME).
struct MetricModel {
  MetricKind kind = MetricKind::kEuclidean;
  Eigen::MatrixXd m;  // d x d; identity semantics when kind == kEuclidean

  static MetricModel euclidean() { return {MetricKind::kEuclidean, {}}; }
};

/// Index pairs into a FeatureMatrix; similar pairs share identity,
/// dissimilar pairs do not.
struct PairSet {
  std::vector<std::pair<std::size_t, std::size_t>> similar;
  std::vector<std::pair<std::size_t, std::size_t>> dissimilar;
};

/// v / ||v||2. Throws ValidationError on a zero vector.
std::vector<float> l2_normalize(const std::vector<float>& v);
void l2_normalize_rows(FeatureMatrix& features);

/// ||x - y||2. Dimensions must match.
double euclidean_distance(const float* x, const float* y, std::size_t dim);

/// Fits KISSME: difference covariances of similar/dissimilar pairs,
/// M0 = (Sigma_S + reg I)^-1 - (Sigma_D + reg I)^-1, then PSD projection by
/// clipping negative eigenvalues to zero. reg < 0 selects the default
/// 1e-3 * trace(Sigma)/d per covariance.
MetricModel kissme_fit(const FeatureMatrix& features, const PairSet& pairs,
                       double reg);

/// Same as kissme_fit but from exact covariance matrices (test/oracle entry
/// point and the core of kissme_fit). Returns the pre-projection M0 too.
std::pair<MetricModel, Eigen::MatrixXd> kissme_from_covariances(
    const Eigen::MatrixXd& sigma_similar, const Eigen::MatrixXd& sigma_dissimilar,
    double reg);

/// Squared Mahalanobis distance (x-y)^T M (x-y); plain squared Euclidean
/// for a Euclidean model.
double metric_distance(const MetricModel& model, const float* x, const float* y,
                       std::size_t dim);

/// Builds fitting pairs from a manifest split: all same-identity
/// cross-camera pairs as similar, an equal-count seeded sample of
/// different-identity pairs as dissimilar.
PairSet sample_pairs(const DatasetManifest& manifest,
                     const std::vector<std::size_t>& record_indices,
                     std::uint64_t seed);

// Metric file: magic `PIEM`, u32 dim, row-major little-endian f64.
void write_metric(const MetricModel& model, const std::string& path);
MetricModel read_metric(const std::string& path);

}  // namespace pie

#endif  // PIE_METRIC_HPP_
