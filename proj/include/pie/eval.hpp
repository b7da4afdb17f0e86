#ifndef PIE_EVAL_HPP_
#define PIE_EVAL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "pie/metric.hpp"
#include "pie/types.hpp"

namespace pie {

/// Cross-camera single-query protocol. Gallery entries sharing both
/// identity and camera with the query are excluded from scoring.
struct EvalProtocol {
  bool single_query = true;
  bool exclude_same_camera_same_id = true;
};

struct RankList {
  std::size_t query_index = 0;            // position within the query split
  std::vector<std::size_t> gallery_order; // eligible gallery positions, ascending distance
  std::vector<bool> relevant;             // parallel to gallery_order
};

struct CMCCurve {
  std::vector<double> values;  // values[k] = CMC at rank k+1
};

struct EvalReport {
  CMCCurve cmc;
  double mean_ap = 0.0;
  std::vector<double> per_query_ap;  // averaged queries only
  std::size_t skipped_queries = 0;   // no cross-camera ground truth
  EvalProtocol protocol;
  std::string config_echo;
};

/// Eligible gallery positions for a query under the protocol, preserving
/// gallery order.
std::vector<std::size_t> apply_protocol(
    const std::vector<SampleRecord>& gallery_records,
    const SampleRecord& query);

/// Ranks eligible gallery items by ascending distance to the query
/// feature; ties break by gallery position ascending.
RankList rank_gallery(const float* query_feat, const FeatureMatrix& gallery,
                      const MetricModel& model,
                      const std::vector<std::size_t>& eligible,
                      const std::vector<bool>& relevant_by_position);

/// Mean over relevant positions k (1-based) of (#relevant in top k) / k.
double average_precision(const RankList& rl);

/// CMC(n) = fraction of rank lists whose first relevant item has rank <= n.
CMCCurve cmc_curve(const std::vector<RankList>& rank_lists, std::size_t max_rank);

/// Full evaluation of a query set against a gallery.
EvalReport evaluate(const FeatureMatrix& query_feats,
                    const std::vector<SampleRecord>& query_records,
                    const FeatureMatrix& gallery_feats,
                    const std::vector<SampleRecord>& gallery_records,
                    const MetricModel& model, std::size_t max_rank = 20);

void write_cmc_csv(const CMCCurve& cmc, const std::string& path);
void write_report_csv(const EvalReport& report, const std::string& path);

}  // namespace pie

#endif  // PIE_EVAL_HPP_
