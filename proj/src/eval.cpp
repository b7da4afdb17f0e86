#include <algorithm>
#include <fstream>

#include "pie/errors.hpp"
#include "pie/eval.hpp"

namespace pie {

std::vector<std::size_t> apply_protocol(
    const std::vector<SampleRecord>& gallery_records,
    const SampleRecord& query) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < gallery_records.size(); ++i) {
    const auto& g = gallery_records[i];
    if (g.identity == query.identity && g.camera == query.camera) continue;
    eligible.push_back(i);
  }
  return eligible;
}

RankList rank_gallery(const float* query_feat, const FeatureMatrix& gallery,
                      const MetricModel& model,
                      const std::vector<std::size_t>& eligible,
                      const std::vector<bool>& relevant_by_position) {
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(eligible.size());
  for (std::size_t pos : eligible)
    scored.emplace_back(
        metric_distance(model, query_feat, gallery.row(pos), gallery.dim), pos);
  // Ascending distance; ties broken by gallery position ascending.
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) {
                     if (a.first != b.first) return a.first < b.first;
                     return a.second < b.second;
                   });
  RankList rl;
  rl.gallery_order.reserve(scored.size());
  rl.relevant.reserve(scored.size());
  for (const auto& [dist, pos] : scored) {
    rl.gallery_order.push_back(pos);
    rl.relevant.push_back(relevant_by_position[pos]);
  }
  return rl;
}

double average_precision(const RankList& rl) {
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < rl.relevant.size(); ++k) {
    if (!rl.relevant[k]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0)
    throw ValidationError("average_precision on a list with no relevant items");
  return sum / static_cast<double>(hits);
}

CMCCurve cmc_curve(const std::vector<RankList>& rank_lists,
                   std::size_t max_rank) {
  CMCCurve cmc;
  cmc.values.assign(max_rank, 0.0);
  for (const auto& rl : rank_lists) {
    for (std::size_t k = 0; k < rl.relevant.size(); ++k) {
      if (rl.relevant[k]) {
        for (std::size_t n = k; n < max_rank; ++n) cmc.values[n] += 1.0;
        break;
      }
    }
  }
  if (!rank_lists.empty())
    for (double& v : cmc.values) v /= static_cast<double>(rank_lists.size());
  return cmc;
}

EvalReport evaluate(const FeatureMatrix& query_feats,
                    const std::vector<SampleRecord>& query_records,
                    const FeatureMatrix& gallery_feats,
                    const std::vector<SampleRecord>& gallery_records,
                    const MetricModel& model, std::size_t max_rank) {
  if (query_feats.n != query_records.size() ||
      gallery_feats.n != gallery_records.size())
    throw ValidationError("feature/record count mismatch");
  if (query_feats.n > 0 && gallery_feats.n > 0 &&
      query_feats.dim != gallery_feats.dim)
    throw ValidationError("query/gallery feature dimension mismatch");

  EvalReport report;
  std::vector<RankList> lists;
  for (std::size_t qi = 0; qi < query_records.size(); ++qi) {
    const auto& q = query_records[qi];
    const auto eligible = apply_protocol(gallery_records, q);

    std::vector<bool> relevant(gallery_records.size(), false);
    bool any_relevant = false;
    for (std::size_t pos : eligible)
      if (gallery_records[pos].identity == q.identity) {
        relevant[pos] = true;
        any_relevant = true;
      }
    if (!any_relevant) {
      ++report.skipped_queries;
      continue;
    }

    RankList rl = rank_gallery(query_feats.row(qi), gallery_feats, model,
                               eligible, relevant);
    rl.query_index = qi;
    report.per_query_ap.push_back(average_precision(rl));
    lists.push_back(std::move(rl));
  }

  report.cmc = cmc_curve(lists, max_rank);
  if (!report.per_query_ap.empty()) {
    double sum = 0.0;
    for (double ap : report.per_query_ap) sum += ap;
    report.mean_ap = sum / static_cast<double>(report.per_query_ap.size());
  }
  return report;
}

void write_cmc_csv(const CMCCurve& cmc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write CMC csv '" + path + "'");
  out << "rank,value\n";
  for (std::size_t i = 0; i < cmc.values.size(); ++i)
    out << (i + 1) << ',' << cmc.values[i] << '\n';
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report csv '" + path + "'");
  out << "key,value\n";
  out << "mAP," << report.mean_ap << '\n';
  out << "skipped_queries," << report.skipped_queries << '\n';
  out << "single_query," << (report.protocol.single_query ? 1 : 0) << '\n';
  out << "exclude_same_camera_same_id,"
      << (report.protocol.exclude_same_camera_same_id ? 1 : 0) << '\n';
  if (!report.config_echo.empty()) out << "config," << report.config_echo << '\n';
  for (std::size_t i = 0; i < report.per_query_ap.size(); ++i)
    out << "ap_" << i << ',' << report.per_query_ap[i] << '\n';
}

}  // namespace pie
