#ifndef PIE_PIPELINE_HPP_
#define PIE_PIPELINE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "pie/eval.hpp"
#include "pie/metric.hpp"
#include "pie/net.hpp"
#include "pie/synth.hpp"
#include "pie/types.hpp"

namespace pie {

/// A dataset materialized in memory: records plus the image and joint set
/// for each record, index-parallel with the manifest.
struct DataBundle {
  DatasetManifest manifest;
  std::vector<ImageTensor> images;
  std::vector<JointSet> joints;
};

DataBundle bundle_from_synth(SynthDataset&& ds);
/// Loads manifest.csv, keypoints.jsonl and the referenced PNGs from a
/// directory (paths in the manifest are relative to it).
DataBundle load_bundle(const std::string& dir);

struct PipelineOptions {
  AblationArm experiment = AblationArm::kFull;
  int box_type = 2;
  MetricKind metric = MetricKind::kEuclidean;
  PieLayer layer = PieLayer::kConcat;
  int epochs = 12;
  double lr0 = 0.05;  // toy-scale nets train from scratch; larger than the full-scale fine-tuning rate
  double kissme_reg = -1.0;  // negative selects the default ridge
  std::uint64_t seed = 0;
};

struct PipelineResult {
  EvalReport report;
  NetParams params;
  FeatureMatrix query_feats;
  FeatureMatrix gallery_feats;
  FeatureMatrix train_feats;
  std::vector<double> loss_history;
  NetConfig config;
};

/// End-to-end run: PoseBox construction (when the experiment uses the pb
/// stream), training, PIE extraction (ReLU then l2-normalized), optional
/// KISSME fit on the train split, and evaluation.
PipelineResult run_pipeline(const DataBundle& data,
                            const PipelineOptions& options);

struct AblationRow {
  AblationArm arm;
  std::uint64_t seed = 0;
  EvalReport report;
};

/// One evaluation per (config, seed) over the requested arms.
std::vector<AblationRow> run_ablation(const DataBundle& data,
                                      const std::vector<AblationArm>& suite,
                                      const std::vector<std::uint64_t>& seeds,
                                      const PipelineOptions& base);

}  // namespace pie

#endif  // PIE_PIPELINE_HPP_
