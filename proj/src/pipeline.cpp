#include <filesystem>
#include <map>
#include <set>

#include "pie/errors.hpp"
#include "pie/image.hpp"
#include "pie/io.hpp"
#include "pie/pipeline.hpp"
#include "pie/posebox.hpp"
#include "pie/rng.hpp"

namespace pie {

DataBundle bundle_from_synth(SynthDataset&& ds) {
  DataBundle b;
  b.manifest = std::move(ds.manifest);
  b.images.reserve(ds.samples.size());
  b.joints.reserve(ds.samples.size());
  for (auto& s : ds.samples) {
    b.images.push_back(std::move(s.image));
    b.joints.push_back(s.joints);
  }
  return b;
}

DataBundle load_bundle(const std::string& dir) {
  namespace fs = std::filesystem;
  DataBundle b;
  b.manifest = parse_manifest((fs::path(dir) / "manifest.csv").string());
  const auto keypoints =
      parse_keypoints((fs::path(dir) / "keypoints.jsonl").string());
  for (const auto& r : b.manifest.records) {
    b.images.push_back(load_png((fs::path(dir) / r.image_path).string()));
    const auto it = keypoints.find(r.image_path);
    if (it == keypoints.end())
      throw ValidationError("no keypoints for image '" + r.image_path + "'");
    b.joints.push_back(it->second);
  }
  return b;
}

namespace {

std::array<double, kConfDim> confidence_vector(const JointSet& js) {
  std::array<double, kConfDim> conf{};
  for (int i = 0; i < kNumJoints; ++i) conf[i] = js.joints[i].c;
  return conf;
}

struct PreparedInputs {
  std::vector<ImageTensor> imgs;  // resized to net input
  std::vector<ImageTensor> pbs;   // empty when the pb stream is unused
  std::vector<std::array<double, kConfDim>> confs;
};

PreparedInputs prepare_inputs(const DataBundle& data, const NetConfig& config,
                              bool need_posebox, int box_type,
                              std::uint64_t seed) {
  PreparedInputs prep;
  const PoseBoxTemplate tmpl = PoseBoxTemplate::standard();
  for (std::size_t i = 0; i < data.manifest.records.size(); ++i) {
    prep.imgs.push_back(
        resize_bilinear(data.images[i], config.input_h, config.input_w));
    if (need_posebox) {
      const PoseBoxResult pb =
          build_posebox(data.images[i], data.joints[i], box_type, tmpl,
                        Rng::derive(seed, 9000 + i));
      prep.pbs.push_back(
          resize_bilinear(pb.canvas, config.input_h, config.input_w));
    } else {
      prep.pbs.emplace_back();
    }
    prep.confs.push_back(confidence_vector(data.joints[i]));
  }
  return prep;
}

FeatureMatrix extract_split(const NetParams& params, const NetConfig& config,
                            const PreparedInputs& prep,
                            const std::vector<std::size_t>& indices,
                            PieLayer layer) {
  FeatureMatrix feats;
  feats.provenance = layer == PieLayer::kConcat ? FeatureProvenance::kPieConcat
                                                : FeatureProvenance::kPieFused;
  feats.n = static_cast<std::uint32_t>(indices.size());
  bool first = true;
  for (std::size_t idx : indices) {
    const auto v = extract_pie(params, config, prep.imgs[idx], prep.pbs[idx],
                               prep.confs[idx], layer);
    if (first) {
      feats.dim = static_cast<std::uint32_t>(v.size());
      feats.rows.reserve(static_cast<std::size_t>(feats.n) * feats.dim);
      first = false;
    }
    feats.rows.insert(feats.rows.end(), v.begin(), v.end());
  }
  l2_normalize_rows(feats);
  return feats;
}

}  // namespace

PipelineResult run_pipeline(const DataBundle& data,
                            const PipelineOptions& options) {
  const auto train_idx = data.manifest.split_indices(Split::kTrain);
  const auto query_idx = data.manifest.split_indices(Split::kQuery);
  const auto gallery_idx = data.manifest.split_indices(Split::kGallery);
  if (train_idx.empty()) throw ValidationError("training split is empty");

  // Remap train identities to 0..n3-1.
  std::set<int> train_ids;
  for (std::size_t i : train_idx)
    train_ids.insert(data.manifest.records[i].identity);
  std::map<int, int> label_of;
  for (int id : train_ids)
    label_of.emplace(id, static_cast<int>(label_of.size()));

  NetConfig config = ablation_config(
      options.experiment, NetConfig::toy(static_cast<int>(train_ids.size())));
  const bool need_posebox = config.stream_pb;

  const PreparedInputs prep = prepare_inputs(data, config, need_posebox,
                                             options.box_type, options.seed);

  std::vector<TrainItem> items;
  items.reserve(train_idx.size());
  for (std::size_t i : train_idx) {
    TrainItem item;
    item.img = prep.imgs[i];
    item.pb = prep.pbs[i];
    item.conf = prep.confs[i];
    item.label = label_of.at(data.manifest.records[i].identity);
    items.push_back(std::move(item));
  }

  const TrainResult trained = train(config, items, options.epochs, options.lr0,
                                    Rng::derive(options.seed, 1));

  PipelineResult result;
  result.config = config;
  result.params = trained.params;
  result.loss_history = trained.epoch_mean_loss;
  result.query_feats =
      extract_split(trained.params, config, prep, query_idx, options.layer);
  result.gallery_feats =
      extract_split(trained.params, config, prep, gallery_idx, options.layer);

  MetricModel model = MetricModel::euclidean();
  if (options.metric == MetricKind::kKissme) {
    result.train_feats =
        extract_split(trained.params, config, prep, train_idx, options.layer);
    const PairSet pairs = sample_pairs(data.manifest, train_idx,
                                       Rng::derive(options.seed, 2));
    model = kissme_fit(result.train_feats, pairs, options.kissme_reg);
  }

  std::vector<SampleRecord> query_records, gallery_records;
  for (std::size_t i : query_idx) query_records.push_back(data.manifest.records[i]);
  for (std::size_t i : gallery_idx)
    gallery_records.push_back(data.manifest.records[i]);

  result.report = evaluate(result.query_feats, query_records,
                           result.gallery_feats, gallery_records, model);
  result.report.config_echo = std::string(ablation_name(options.experiment)) +
                              ";box_type=" + std::to_string(options.box_type) +
                              ";metric=" +
                              (options.metric == MetricKind::kKissme ? "kissme"
                                                                    : "euclid") +
                              ";seed=" + std::to_string(options.seed);
  return result;
}

std::vector<AblationRow> run_ablation(const DataBundle& data,
                                      const std::vector<AblationArm>& suite,
                                      const std::vector<std::uint64_t>& seeds,
                                      const PipelineOptions& base) {
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : seeds) {
    for (AblationArm arm : suite) {
      PipelineOptions opt = base;
      opt.experiment = arm;
      opt.seed = seed;
      AblationRow row;
      row.arm = arm;
      row.seed = seed;
      row.report = run_pipeline(data, opt).report;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace pie
