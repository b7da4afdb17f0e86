// pie: pose-aligned person re-identification toolkit.
//
// Subcommands cover the full pipeline: synthetic data generation, PoseBox
// construction, fusion-network training, PIE extraction, KISSME fitting,
// retrieval evaluation and report emission.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "pie/errors.hpp"
#include "pie/eval.hpp"
#include "pie/image.hpp"
#include "pie/io.hpp"
#include "pie/metric.hpp"
#include "pie/net.hpp"
#include "pie/pipeline.hpp"
#include "pie/posebox.hpp"
#include "pie/report.hpp"
#include "pie/rng.hpp"
#include "pie/synth.hpp"

namespace fs = std::filesystem;
using namespace pie;

namespace {

struct LoadedData {
  DatasetManifest manifest;
  fs::path image_root;
  std::map<std::string, JointSet> keypoints;
};

LoadedData load_data(const std::string& manifest_path,
                     const std::string& keypoints_path) {
  LoadedData d;
  d.manifest = parse_manifest(manifest_path);
  d.image_root = fs::path(manifest_path).parent_path();
  d.keypoints = parse_keypoints(keypoints_path);
  return d;
}

const JointSet& joints_for(const LoadedData& d, const std::string& image_path) {
  const auto it = d.keypoints.find(image_path);
  if (it == d.keypoints.end())
    throw ValidationError("no keypoints for image '" + image_path + "'");
  return it->second;
}

std::array<double, kConfDim> conf_vector(const JointSet& js) {
  std::array<double, kConfDim> conf{};
  for (int i = 0; i < kNumJoints; ++i) conf[i] = js.joints[i].c;
  return conf;
}

/// Prepares net inputs for one record: resized image, resized PoseBox read
/// from posebox_dir (zeros if the stream is unused), confidence vector.
TrainItem make_item(const LoadedData& d, const SampleRecord& r,
                    const NetConfig& config, const std::string& posebox_dir) {
  TrainItem item;
  item.img = resize_bilinear(load_png((d.image_root / r.image_path).string()),
                             config.input_h, config.input_w);
  if (config.stream_pb) {
    const fs::path pb_path = fs::path(posebox_dir) / r.image_path;
    item.pb = resize_bilinear(load_png(pb_path.string()), config.input_h,
                              config.input_w);
  }
  item.conf = conf_vector(joints_for(d, r.image_path));
  return item;
}

std::map<int, int> train_label_map(const DatasetManifest& m) {
  std::set<int> ids;
  for (const auto& r : m.records)
    if (r.split == Split::kTrain) ids.insert(r.identity);
  std::map<int, int> labels;
  for (int id : ids) labels.emplace(id, static_cast<int>(labels.size()));
  return labels;
}

int cmd_synth(const SynthConfig& config, const std::string& out_dir) {
  synth_write(config, out_dir);
  std::cout << "wrote " << config.n_ids * config.images_per_id << " images to "
            << out_dir << "\n";
  return 0;
}

int cmd_posebox(const std::string& manifest_path, const std::string& keypoints_path,
                int box_type, const std::string& out_dir, std::uint64_t seed) {
  const LoadedData d = load_data(manifest_path, keypoints_path);
  fs::create_directories(out_dir);
  const PoseBoxTemplate tmpl = PoseBoxTemplate::standard();

  std::ofstream flags(fs::path(out_dir) / "flags.csv");
  flags << "image_path,part\n";
  for (std::size_t i = 0; i < d.manifest.records.size(); ++i) {
    const auto& r = d.manifest.records[i];
    const ImageTensor img = load_png((d.image_root / r.image_path).string());
    const PoseBoxResult result =
        build_posebox(img, joints_for(d, r.image_path), box_type, tmpl,
                      Rng::derive(seed, 9000 + i));
    save_png(result.canvas, (fs::path(out_dir) / r.image_path).string());
    for (PartName part : result.degenerate_parts)
      flags << r.image_path << ',' << part_name(part) << '\n';
  }
  std::cout << "wrote " << d.manifest.records.size() << " poseboxes to "
            << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& posebox_dir,
              const std::string& keypoints_path, const std::string& config_path,
              std::uint64_t seed, int epochs, double lr0,
              const std::string& out_path) {
  const LoadedData d = load_data(manifest_path, keypoints_path);
  const auto labels = train_label_map(d.manifest);

  NetConfig config = config_path.empty() ? NetConfig::toy(2)
                                         : NetConfig::from_file(config_path);
  config.n3 = static_cast<int>(labels.size());  // class count from the data
  config.validate();

  std::vector<TrainItem> items;
  for (const auto& r : d.manifest.records) {
    if (r.split != Split::kTrain) continue;
    TrainItem item = make_item(d, r, config, posebox_dir);
    item.label = labels.at(r.identity);
    items.push_back(std::move(item));
  }

  const TrainResult result = train(config, items, epochs, lr0, seed);
  write_params(result.params, config, out_path);
  std::cout << "epoch mean loss:";
  for (double loss : result.epoch_mean_loss) std::cout << ' ' << loss;
  std::cout << "\nwrote params to " << out_path << "\n";
  return 0;
}

int cmd_extract(const std::string& params_path, const std::string& manifest_path,
                const std::string& posebox_dir, const std::string& keypoints_path,
                const std::string& split, const std::string& layer_name,
                const std::string& out_path) {
  const auto [params, config] = read_params(params_path);
  const LoadedData d = load_data(manifest_path, keypoints_path);
  const Split want = split_from_string(split);
  const PieLayer layer =
      layer_name == "fused" ? PieLayer::kFused : PieLayer::kConcat;

  FeatureMatrix feats;
  feats.provenance = layer == PieLayer::kConcat ? FeatureProvenance::kPieConcat
                                                : FeatureProvenance::kPieFused;
  for (const auto& r : d.manifest.records) {
    if (r.split != want) continue;
    const TrainItem item = make_item(d, r, config, posebox_dir);
    const auto v = extract_pie(params, config, item.img, item.pb, item.conf, layer);
    if (feats.n == 0) feats.dim = static_cast<std::uint32_t>(v.size());
    feats.rows.insert(feats.rows.end(), v.begin(), v.end());
    ++feats.n;
  }
  if (feats.n == 0) throw ValidationError("no records in split '" + split + "'");
  l2_normalize_rows(feats);
  write_features(feats, out_path);
  std::cout << "wrote " << feats.n << " x " << feats.dim << " features to "
            << out_path << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  static const AblationArm arms[] = {
      AblationArm::kFull,        AblationArm::kNoPosebox,
      AblationArm::kNoImage,     AblationArm::kNoConfidence,
      AblationArm::kNoAuxLosses, AblationArm::kBaseline1,
      AblationArm::kBaseline2};
  bool ok = true;
  for (AblationArm arm : arms) {
    const NetConfig config =
        ablation_config(arm, NetConfig::gradcheck_tiny());
    const double err = gradient_check(config, seed);
    const bool pass = err <= 1e-4;
    ok = ok && pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  " << ablation_name(arm)
              << "  max_rel_err=" << err << "\n";
  }
  return ok ? 0 : 1;
}

int cmd_kissme_fit(const std::string& features_path,
                   const std::string& manifest_path, double reg,
                   std::uint64_t seed, const std::string& out_path) {
  const FeatureMatrix feats = read_features(features_path);
  const DatasetManifest manifest = parse_manifest(manifest_path);
  const auto train_idx = manifest.split_indices(Split::kTrain);
  if (train_idx.size() != feats.n)
    throw ValidationError("feature count " + std::to_string(feats.n) +
                          " does not match train split size " +
                          std::to_string(train_idx.size()));
  const PairSet pairs = sample_pairs(manifest, train_idx, seed);
  const MetricModel model = kissme_fit(feats, pairs, reg);
  write_metric(model, out_path);
  std::cout << "wrote " << feats.dim << "x" << feats.dim << " metric to "
            << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& query_path, const std::string& gallery_path,
             const std::string& manifest_path, const std::string& metric_spec,
             const std::string& cmc_out, const std::string& report_out) {
  const FeatureMatrix query = read_features(query_path);
  const FeatureMatrix gallery = read_features(gallery_path);
  const DatasetManifest manifest = parse_manifest(manifest_path);

  MetricModel model = MetricModel::euclidean();
  if (metric_spec != "euclid") {
    if (!metric_spec.starts_with("kissme:"))
      throw ValidationError("metric must be 'euclid' or 'kissme:PATH'");
    model = read_metric(metric_spec.substr(7));
  }

  std::vector<SampleRecord> query_records, gallery_records;
  for (const auto& r : manifest.records) {
    if (r.split == Split::kQuery) query_records.push_back(r);
    if (r.split == Split::kGallery) gallery_records.push_back(r);
  }
  const EvalReport report =
      evaluate(query, query_records, gallery, gallery_records, model);
  write_cmc_csv(report.cmc, cmc_out);
  write_report_csv(report, report_out);
  std::cout << "rank-1 " << (report.cmc.values.empty() ? 0.0 : report.cmc.values[0])
            << "  mAP " << report.mean_ap << "  skipped "
            << report.skipped_queries << "\n";
  return 0;
}

int cmd_run(const std::string& data_dir, const std::string& experiment,
            int box_type, const std::string& metric, int epochs, double lr0,
            std::uint64_t seed, const std::string& out_dir) {
  PipelineOptions opt;
  if (experiment == "baseline1")
    opt.experiment = AblationArm::kBaseline1;
  else if (experiment == "baseline2")
    opt.experiment = AblationArm::kBaseline2;
  else if (experiment == "pie")
    opt.experiment = AblationArm::kFull;
  else
    throw ValidationError("experiment must be baseline1, baseline2 or pie");
  opt.box_type = box_type;
  opt.metric = metric == "kissme" ? MetricKind::kKissme : MetricKind::kEuclidean;
  opt.epochs = epochs;
  opt.lr0 = lr0;
  opt.seed = seed;

  const DataBundle bundle = load_bundle(data_dir);
  const PipelineResult result = run_pipeline(bundle, opt);

  fs::create_directories(out_dir);
  const std::string label = experiment + "_seed" + std::to_string(seed);
  write_features(result.query_feats,
                 (fs::path(out_dir) / (label + ".query.pief")).string());
  write_features(result.gallery_feats,
                 (fs::path(out_dir) / (label + ".gallery.pief")).string());
  write_cmc_csv(result.report.cmc,
                (fs::path(out_dir) / (label + ".cmc.csv")).string());
  write_report_csv(result.report,
                   (fs::path(out_dir) / (label + ".report.csv")).string());
  std::cout << label << ": rank-1 "
            << (result.report.cmc.values.empty() ? 0.0
                                                 : result.report.cmc.values[0])
            << "  mAP " << result.report.mean_ap << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pose-aligned person re-identification toolkit"};
  app.require_subcommand(1);

  // synth
  SynthConfig synth_config;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark");
  synth->add_option("--ids", synth_config.n_ids, "number of identities");
  synth->add_option("--per-id", synth_config.images_per_id, "images per identity");
  synth->add_option("--cameras", synth_config.n_cameras, "number of cameras");
  synth->add_option("--pose-jitter", synth_config.pose_jitter_deg,
                    "limb angle jitter (degrees)");
  synth->add_option("--v-misalign", synth_config.v_misalign_px,
                    "max vertical offset (px)");
  synth->add_option("--conf-noise", synth_config.conf_noise,
                    "per-joint corruption probability");
  synth->add_option("--seed", synth_config.seed, "rng seed");
  synth->add_option("--out", synth_out, "output directory")->required();

  // posebox
  std::string pb_manifest, pb_keypoints, pb_out;
  int pb_type = 2;
  std::uint64_t pb_seed = 0;
  auto* posebox = app.add_subcommand("posebox", "build PoseBox images");
  posebox->add_option("--manifest", pb_manifest)->required();
  posebox->add_option("--keypoints", pb_keypoints)->required();
  posebox->add_option("--type", pb_type, "PoseBox type 1|2|3")
      ->check(CLI::Range(1, 3));
  posebox->add_option("--out", pb_out)->required();
  posebox->add_option("--seed", pb_seed);

  // train
  std::string tr_manifest, tr_pb_dir, tr_keypoints, tr_config, tr_out;
  std::uint64_t tr_seed = 0;
  int tr_epochs = 12;
  double tr_lr0 = 0.05;
  auto* train_cmd = app.add_subcommand("train", "train the fusion network");
  train_cmd->add_option("--manifest", tr_manifest)->required();
  train_cmd->add_option("--posebox-dir", tr_pb_dir);
  train_cmd->add_option("--keypoints", tr_keypoints)->required();
  train_cmd->add_option("--config", tr_config, "key=value net config file");
  train_cmd->add_option("--seed", tr_seed);
  train_cmd->add_option("--epochs", tr_epochs);
  train_cmd->add_option("--lr0", tr_lr0, "initial learning rate");
  train_cmd->add_option("--out", tr_out)->required();

  // extract
  std::string ex_params, ex_manifest, ex_pb_dir, ex_keypoints, ex_out;
  std::string ex_split = "gallery", ex_layer = "concat";
  auto* extract_cmd = app.add_subcommand("extract", "extract PIE features");
  extract_cmd->add_option("--params", ex_params)->required();
  extract_cmd->add_option("--manifest", ex_manifest)->required();
  extract_cmd->add_option("--posebox-dir", ex_pb_dir);
  extract_cmd->add_option("--keypoints", ex_keypoints)->required();
  extract_cmd->add_option("--split", ex_split, "train|query|gallery");
  extract_cmd->add_option("--layer", ex_layer, "concat|fused")
      ->check(CLI::IsMember({"concat", "fused"}));
  extract_cmd->add_option("--out", ex_out)->required();

  // gradcheck
  std::uint64_t gc_seed = 0;
  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference gradient check");
  gradcheck_cmd->add_option("--seed", gc_seed);

  // kissme-fit
  std::string kf_features, kf_manifest, kf_out;
  double kf_reg = -1.0;
  std::uint64_t kf_seed = 0;
  auto* kissme_cmd = app.add_subcommand("kissme-fit", "fit a KISSME metric");
  kissme_cmd->add_option("--features", kf_features, "train-split features")
      ->required();
  kissme_cmd->add_option("--manifest", kf_manifest)->required();
  kissme_cmd->add_option("--reg", kf_reg, "ridge weight (negative = default)");
  kissme_cmd->add_option("--seed", kf_seed);
  kissme_cmd->add_option("--out", kf_out)->required();

  // eval
  std::string ev_query, ev_gallery, ev_manifest, ev_metric = "euclid";
  std::string ev_cmc = "cmc.csv", ev_report = "report.csv";
  auto* eval_cmd = app.add_subcommand("eval", "evaluate retrieval");
  eval_cmd->add_option("--query-feats", ev_query)->required();
  eval_cmd->add_option("--gallery-feats", ev_gallery)->required();
  eval_cmd->add_option("--manifest", ev_manifest)->required();
  eval_cmd->add_option("--metric", ev_metric, "euclid or kissme:PATH");
  eval_cmd->add_option("--cmc-out", ev_cmc);
  eval_cmd->add_option("--report-out", ev_report);

  // run
  std::string run_data, run_experiment = "pie", run_metric = "euclid", run_out;
  int run_box_type = 2, run_epochs = 12;
  double run_lr0 = 0.05;
  std::uint64_t run_seed = 0;
  auto* run_cmd = app.add_subcommand("run", "end-to-end pipeline");
  run_cmd->add_option("--data", run_data, "dataset directory")->required();
  run_cmd->add_option("--experiment", run_experiment, "baseline1|baseline2|pie")
      ->check(CLI::IsMember({"baseline1", "baseline2", "pie"}));
  run_cmd->add_option("--box-type", run_box_type)->check(CLI::Range(1, 3));
  run_cmd->add_option("--metric", run_metric)
      ->check(CLI::IsMember({"euclid", "kissme"}));
  run_cmd->add_option("--epochs", run_epochs);
  run_cmd->add_option("--lr0", run_lr0);
  run_cmd->add_option("--seed", run_seed);
  run_cmd->add_option("--out", run_out)->required();

  // report
  std::string rep_in, rep_out = "report.csv";
  auto* report_cmd = app.add_subcommand("report", "combine run outputs");
  report_cmd->add_option("--in", rep_in, "directory of run outputs")->required();
  report_cmd->add_option("--out", rep_out, "summary CSV (SVG written beside it)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(synth_config, synth_out);
    if (posebox->parsed())
      return cmd_posebox(pb_manifest, pb_keypoints, pb_type, pb_out, pb_seed);
    if (train_cmd->parsed())
      return cmd_train(tr_manifest, tr_pb_dir, tr_keypoints, tr_config, tr_seed,
                       tr_epochs, tr_lr0, tr_out);
    if (extract_cmd->parsed())
      return cmd_extract(ex_params, ex_manifest, ex_pb_dir, ex_keypoints,
                         ex_split, ex_layer, ex_out);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(gc_seed);
    if (kissme_cmd->parsed())
      return cmd_kissme_fit(kf_features, kf_manifest, kf_reg, kf_seed, kf_out);
    if (eval_cmd->parsed())
      return cmd_eval(ev_query, ev_gallery, ev_manifest, ev_metric, ev_cmc,
                      ev_report);
    if (run_cmd->parsed())
      return cmd_run(run_data, run_experiment, run_box_type, run_metric,
                     run_epochs, run_lr0, run_seed, run_out);
    if (report_cmd->parsed()) {
      emit_report_from_dir(rep_in, rep_out);
      std::cout << "wrote " << rep_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
