#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pie/eval.hpp"
#include "pie/metric.hpp"
#include "pie/report.hpp"
#include "pie/rng.hpp"

using namespace pie;

namespace {

SampleRecord rec(int id, int cam, Split split = Split::kGallery) {
  SampleRecord r;
  r.identity = id;
  r.camera = cam;
  r.split = split;
  return r;
}

FeatureMatrix mat(std::vector<std::vector<float>> rows) {
  FeatureMatrix f;
  f.n = std::uint32_t(rows.size());
  f.dim = rows.empty() ? 0 : std::uint32_t(rows[0].size());
  for (const auto& r : rows) f.rows.insert(f.rows.end(), r.begin(), r.end());
  return f;
}

RankList list_with_relevance(std::vector<bool> rel) {
  RankList rl;
  rl.relevant = std::move(rel);
  rl.gallery_order.resize(rl.relevant.size());
  std::iota(rl.gallery_order.begin(), rl.gallery_order.end(), 0);
  return rl;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("protocol excludes same identity and camera only") {
  const std::vector<SampleRecord> gallery = {rec(5, 1), rec(5, 2), rec(6, 1)};
  const auto eligible = apply_protocol(gallery, rec(5, 1, Split::kQuery));
  CHECK(eligible == std::vector<std::size_t>{1, 2});
}

TEST_CASE("query with no cross-camera ground truth is skipped") {
  const std::vector<SampleRecord> gallery = {rec(5, 1), rec(6, 2)};
  const auto qf = mat({{1.0f, 0.0f}});
  const auto gf = mat({{1.0f, 0.0f}, {0.0f, 1.0f}});
  const EvalReport r = evaluate(qf, {rec(5, 1, Split::kQuery)}, gf, gallery,
                                MetricModel::euclidean());
  CHECK(r.skipped_queries == 1);
  CHECK(r.per_query_ap.empty());
  CHECK(r.mean_ap == doctest::Approx(0.0));
}

TEST_CASE("rank_gallery ranks the query's own vector first") {
  const auto gf = mat({{0.0f, 1.0f}, {1.0f, 0.0f}});
  const float q[] = {1.0f, 0.0f};
  const RankList rl = rank_gallery(q, gf, MetricModel::euclidean(), {0, 1},
                                   {false, true});
  CHECK(rl.gallery_order == std::vector<std::size_t>{1, 0});
}

TEST_CASE("ties break by gallery index") {
  const auto gf = mat({{1.0f, 0.0f}, {1.0f, 0.0f}, {1.0f, 0.0f}});
  const float q[] = {0.0f, 1.0f};
  const RankList rl = rank_gallery(q, gf, MetricModel::euclidean(), {0, 1, 2},
                                   {true, true, true});
  CHECK(rl.gallery_order == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("rank_gallery matches a brute-force sort") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::vector<float>> rows;
    for (int i = 0; i < 5; ++i)
      rows.push_back({float(rng.normal()), float(rng.normal()),
                      float(rng.normal())});
    const auto gf = mat(rows);
    const float q[] = {float(rng.normal()), float(rng.normal()),
                       float(rng.normal())};
    std::vector<std::size_t> eligible = {0, 1, 2, 3, 4};
    const RankList rl = rank_gallery(q, gf, MetricModel::euclidean(), eligible,
                                     std::vector<bool>(5, true));
    std::vector<std::size_t> want = eligible;
    std::sort(want.begin(), want.end(), [&](std::size_t a, std::size_t b) {
      double da = 0.0, db = 0.0;
      for (int k = 0; k < 3; ++k) {
        da += (q[k] - gf.row(a)[k]) * (q[k] - gf.row(a)[k]);
        db += (q[k] - gf.row(b)[k]) * (q[k] - gf.row(b)[k]);
      }
      return da != db ? da < db : a < b;
    });
    CHECK(rl.gallery_order == want);
  }
}

TEST_CASE("average precision closed forms") {
  CHECK(average_precision(list_with_relevance({true, true, false, false, false})) ==
        doctest::Approx(1.0));
  CHECK(average_precision(list_with_relevance({false, true, false, true})) ==
        doctest::Approx(0.5));
  for (int r = 1; r <= 6; ++r) {
    std::vector<bool> rel(6, false);
    rel[r - 1] = true;
    CHECK(average_precision(list_with_relevance(rel)) ==
          doctest::Approx(1.0 / r));
  }
}

TEST_CASE("cmc closed forms") {
  const auto a = cmc_curve({list_with_relevance({false, false, true})}, 5);
  CHECK(a.values == std::vector<double>{0, 0, 1, 1, 1});

  const auto b = cmc_curve({list_with_relevance({true, false}),
                            list_with_relevance({false, true})},
                           4);
  CHECK(b.values == std::vector<double>{0.5, 1.0, 1.0, 1.0});

  const auto c = cmc_curve({list_with_relevance({true}),
                            list_with_relevance({true})},
                           3);
  CHECK(c.values == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("cmc is non-decreasing and bounded") {
  Rng rng(5);
  std::vector<RankList> lists;
  for (int i = 0; i < 40; ++i) {
    std::vector<bool> rel(10, false);
    rel[std::size_t(rng.uniform_int(0, 9))] = true;
    if (rng.uniform() < 0.3) rel[std::size_t(rng.uniform_int(0, 9))] = true;
    lists.push_back(list_with_relevance(rel));
  }
  const auto cmc = cmc_curve(lists, 10);
  for (std::size_t n = 0; n < cmc.values.size(); ++n) {
    CHECK(cmc.values[n] >= 0.0);
    CHECK(cmc.values[n] <= 1.0);
    if (n > 0) CHECK(cmc.values[n] >= cmc.values[n - 1]);
  }
  CHECK(cmc.values.back() == doctest::Approx(1.0));  // every list has a hit
}

TEST_CASE("uniform feature scaling leaves the report unchanged") {
  Rng rng(6);
  std::vector<std::vector<float>> qrows, grows;
  std::vector<SampleRecord> qr, gr;
  for (int i = 0; i < 4; ++i) {
    qrows.push_back({float(rng.normal()), float(rng.normal())});
    qr.push_back(rec(i, 0, Split::kQuery));
  }
  for (int i = 0; i < 12; ++i) {
    grows.push_back({float(rng.normal()), float(rng.normal())});
    gr.push_back(rec(i % 4, 1));
  }
  const auto base = evaluate(mat(qrows), qr, mat(grows), gr,
                             MetricModel::euclidean());
  for (auto& row : qrows)
    for (auto& v : row) v *= 3.0f;
  for (auto& row : grows)
    for (auto& v : row) v *= 3.0f;
  const auto scaled = evaluate(mat(qrows), qr, mat(grows), gr,
                               MetricModel::euclidean());
  CHECK(scaled.mean_ap == doctest::Approx(base.mean_ap).epsilon(1e-12));
  CHECK(scaled.cmc.values == base.cmc.values);
}

TEST_CASE("summary csv has one row per report") {
  EvalReport r;
  r.cmc.values.assign(20, 1.0);
  r.mean_ap = 0.5;
  std::vector<NamedReport> reports = {{"a", r}, {"b", r}, {"c", r}};
  const std::string path = "/tmp/pie_test_summary.csv";
  write_summary_csv(reports, path);
  const std::string text = slurp(path);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  CHECK(text.find("config") != std::string::npos);
  CHECK(text.find("\nb,") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("cmc svg is a well-formed closed document") {
  EvalReport r1, r2;
  r1.cmc.values = {0.2, 0.5, 0.8, 1.0};
  r2.cmc.values = {0.1, 0.4, 0.7, 0.9};
  const std::string path = "/tmp/pie_test_cmc.svg";
  write_cmc_svg({{"run_a", r1}, {"run_b", r2}}, path);
  const std::string text = slurp(path);
  CHECK(text.find("<svg") != std::string::npos);
  CHECK(text.rfind("</svg>") != std::string::npos);
  CHECK(text.find("polyline") != std::string::npos);
  // Every '<' has a matching '>' and no raw ampersands sneak in.
  CHECK(std::count(text.begin(), text.end(), '<') ==
        std::count(text.begin(), text.end(), '>'));
  CHECK(text.find("& ") == std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("report csv echoes mAP and skip count") {
  EvalReport r;
  r.mean_ap = 0.625;
  r.skipped_queries = 3;
  r.per_query_ap = {0.5, 0.75};
  r.cmc.values = {1.0};
  const std::string path = "/tmp/pie_test_report.csv";
  write_report_csv(r, path);
  const std::string text = slurp(path);
  CHECK(text.find("mAP,0.625") != std::string::npos);
  CHECK(text.find("skipped_queries,3") != std::string::npos);
  CHECK(text.find("ap_1,0.75") != std::string::npos);
  std::remove(path.c_str());
}
