#include <fstream>
#include <set>
#include <sstream>

#include "pie/errors.hpp"
#include "pie/io.hpp"

namespace pie {

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kQuery:
      return "query";
    case Split::kGallery:
      return "gallery";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "query") return Split::kQuery;
  if (s == "gallery") return Split::kGallery;
  throw ParseError("unknown split value '" + s + "'");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

int parse_nonneg_int(const std::string& s, const char* what, int line_no) {
  std::size_t pos = 0;
  int value = 0;
  try {
    value = std::stoi(s, &pos);
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what +
                     " '" + s + "'");
  }
  if (pos != s.size() || value < 0)
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what +
                     " '" + s + "'");
  return value;
}

void validate_splits(const DatasetManifest& m) {
  std::set<int> train_ids, test_ids;
  for (const auto& r : m.records) {
    if (r.split == Split::kTrain)
      train_ids.insert(r.identity);
    else
      test_ids.insert(r.identity);
  }
  for (int id : train_ids)
    if (test_ids.count(id))
      throw ValidationError("identity " + std::to_string(id) +
                            " appears in both train and query/gallery splits");

  // Every query identity needs a cross-camera gallery hit somewhere.
  for (const auto& q : m.records) {
    if (q.split != Split::kQuery) continue;
    bool found = false;
    for (const auto& g : m.records) {
      if (g.split == Split::kGallery && g.identity == q.identity &&
          g.camera != q.camera) {
        found = true;
        break;
      }
    }
    if (!found)
      throw ValidationError(
          "query identity " + std::to_string(q.identity) +
          " has no gallery image under a different camera");
  }
}

}  // namespace

DatasetManifest parse_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");

  std::string line;
  if (!std::getline(in, line))
    throw ParseError("manifest '" + path + "' is empty (header required)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "image_path,identity,camera,split")
    throw ParseError("manifest header mismatch, got '" + line + "'");

  DatasetManifest m;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4)
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                       std::to_string(fields.size()));
    SampleRecord r;
    r.image_path = fields[0];
    r.identity = parse_nonneg_int(fields[1], "identity", line_no);
    r.camera = parse_nonneg_int(fields[2], "camera", line_no);
    try {
      r.split = split_from_string(fields[3]);
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    m.id_index[r.identity].push_back(m.records.size());
    m.records.push_back(std::move(r));
  }

  validate_splits(m);
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  out << "image_path,identity,camera,split\n";
  for (const auto& r : manifest.records)
    out << r.image_path << ',' << r.identity << ',' << r.camera << ','
        << split_name(r.split) << '\n';
}

}  // namespace pie
