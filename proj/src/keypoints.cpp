#include <cmath>
#include <fstream>

#include <json.hpp>

#include "pie/errors.hpp"
#include "pie/io.hpp"

namespace pie {

namespace {

JointSet joints_from_json(const nlohmann::json& arr, int line_no) {
  if (!arr.is_array() || arr.size() != kNumJoints)
    throw ParseError("line " + std::to_string(line_no) + ": expected " +
                     std::to_string(kNumJoints) + " joint triples, got " +
                     std::to_string(arr.is_array() ? arr.size() : 0));
  JointSet js;
  for (int i = 0; i < kNumJoints; ++i) {
    const auto& t = arr[i];
    if (!t.is_array() || t.size() != 3)
      throw ParseError("line " + std::to_string(line_no) + ": joint " +
                       std::to_string(i) + " is not an [x,y,c] triple");
    Joint j;
    j.x = t[0].get<double>();
    j.y = t[1].get<double>();
    j.c = t[2].get<double>();
    if (!std::isfinite(j.x) || !std::isfinite(j.y))
      throw ValidationError("line " + std::to_string(line_no) + ": joint " +
                            std::to_string(i) + " has non-finite coordinates");
    if (!(j.c >= 0.0 && j.c <= 1.0))
      throw ValidationError("line " + std::to_string(line_no) + ": joint " +
                            std::to_string(i) + " confidence " +
                            std::to_string(j.c) + " outside [0,1]");
    js.joints[i] = j;
  }
  return js;
}

}  // namespace

std::map<std::string, JointSet> parse_keypoints(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open keypoints '" + path + "'");

  std::map<std::string, JointSet> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.contains("image") || !obj.contains("joints"))
      throw ParseError("line " + std::to_string(line_no) +
                       ": missing 'image' or 'joints'");
    out[obj["image"].get<std::string>()] =
        joints_from_json(obj["joints"], line_no);
  }
  return out;
}

void write_keypoints(const std::map<std::string, JointSet>& keypoints,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write keypoints '" + path + "'");
  for (const auto& [image, js] : keypoints) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& j : js.joints) arr.push_back({j.x, j.y, j.c});
    nlohmann::json obj;
    obj["image"] = image;
    obj["joints"] = arr;
    out << obj.dump() << '\n';
  }
}

}  // namespace pie
