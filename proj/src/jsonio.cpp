#include "malcom/jsonio.hpp"

#include "malcom/errors.hpp"

#include <fstream>
#include <sstream>

namespace malcom {

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

void save_json_file(const std::string& path, const Json& j, int indent) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(indent) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<Json> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw SchemaError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

void save_jsonl(const std::string& path, const std::vector<Json>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const Json& r : rows) out << r.dump() << '\n';
  if (!out) throw IoError("write failed: " + path);
}

Json mat_to_json(const nn::Mat& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

nn::Mat mat_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    throw SchemaError("matrix object requires rows/cols/data");
  const Eigen::Index r = j.at("rows").get<Eigen::Index>();
  const Eigen::Index c = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (r < 0 || c < 0 || static_cast<Eigen::Index>(data.size()) != r * c)
    throw SchemaError("matrix data length mismatch");
  nn::Mat m(r, c);
  std::size_t idx = 0;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index jj = 0; jj < c; ++jj) m(i, jj) = data.at(idx++).get<double>();
  return m;
}

Json param_to_json(const nn::Param& p) {
  Json j = mat_to_json(p.value);
  j["name"] = p.name;
  return j;
}

void param_from_json(nn::Param& p, const Json& j) {
  nn::Mat m = mat_from_json(j);
  if (m.rows() != p.value.rows() || m.cols() != p.value.cols())
    throw SchemaError("parameter " + p.name + ": stored shape " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + " does not match " +
                      std::to_string(p.value.rows()) + "x" + std::to_string(p.value.cols()));
  p.value = std::move(m);
}

Json artifact_envelope(const std::string& kind, int version) {
  return Json{{"format", "malcom/" + kind}, {"version", version}};
}

void check_envelope(const Json& j, const std::string& kind, int version) {
  if (!j.is_object()) throw SchemaError("artifact is not a JSON object");
  const std::string want = "malcom/" + kind;
  if (!j.contains("format") || j.at("format") != want)
    throw SchemaError("artifact format is not " + want);
  if (!j.contains("version") || !j.at("version").is_number_integer() ||
      j.at("version").get<int>() != version)
    throw SchemaError(want + ": unsupported version");
}

}  // namespace malcom
