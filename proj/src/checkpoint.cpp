#include "refsteer/checkpoint.hpp"

#include <fstream>
#include <map>

#include "refsteer/core.hpp"

namespace refsteer {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      data.push_back(m(r, c));
    }
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw Error("matrix entry has inconsistent shape");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = data[static_cast<std::size_t>(r * cols + c)].get<double>();
    }
  }
  return m;
}

nlohmann::json params_to_json(const nn::ParamList& params) {
  nlohmann::json out = nlohmann::json::object();
  for (const nn::Param* p : params) {
    if (out.contains(p->name)) {
      throw Error("duplicate parameter name " + p->name);
    }
    out[p->name] = matrix_to_json(p->value);
  }
  return out;
}

void params_from_json(const nlohmann::json& j, const nn::ParamList& params) {
  for (nn::Param* p : params) {
    if (!j.contains(p->name)) {
      throw Error("checkpoint is missing parameter " + p->name);
    }
    Eigen::MatrixXd m = matrix_from_json(j.at(p->name));
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw Error("checkpoint parameter " + p->name + " has shape " + std::to_string(m.rows()) + "x" +
                  std::to_string(m.cols()) + ", expected " + std::to_string(p->value.rows()) + "x" +
                  std::to_string(p->value.cols()));
    }
    p->value = std::move(m);
    p->grad.setZero(p->value.rows(), p->value.cols());
  }
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open " + path);
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("malformed JSON in " + path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write " + path);
  }
  out << j.dump();
  if (!out) {
    throw Error("write failed for " + path);
  }
}

}  // namespace refsteer
