#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mixorder/common.hpp"

namespace mixorder {

// n x r matrix of observations, r = 1 for univariate data.
struct Dataset {
  Eigen::MatrixXd obs;
  std::string name;

  int n() const { return static_cast<int>(obs.rows()); }
  int dim() const { return static_cast<int>(obs.cols()); }

  static Dataset from_matrix(Eigen::MatrixXd m, std::string label) {
    require(m.rows() >= 1, "Dataset: need at least one observation");
    require(m.cols() >= 1, "Dataset: need at least one coordinate");
    require(m.allFinite(), "Dataset '" + label + "': non-finite entry");
    return Dataset{std::move(m), std::move(label)};
  }

  static Dataset from_vector(const std::vector<double>& v, std::string label) {
    Eigen::MatrixXd m(static_cast<long>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<long>(i), 0) = v[i];
    return from_matrix(std::move(m), std::move(label));
  }

  std::vector<double> column(int j) const {
    std::vector<double> v(obs.rows());
    for (long i = 0; i < obs.rows(); ++i) v[static_cast<std::size_t>(i)] = obs(i, j);
    return v;
  }
};

// Headerless CSV, one row per observation, comma-separated coordinates.
inline Dataset load_csv(const std::string& path, const std::string& label = "") {
  std::ifstream in(path);
  if (!in) throw invalid_input("cannot open dataset file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t pos = 0;
      double v;
      try {
        v = std::stod(cell, &pos);
      } catch (const std::exception&) {
        throw invalid_input(path + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
      while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
      if (pos != cell.size())
        throw invalid_input(path + ":" + std::to_string(lineno) + ": trailing junk in '" + cell + "'");
      if (!std::isfinite(v))
        throw invalid_input(path + ":" + std::to_string(lineno) + ": non-finite value");
      row.push_back(v);
    }
    if (row.empty()) throw invalid_input(path + ":" + std::to_string(lineno) + ": empty row");
    if (!rows.empty() && row.size() != rows.front().size())
      throw invalid_input(path + ":" + std::to_string(lineno) + ": inconsistent column count");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw invalid_input(path + ": no observations");
  Eigen::MatrixXd m(static_cast<long>(rows.size()), static_cast<long>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<long>(i), static_cast<long>(j)) = rows[i][j];
  std::string lbl = label;
  if (lbl.empty()) {
    const std::size_t slash = path.find_last_of("/\\");
    lbl = slash == std::string::npos ? path : path.substr(slash + 1);
    const std::size_t dot = lbl.find_last_of('.');
    if (dot != std::string::npos) lbl = lbl.substr(0, dot);
  }
  return Dataset::from_matrix(std::move(m), lbl);
}

}  // namespace mixorder
