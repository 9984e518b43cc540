#include "choplab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace choplab {

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

void write_matrix_csv(const std::string& path, const AblationMatrix& m) {
  std::ofstream out = open_out(path);
  out << "type";
  for (const auto& c : m.col_labels) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < m.row_labels.size(); ++i) {
    out << m.row_labels[i];
    for (std::size_t j = 0; j < m.col_labels.size(); ++j) {
      const auto& v = m.values[i][j];
      out << ',' << (v ? format_g17(*v) : std::string("undef"));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

AblationMatrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  AblationMatrix m;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty csv: " + path);
  auto header = split_csv_line(line);
  m.col_labels.assign(header.begin() + 1, header.end());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != m.col_labels.size() + 1)
      throw std::runtime_error("ragged csv row in " + path);
    m.row_labels.push_back(fields[0]);
    std::vector<std::optional<double>> row;
    for (std::size_t j = 1; j < fields.size(); ++j) {
      if (fields[j] == "undef")
        row.push_back(std::nullopt);
      else
        row.push_back(std::stod(fields[j]));
    }
    m.values.push_back(std::move(row));
  }
  return m;
}

void write_matrix_sidecar(const std::string& path, const AblationMatrix& m,
                          const EchelonStat* echelon,
                          const std::vector<double>* type_depths) {
  nlohmann::json j;
  j["family"] = m.family;
  j["seed"] = m.seed;
  j["config_hash"] = m.config_hash;
  j["rows"] = m.row_labels;
  j["cols"] = m.col_labels;
  if (type_depths) j["type_depths"] = *type_depths;
  if (echelon) {
    nlohmann::json cent = nlohmann::json::array();
    for (const auto& c : echelon->centroids) {
      if (c)
        cent.push_back(*c);
      else
        cent.push_back(nullptr);
    }
    j["echelon"] = {{"centroids", cent}, {"spearman_rho", echelon->spearman_rho}};
  }
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_threshold_csv(const std::string& path, const std::vector<ThresholdRow>& rows) {
  std::ofstream out = open_out(path);
  out << "theta,overall_acc,ampt,hmpt,kept_fraction,all_chopped,"
         "random_overall_acc,random_kept_fraction\n";
  for (const auto& r : rows) {
    out << format_g17(r.theta) << ',' << format_g17(r.report.overall) << ','
        << format_g17(r.report.ampt) << ',' << format_g17(r.report.hmpt) << ','
        << format_g17(r.kept_fraction) << ',' << r.all_chopped << ','
        << format_g17(r.random_baseline.overall) << ','
        << format_g17(r.random_kept_fraction) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_threshold_sidecar(const std::string& path,
                             const std::vector<ThresholdRow>& rows,
                             const std::string& config_hash, std::uint64_t seed) {
  nlohmann::json j;
  j["family"] = "threshold";
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [mask, count] : r.plan_histogram)
      hist[std::to_string(mask)] = count;
    nlohmann::json per_type = nlohmann::json::object();
    for (const auto& [type, acc] : r.report.per_type_acc)
      per_type[std::to_string(type)] = acc;
    arr.push_back({{"theta", r.theta},
                   {"overall_acc", r.report.overall},
                   {"per_type_acc", per_type},
                   {"kept_fraction", r.kept_fraction},
                   {"all_chopped", r.all_chopped},
                   {"plan_histogram", hist},
                   {"random_overall_acc", r.random_baseline.overall},
                   {"random_kept_fraction", r.random_kept_fraction}});
  }
  j["rows"] = arr;
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string render_heatmap(const AblationMatrix& m) {
  // Shade blocks by |value| relative to the matrix max; undefined cells
  // render as '?'.
  static const char* kShades[] = {" ", "░", "▒", "▓", "█"};
  double max_abs = 0.0;
  for (const auto& row : m.values)
    for (const auto& v : row)
      if (v && std::abs(*v) > max_abs) max_abs = std::abs(*v);

  std::size_t label_w = 4;
  for (const auto& r : m.row_labels) label_w = std::max(label_w, r.size());

  std::ostringstream out;
  out << m.family << " (seed " << m.seed << ")\n";
  for (std::size_t i = 0; i < m.row_labels.size(); ++i) {
    out << m.row_labels[i];
    for (std::size_t p = m.row_labels[i].size(); p < label_w + 1; ++p) out << ' ';
    out << '|';
    for (const auto& v : m.values[i]) {
      if (!v) {
        out << '?';
      } else if (max_abs == 0.0) {
        out << kShades[0];
      } else {
        int level = static_cast<int>(std::abs(*v) / max_abs * 4.0 + 0.5);
        if (level > 4) level = 4;
        out << kShades[level];
      }
    }
    out << "|\n";
  }
  out << "scale: max |value| = " << format_g17(max_abs) << '\n';
  return out.str();
}

}  // namespace choplab
