#pragma once

#include <string>
#include <vector>

#include "choplab/ablation.hpp"

namespace choplab {

// CSV with row/column labels in the header; undefined entries written
// as "undef". Doubles use %.17g so reruns are byte-identical.
void write_matrix_csv(const std::string& path, const AblationMatrix& m);
AblationMatrix read_matrix_csv(const std::string& path);

// JSON sidecar with metadata, optionally the echelon statistic.
void write_matrix_sidecar(const std::string& path, const AblationMatrix& m,
                          const EchelonStat* echelon = nullptr,
                          const std::vector<double>* type_depths = nullptr);

void write_threshold_csv(const std::string& path, const std::vector<ThresholdRow>& rows);
void write_threshold_sidecar(const std::string& path,
                             const std::vector<ThresholdRow>& rows,
                             const std::string& config_hash, std::uint64_t seed);

// Plain-text heatmap with unicode shade blocks, scaled by |value|.
std::string render_heatmap(const AblationMatrix& m);

std::string format_g17(double v);

}  // namespace choplab
