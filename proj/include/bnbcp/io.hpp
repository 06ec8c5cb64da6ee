#pragma once

#include "bnbcp/defs.hpp"
#include "bnbcp/model.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace bnbcp {

/// Writes a matrix as CSV with header `factor_0,...,factor_{R-1}`; one row
/// per entity. Values carry 17 significant digits so reloads are lossless.
void write_factor_csv(const std::filesystem::path& path,
                      const matrixd& matrix);
matrixd read_factor_csv(const std::filesystem::path& path);

/// Single-column CSV with the given header.
void write_vector_csv(const std::filesystem::path& path,
                      const std::string& header, const vectord& values);
vectord read_vector_csv(const std::filesystem::path& path,
                        const std::string& header);

/// Model directory layout: mode_0.csv ... mode_{K-1}.csv, lambda.csv, p.csv.
void save_model(const std::filesystem::path& dir,
                const ModelState<double>& model);
ModelState<double> load_model(const std::filesystem::path& dir,
                              int num_modes);

} // namespace bnbcp
