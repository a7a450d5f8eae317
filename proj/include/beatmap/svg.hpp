#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "beatmap/beats.hpp"
#include "beatmap/clusters.hpp"
#include "beatmap/matrix.hpp"

namespace beatmap::svg {

/// Scatter plot of an N x 2 embedding. `labels` indexes `class_names`; pass
/// an empty span for a single-color plot. A legend is drawn when there are
/// at most 12 classes.
void write_scatter(const std::filesystem::path& path, const Matrix& y, std::span<const int> labels,
                   const std::vector<std::string>& class_names, const std::string& title);

/// One panel per cluster: representative waveforms, mean, and a one
/// standard deviation band.
void write_cluster_panels(const std::filesystem::path& path, const beats::BeatMatrix& beats,
                          const clusters::ClusterReport& report, const std::string& title);

} // namespace beatmap::svg
