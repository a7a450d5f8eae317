#pragma once

// Label-free clusters of a 2-D embedding: rasterize, dilate, label connected
// occupied cells, then profile the beats falling in each component.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "beatmap/beats.hpp"
#include "beatmap/matrix.hpp"

namespace beatmap::clusters {

inline constexpr std::size_t kDefaultResolution = 128;
inline constexpr int kDefaultDilation = 1;
inline constexpr double kMargin = 0.02;
inline constexpr std::size_t kRepresentatives = 10;

/// Cells are stored row-major with the row taken from y1 and the column
/// from y0.
struct OccupancyGrid {
    std::size_t resolution = 0;
    double min0 = 0.0, max0 = 0.0, min1 = 0.0, max1 = 0.0;
    std::vector<std::uint8_t> occupied;
    std::vector<std::size_t> point_cell;
    bool degenerate = false;

    std::size_t cell(std::size_t row, std::size_t col) const noexcept { return row * resolution + col; }
    std::size_t occupied_count() const noexcept;
};

OccupancyGrid rasterize(const Matrix& y, std::size_t resolution = kDefaultResolution,
                        int dilation_radius = kDefaultDilation);

struct Components {
    /// Component rank per cell (0 = largest), -1 for empty cells.
    std::vector<int> cell_label;
    std::vector<std::size_t> point_counts;

    std::size_t count() const noexcept { return point_counts.size(); }
};

/// Labels occupied cells with 4- or 8-connectivity and ranks components by
/// the number of points they hold, ties by their first cell in row-major
/// order.
Components connected_components(const OccupancyGrid& grid, int connectivity = 8);

struct Cluster {
    std::size_t id = 0; // 1-based rank
    std::vector<std::size_t> members;
    std::vector<double> mean;
    std::vector<double> variance; // population variance per sample
    std::map<char, std::size_t> symbol_histogram;
    std::array<std::size_t, 6> aami_histogram{};
    std::vector<std::size_t> representatives;

    std::size_t size() const noexcept { return members.size(); }
};

struct ClusterReport {
    std::vector<Cluster> clusters;
    std::vector<std::size_t> point_cluster; // cluster id per beat
    std::vector<std::string> warnings;
};

ClusterReport assign_and_profile(const beats::BeatMatrix& beats, const OccupancyGrid& grid,
                                 const Components& components, std::uint64_t seed);

struct DominantLabel {
    beats::Aami aami = beats::Aami::N;
    double purity = 0.0;
};

/// Modal AAMI class, ties resolved in N, S, V, F, Q, O order.
DominantLabel dominant_label(const Cluster& cluster);

struct ClusterOptions {
    std::size_t resolution = kDefaultResolution;
    int dilation_radius = kDefaultDilation;
    int connectivity = 8;
    std::uint64_t seed = 0;
};

ClusterReport cluster_embedding(const beats::BeatMatrix& beats, const Matrix& y, const ClusterOptions& options = {});

/// Writes `<prefix>clusters.csv` (cluster_id, size, dominant_aami, purity,
/// members_file), `<prefix>members.csv` (index, cluster_id, record_id,
/// r_sample) and `<prefix>profiles.csv` (cluster_id, stat, s0..s255).
/// Returns the written paths.
std::vector<std::filesystem::path> write_cluster_report(const std::filesystem::path& dir, const std::string& prefix,
                                                        const beats::BeatMatrix& beats, const ClusterReport& report);

} // namespace beatmap::clusters
