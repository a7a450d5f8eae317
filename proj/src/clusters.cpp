#include "beatmap/clusters.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "beatmap/csv.hpp"
#include "beatmap/rng.hpp"

namespace beatmap::clusters {

namespace {

std::size_t to_cell(double v, double lo, double hi, std::size_t resolution) {
    const double t = (v - lo) / (hi - lo) * static_cast<double>(resolution);
    if (!(t > 0.0)) {
        return 0;
    }
    return std::min(resolution - 1, static_cast<std::size_t>(t));
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
    while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    return x;
}

} // namespace

std::size_t OccupancyGrid::occupied_count() const noexcept {
    return static_cast<std::size_t>(std::count(occupied.begin(), occupied.end(), std::uint8_t{1}));
}

OccupancyGrid rasterize(const Matrix& y, std::size_t resolution, int dilation_radius) {
    if (resolution < 16) {
        throw std::invalid_argument("rasterize: resolution must be at least 16");
    }
    if (dilation_radius < 0) {
        throw std::invalid_argument("rasterize: dilation radius must be non-negative");
    }
    if (y.cols() != 2 || y.rows() == 0) {
        throw std::invalid_argument("rasterize: need a non-empty N x 2 embedding");
    }
    for (double v : y.values()) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("rasterize: non-finite coordinate");
        }
    }
    OccupancyGrid g;
    g.resolution = resolution;
    g.occupied.assign(resolution * resolution, 0);
    g.point_cell.resize(y.rows());

    double lo[2] = {y(0, 0), y(0, 1)};
    double hi[2] = {y(0, 0), y(0, 1)};
    for (std::size_t i = 1; i < y.rows(); ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
            lo[c] = std::min(lo[c], y(i, c));
            hi[c] = std::max(hi[c], y(i, c));
        }
    }
    double range[2] = {hi[0] - lo[0], hi[1] - lo[1]};
    if (range[0] == 0.0 && range[1] == 0.0) {
        g.degenerate = true;
        g.min0 = g.max0 = lo[0];
        g.min1 = g.max1 = lo[1];
        g.occupied[0] = 1;
        std::fill(g.point_cell.begin(), g.point_cell.end(), 0);
        return g;
    }
    for (std::size_t c = 0; c < 2; ++c) {
        if (range[c] == 0.0) {
            range[c] = range[1 - c];
        }
    }
    g.min0 = lo[0] - kMargin * range[0];
    g.max0 = hi[0] + kMargin * range[0];
    g.min1 = lo[1] - kMargin * range[1];
    g.max1 = hi[1] + kMargin * range[1];
    if (hi[0] == lo[0]) {
        g.min0 = lo[0] - 0.5 * range[0];
        g.max0 = lo[0] + 0.5 * range[0];
    }
    if (hi[1] == lo[1]) {
        g.min1 = lo[1] - 0.5 * range[1];
        g.max1 = lo[1] + 0.5 * range[1];
    }

    std::vector<std::uint8_t> seeds(resolution * resolution, 0);
    for (std::size_t i = 0; i < y.rows(); ++i) {
        const std::size_t col = to_cell(y(i, 0), g.min0, g.max0, resolution);
        const std::size_t row = to_cell(y(i, 1), g.min1, g.max1, resolution);
        g.point_cell[i] = g.cell(row, col);
        seeds[g.point_cell[i]] = 1;
    }
    const auto r = static_cast<std::ptrdiff_t>(dilation_radius);
    const auto res = static_cast<std::ptrdiff_t>(resolution);
    for (std::ptrdiff_t row = 0; row < res; ++row) {
        for (std::ptrdiff_t col = 0; col < res; ++col) {
            if (!seeds[static_cast<std::size_t>(row * res + col)]) {
                continue;
            }
            for (std::ptrdiff_t dr = std::max<std::ptrdiff_t>(0, row - r); dr <= std::min(res - 1, row + r); ++dr) {
                for (std::ptrdiff_t dc = std::max<std::ptrdiff_t>(0, col - r); dc <= std::min(res - 1, col + r);
                     ++dc) {
                    g.occupied[static_cast<std::size_t>(dr * res + dc)] = 1;
                }
            }
        }
    }
    return g;
}

Components connected_components(const OccupancyGrid& grid, int connectivity) {
    if (connectivity != 4 && connectivity != 8) {
        throw std::invalid_argument("connected_components: connectivity must be 4 or 8");
    }
    const std::size_t res = grid.resolution;
    const std::size_t cells = res * res;
    std::vector<std::size_t> parent(cells);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto unite = [&](std::size_t a, std::size_t b) {
        a = find_root(parent, a);
        b = find_root(parent, b);
        if (a != b) {
            parent[std::max(a, b)] = std::min(a, b);
        }
    };
    for (std::size_t row = 0; row < res; ++row) {
        for (std::size_t col = 0; col < res; ++col) {
            const std::size_t c = grid.cell(row, col);
            if (!grid.occupied[c]) {
                continue;
            }
            if (col > 0 && grid.occupied[c - 1]) {
                unite(c, c - 1);
            }
            if (row > 0) {
                const std::size_t up = c - res;
                if (grid.occupied[up]) {
                    unite(c, up);
                }
                if (connectivity == 8) {
                    if (col > 0 && grid.occupied[up - 1]) {
                        unite(c, up - 1);
                    }
                    if (col + 1 < res && grid.occupied[up + 1]) {
                        unite(c, up + 1);
                    }
                }
            }
        }
    }

    // Roots are the smallest cell index of each component.
    std::vector<std::size_t> root_points(cells, 0);
    std::vector<std::size_t> roots;
    for (std::size_t c = 0; c < cells; ++c) {
        if (grid.occupied[c] && find_root(parent, c) == c) {
            roots.push_back(c);
        }
    }
    for (std::size_t cell : grid.point_cell) {
        ++root_points[find_root(parent, cell)];
    }
    std::stable_sort(roots.begin(), roots.end(),
                     [&](std::size_t a, std::size_t b) { return root_points[a] > root_points[b]; });
    std::vector<int> rank_of_root(cells, -1);
    Components out;
    for (std::size_t r = 0; r < roots.size(); ++r) {
        rank_of_root[roots[r]] = static_cast<int>(r);
        out.point_counts.push_back(root_points[roots[r]]);
    }
    out.cell_label.assign(cells, -1);
    for (std::size_t c = 0; c < cells; ++c) {
        if (grid.occupied[c]) {
            out.cell_label[c] = rank_of_root[find_root(parent, c)];
        }
    }
    return out;
}

ClusterReport assign_and_profile(const beats::BeatMatrix& beats, const OccupancyGrid& grid,
                                 const Components& components, std::uint64_t seed) {
    if (grid.point_cell.size() != beats.size()) {
        throw std::invalid_argument("assign_and_profile: grid and beats are not aligned");
    }
    ClusterReport report;
    if (grid.degenerate) {
        report.warnings.push_back("all embedding points coincide; single-cell grid");
    }
    report.clusters.resize(components.count());
    report.point_cluster.resize(beats.size());
    for (std::size_t i = 0; i < beats.size(); ++i) {
        const int label = components.cell_label[grid.point_cell[i]];
        const auto c = static_cast<std::size_t>(label);
        report.clusters[c].members.push_back(i);
        report.point_cluster[i] = c + 1;
    }
    const std::size_t width = beats.waveforms.cols();
    Rng rng(seed);
    for (std::size_t c = 0; c < report.clusters.size(); ++c) {
        auto& cl = report.clusters[c];
        cl.id = c + 1;
        cl.mean.assign(width, 0.0);
        cl.variance.assign(width, 0.0);
        for (std::size_t i : cl.members) {
            const auto w = beats.waveforms.row(i);
            for (std::size_t s = 0; s < width; ++s) {
                cl.mean[s] += w[s];
            }
            ++cl.symbol_histogram[beats.meta[i].symbol];
            ++cl.aami_histogram[static_cast<std::size_t>(beats.meta[i].aami)];
        }
        const double count = static_cast<double>(cl.members.size());
        for (double& m : cl.mean) {
            m /= count;
        }
        for (std::size_t i : cl.members) {
            const auto w = beats.waveforms.row(i);
            for (std::size_t s = 0; s < width; ++s) {
                const double d = w[s] - cl.mean[s];
                cl.variance[s] += d * d;
            }
        }
        for (double& v : cl.variance) {
            v /= count;
        }
        cl.representatives = cl.members;
        if (cl.representatives.size() > kRepresentatives) {
            rng.shuffle(std::span<std::size_t>(cl.representatives));
            cl.representatives.resize(kRepresentatives);
            std::sort(cl.representatives.begin(), cl.representatives.end());
        }
    }
    return report;
}

DominantLabel dominant_label(const Cluster& cluster) {
    if (cluster.members.empty()) {
        throw std::invalid_argument("dominant_label: empty cluster");
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < cluster.aami_histogram.size(); ++c) {
        if (cluster.aami_histogram[c] > cluster.aami_histogram[best]) {
            best = c;
        }
    }
    return {static_cast<beats::Aami>(best),
            static_cast<double>(cluster.aami_histogram[best]) / static_cast<double>(cluster.members.size())};
}

ClusterReport cluster_embedding(const beats::BeatMatrix& beats, const Matrix& y, const ClusterOptions& options) {
    const auto grid = rasterize(y, options.resolution, options.dilation_radius);
    const auto comps = connected_components(grid, options.connectivity);
    return assign_and_profile(beats, grid, comps, options.seed);
}

std::vector<std::filesystem::path> write_cluster_report(const std::filesystem::path& dir, const std::string& prefix,
                                                        const beats::BeatMatrix& beats, const ClusterReport& report) {
    const auto summary_path = dir / (prefix + "clusters.csv");
    const auto members_path = dir / (prefix + "members.csv");
    const auto profiles_path = dir / (prefix + "profiles.csv");
    auto open = [](const std::filesystem::path& p) {
        std::ofstream out(p);
        if (!out) {
            throw std::runtime_error("cannot write " + p.string());
        }
        return out;
    };

    auto summary = open(summary_path);
    csv::write_row(summary, {"cluster_id", "size", "dominant_aami", "purity", "members_file"});
    for (const auto& cl : report.clusters) {
        const auto dom = dominant_label(cl);
        csv::write_row(summary, {std::to_string(cl.id), std::to_string(cl.size()), std::string(beats::to_string(dom.aami)),
                                 csv::format_double(dom.purity), members_path.filename().string()});
    }

    auto members = open(members_path);
    csv::write_row(members, {"index", "cluster_id", "record_id", "r_sample"});
    for (std::size_t i = 0; i < report.point_cluster.size(); ++i) {
        csv::write_row(members, {std::to_string(i), std::to_string(report.point_cluster[i]), beats.meta[i].record_id,
                                 std::to_string(beats.meta[i].r_sample)});
    }

    auto profiles = open(profiles_path);
    std::vector<std::string> header = {"cluster_id", "stat"};
    for (std::size_t s = 0; s < beats.waveforms.cols(); ++s) {
        header.push_back("s" + std::to_string(s));
    }
    csv::write_row(profiles, header);
    for (const auto& cl : report.clusters) {
        for (const auto* stat : {"mean", "variance"}) {
            std::vector<std::string> row = {std::to_string(cl.id), stat};
            for (double v : (std::string_view(stat) == "mean" ? cl.mean : cl.variance)) {
                row.push_back(csv::format_double(v));
            }
            csv::write_row(profiles, row);
        }
    }
    return {summary_path, members_path, profiles_path};
}

} // namespace beatmap::clusters
