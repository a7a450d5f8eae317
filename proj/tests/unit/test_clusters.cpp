#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "beatmap/clusters.hpp"
#include "beatmap/rng.hpp"
#include "beatmap/svg.hpp"
#include "doctest.h"

using namespace beatmap;
using namespace beatmap::clusters;
namespace fs = std::filesystem;

namespace {

beats::BeatMatrix make_beats(std::size_t n, std::size_t width = 4) {
    beats::BeatMatrix bm;
    bm.waveforms = Matrix(n, width);
    for (std::size_t i = 0; i < n; ++i) {
        bm.meta.push_back({"100", beats::Lead::MLII, static_cast<std::int64_t>(i), 'N', beats::Aami::N,
                           wfdb::Gender::male});
    }
    return bm;
}

Matrix blob(std::size_t n, double cx, double cy, double sd, Rng& rng) {
    Matrix y(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        y(i, 0) = cx + sd * rng.normal();
        y(i, 1) = cy + sd * rng.normal();
    }
    return y;
}

Matrix stack(const Matrix& a, const Matrix& b) {
    std::vector<double> v(a.values().begin(), a.values().end());
    v.insert(v.end(), b.values().begin(), b.values().end());
    return Matrix(a.rows() + b.rows(), 2, v);
}

// Partition of point indices induced by a cluster report, as a set of sets.
std::set<std::vector<std::size_t>> partition(const ClusterReport& r) {
    std::set<std::vector<std::size_t>> out;
    for (const auto& c : r.clusters) {
        out.insert(c.members);
    }
    return out;
}

} // namespace

TEST_CASE("rasterize single point and opposite corners") {
    Matrix one(1, 2, std::vector<double>{0.5, -0.5});
    const auto g = rasterize(one, 64, 1);
    CHECK(g.degenerate);
    CHECK(g.occupied_count() == 1);

    Matrix corners(2, 2, std::vector<double>{0, 0, 1, 1});
    const auto h = rasterize(corners, 64, 1);
    CHECK_FALSE(h.degenerate);
    CHECK(h.occupied_count() == 18);  // two 3x3 islands
    CHECK(connected_components(h).count() == 2);
    CHECK(h.point_cell[0] != h.point_cell[1]);
}

TEST_CASE("rasterize matches an independent binning") {
    Rng rng(2);
    const auto y = blob(100, 3.0, -1.0, 2.0, rng);
    const std::size_t res = 128;
    const auto g = rasterize(y, res, 1);

    double lo0 = 1e300, hi0 = -1e300, lo1 = 1e300, hi1 = -1e300;
    for (std::size_t i = 0; i < 100; ++i) {
        lo0 = std::min(lo0, y(i, 0));
        hi0 = std::max(hi0, y(i, 0));
        lo1 = std::min(lo1, y(i, 1));
        hi1 = std::max(hi1, y(i, 1));
    }
    const double m0 = 0.02 * (hi0 - lo0), m1 = 0.02 * (hi1 - lo1);
    std::set<std::pair<long, long>> cells;
    for (std::size_t i = 0; i < 100; ++i) {
        const auto col = static_cast<long>(std::floor((y(i, 0) - lo0 + m0) / (hi0 - lo0 + 2 * m0) * res));
        const auto row = static_cast<long>(std::floor((y(i, 1) - lo1 + m1) / (hi1 - lo1 + 2 * m1) * res));
        CHECK(g.point_cell[i] == static_cast<std::size_t>(row) * res + static_cast<std::size_t>(col));
        for (long dr = -1; dr <= 1; ++dr) {
            for (long dc = -1; dc <= 1; ++dc) {
                if (row + dr >= 0 && row + dr < 128 && col + dc >= 0 && col + dc < 128) {
                    cells.emplace(row + dr, col + dc);
                }
            }
        }
    }
    CHECK(g.occupied_count() == cells.size());
    for (auto [r, c] : cells) {
        CHECK(g.occupied[static_cast<std::size_t>(r) * res + static_cast<std::size_t>(c)] == 1);
    }
}

TEST_CASE("rasterize errors") {
    Matrix y(2, 2, std::vector<double>{0, 0, 1, NAN});
    CHECK_THROWS_AS(rasterize(y), std::invalid_argument);
    CHECK_THROWS_AS(rasterize(Matrix(2, 2), 8), std::invalid_argument);
    CHECK_THROWS_AS(rasterize(Matrix(0, 2)), std::invalid_argument);
}

TEST_CASE("connected components match a flood fill") {
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        OccupancyGrid g;
        g.resolution = 20;
        g.occupied.resize(400);
        for (auto& c : g.occupied) {
            c = rng.uniform() < 0.45 ? 1 : 0;
        }
        for (std::size_t c = 0; c < 400; ++c) {
            if (g.occupied[c]) {
                const auto copies = 1 + rng.index(3);
                for (std::uint64_t k = 0; k < copies; ++k) {
                    g.point_cell.push_back(c);
                }
            }
        }
        for (int conn : {4, 8}) {
            const auto comps = connected_components(g, conn);
            std::vector<int> flood(400, -1);
            std::vector<std::size_t> sizes;
            int next = 0;
            for (std::size_t start = 0; start < 400; ++start) {
                if (!g.occupied[start] || flood[start] >= 0) {
                    continue;
                }
                std::deque<std::size_t> queue = {start};
                flood[start] = next;
                while (!queue.empty()) {
                    const auto c = queue.front();
                    queue.pop_front();
                    const long r = static_cast<long>(c / 20), col = static_cast<long>(c % 20);
                    for (long dr = -1; dr <= 1; ++dr) {
                        for (long dc = -1; dc <= 1; ++dc) {
                            if ((dr == 0 && dc == 0) || (conn == 4 && dr != 0 && dc != 0)) {
                                continue;
                            }
                            const long nr = r + dr, nc = col + dc;
                            if (nr < 0 || nr >= 20 || nc < 0 || nc >= 20) {
                                continue;
                            }
                            const auto n = static_cast<std::size_t>(nr * 20 + nc);
                            if (g.occupied[n] && flood[n] < 0) {
                                flood[n] = next;
                                queue.push_back(n);
                            }
                        }
                    }
                }
                ++next;
            }
            CHECK(comps.count() == static_cast<std::size_t>(next));
            for (std::size_t a = 0; a < 400; ++a) {
                CHECK((comps.cell_label[a] < 0) == (flood[a] < 0));
                for (std::size_t b = a + 1; b < 400; b += 7) {
                    if (flood[a] >= 0 && flood[b] >= 0) {
                        CHECK((comps.cell_label[a] == comps.cell_label[b]) == (flood[a] == flood[b]));
                    }
                }
            }
            // Ranking by point count, ties by first cell.
            std::vector<std::size_t> first(comps.count(), 400);
            std::vector<std::size_t> counted(comps.count(), 0);
            for (std::size_t c = 0; c < 400; ++c) {
                if (comps.cell_label[c] >= 0) {
                    auto& f = first[static_cast<std::size_t>(comps.cell_label[c])];
                    f = std::min(f, c);
                }
            }
            for (auto c : g.point_cell) {
                ++counted[static_cast<std::size_t>(comps.cell_label[c])];
            }
            CHECK(counted == comps.point_counts);
            for (std::size_t r = 1; r < comps.count(); ++r) {
                const bool ordered = comps.point_counts[r - 1] > comps.point_counts[r] ||
                                     (comps.point_counts[r - 1] == comps.point_counts[r] && first[r - 1] < first[r]);
                CHECK(ordered);
            }
        }
    }
    CHECK_THROWS_AS(connected_components(OccupancyGrid{}, 6), std::invalid_argument);
}

TEST_CASE("profiles") {
    auto bm = make_beats(2);
    const std::vector<double> w = {1.0, -2.0, 0.5, 3.0};
    for (std::size_t s = 0; s < 4; ++s) {
        bm.waveforms(0, s) = w[s];
        bm.waveforms(1, s) = -w[s];
    }
    const Matrix y(2, 2, 0.5);
    const auto r = cluster_embedding(bm, y, {64, 3, 8, 0});
    REQUIRE(r.clusters.size() == 1);
    for (std::size_t s = 0; s < 4; ++s) {
        CHECK(r.clusters[0].mean[s] == 0.0);
        CHECK(r.clusters[0].variance[s] == w[s] * w[s]);
    }

    auto same = make_beats(5);
    for (auto& v : same.waveforms.values()) {
        v = 0.25;
    }
    Matrix z(5, 2, 1.0);
    const auto q = cluster_embedding(same, z);
    REQUIRE(q.clusters.size() == 1);
    for (double v : q.clusters[0].variance) {
        CHECK(v == 0.0);
    }
    CHECK_FALSE(q.warnings.empty());
}

TEST_CASE("two groups with hand-counted composition") {
    Rng rng(5);
    auto bm = make_beats(30);
    const std::string left = "NNNNNNNNNNNNNNNNNVVV";  // 17 N, 3 V
    const std::string right = "VVVVVVAAAA";           // 6 V, 4 A
    for (std::size_t i = 0; i < 30; ++i) {
        const char s = i < 20 ? left[i] : right[i - 20];
        bm.meta[i].symbol = s;
        bm.meta[i].aami = beats::map_to_aami(s);
        for (std::size_t c = 0; c < 4; ++c) {
            bm.waveforms(i, c) = rng.normal();
        }
    }
    const auto y = stack(blob(20, 0, 0, 0.01, rng), blob(10, 10, 10, 0.01, rng));
    const auto r = cluster_embedding(bm, y, {512, 1, 8, 42});
    REQUIRE(r.clusters.size() == 2);
    const auto& big = r.clusters[0];
    CHECK(big.id == 1);
    CHECK(big.size() == 20);
    CHECK(big.symbol_histogram.at('N') == 17);
    CHECK(big.symbol_histogram.at('V') == 3);
    CHECK(big.aami_histogram[static_cast<std::size_t>(beats::Aami::N)] == 17);
    CHECK(big.representatives.size() == 10);
    CHECK(std::set<std::size_t>(big.representatives.begin(), big.representatives.end()).size() == 10);
    const auto& small = r.clusters[1];
    CHECK(small.aami_histogram[static_cast<std::size_t>(beats::Aami::S)] == 4);
    CHECK(small.representatives == small.members);
    CHECK(r.point_cluster[25] == 2);

    // Exact mean and variance.
    for (std::size_t s = 0; s < 4; ++s) {
        double m = 0.0;
        for (auto i : big.members) {
            m += bm.waveforms(i, s);
        }
        m /= 20.0;
        double v = 0.0;
        for (auto i : big.members) {
            v += (bm.waveforms(i, s) - m) * (bm.waveforms(i, s) - m);
        }
        CHECK(big.mean[s] == m);
        CHECK(big.variance[s] == v / 20.0);
    }

    CHECK(cluster_embedding(bm, y, {512, 1, 8, 42}).clusters[0].representatives == big.representatives);

    const auto dom = dominant_label(big);
    CHECK(dom.aami == beats::Aami::N);
    CHECK(dom.purity == doctest::Approx(0.85));
    CHECK(dominant_label(small).aami == beats::Aami::V);
    CHECK(dominant_label(small).purity == doctest::Approx(0.6));
}

TEST_CASE("dominant label ties follow AAMI order") {
    Cluster c;
    c.members = {0, 1, 2, 3};
    c.aami_histogram[static_cast<std::size_t>(beats::Aami::V)] = 2;
    c.aami_histogram[static_cast<std::size_t>(beats::Aami::S)] = 2;
    CHECK(dominant_label(c).aami == beats::Aami::S);
    Cluster v;
    v.members = {0, 1};
    v.aami_histogram[static_cast<std::size_t>(beats::Aami::V)] = 2;
    CHECK(dominant_label(v).aami == beats::Aami::V);
    CHECK(dominant_label(v).purity == 1.0);
    CHECK_THROWS_AS(dominant_label(Cluster{}), std::invalid_argument);
}

TEST_CASE("partition is invariant to translation and scaling") {
    Rng rng(8);
    auto y = stack(blob(60, 0, 0, 1.0, rng), blob(40, 6, 2, 0.5, rng));
    y = stack(y, blob(30, -5, 7, 0.7, rng));
    const auto bm = make_beats(130);
    Matrix t = y;
    for (double& v : t.values()) {
        v = 3.0 * v + 7.0;
    }
    const auto a = cluster_embedding(bm, y);
    const auto b = cluster_embedding(bm, t);
    CHECK(partition(a) == partition(b));
    std::size_t total = 0;
    for (const auto& c : a.clusters) {
        total += c.size();
    }
    CHECK(total == 130);
    for (std::size_t r = 1; r < a.clusters.size(); ++r) {
        CHECK(a.clusters[r - 1].size() >= a.clusters[r].size());
    }
}

TEST_CASE("report files") {
    Rng rng(1);
    const auto y = stack(blob(20, 0, 0, 0.01, rng), blob(10, 10, 10, 0.01, rng));
    const auto bm = make_beats(30, beats::kBeatWidth);
    const auto r = cluster_embedding(bm, y);
    const auto dir = fs::temp_directory_path() / ("beatmap_clusters_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const auto files = write_cluster_report(dir, "x_", bm, r);
    REQUIRE(files.size() == 3);
    std::ifstream in(files[0]);
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    CHECK(header == "cluster_id,size,dominant_aami,purity,members_file");
    CHECK(first == "1,20,N,1,x_members.csv");
    svg::write_cluster_panels(dir / "panels.svg", bm, r, "test");
    CHECK(fs::file_size(dir / "panels.svg") > 100);
    fs::remove_all(dir);
}
