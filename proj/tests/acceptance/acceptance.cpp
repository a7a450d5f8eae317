// Acceptance suite. One PASS/FAIL/BLOCKED line per criterion.
//   acceptance --offline   criteria 6 and 8 (synthetic fixtures only)
//   acceptance --dataset   criteria 1-5 and 7 (needs BEATMAP_MITDB_DIR)
// Exit status: 0 all run criteria passed, 1 a failure, 77 blocked.
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "beatmap/beats.hpp"
#include "beatmap/clusters.hpp"
#include "beatmap/eval.hpp"
#include "beatmap/fetch.hpp"
#include "beatmap/neighbors.hpp"
#include "beatmap/pca.hpp"
#include "beatmap/rng.hpp"
#include "beatmap/tsne.hpp"
#include "beatmap/umap.hpp"
#include "beatmap/wfdb.hpp"

using namespace beatmap;
using namespace beatmap::manifold;

namespace {

// Pinned tolerances and thresholds.
constexpr double kGradTol = 1e-4;
constexpr double kOrthoTol = 1e-9;
constexpr double kResidualTol = 1e-6;
constexpr double kBisectionTol = 1e-5;
constexpr double kPerPatientAccuracy = 0.97;
constexpr double kPerPatientF1 = 0.82;
constexpr std::size_t kPerPatientK = 5;
constexpr double kMixedPatientAccuracy = 0.85;
constexpr double kMixedAamiAccuracy = 0.90;
constexpr std::size_t kMixedK = 11;
constexpr std::size_t kMixedSize = 12000;
constexpr int kClusterSlack = 1;

constexpr std::size_t kExpectedTotal = 97117;
const std::map<char, std::size_t> kExpectedSymbols = {
    {'N', 65569}, {'L', 8072}, {'R', 5726}, {'e', 16},   {'j', 224}, {'V', 7030}, {'E', 106}, {'A', 2496},
    {'S', 2},     {'J', 52},   {'a', 150},  {'Q', 15},   {'f', 260}, {'/', 3618}, {'F', 794}, {'"', 437},
    {'~', 560},   {'!', 472},  {'|', 131},  {'[', 6},    {']', 6},   {'+', 1182}, {'x', 193}};
// Indexed like beats::kAamiClasses: N, S, V, F, Q, O.
constexpr std::array<std::size_t, 6> kExpectedAami = {79607, 2700, 7136, 794, 3893, 2987};

struct Outcome {
    bool pass = true;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << " " << name << ": " << o.detail
              << std::endl;
    failures += o.pass ? 0 : 1;
}

void blocked(int id, const std::string& name, const std::string& reason) {
    std::cout << "criterion " << id << " BLOCKED " << name << ": " << reason << std::endl;
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

Matrix gaussian(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(n, d);
    for (auto& v : x.values()) {
        v = rng.normal();
    }
    return x;
}

// ---------------------------------------------------------------- criterion 6

void check(Outcome& o, bool ok, const std::string& what) {
    if (!ok) {
        o.pass = false;
        o.detail += " [" + what + "]";
    }
}

double gradient_error() {
    const auto x = gaussian(50, 10, 12);
    const auto p = joint_probabilities(x, 15.0);
    const auto y = gaussian(50, 2, 13);
    const double h = 1e-5;
    double worst = 0.0;
    for (double a : {1.0, 12.0}) {
        const auto g = tsne_gradient(p, y, a);
        auto objective = [&](const Matrix& yy) {
            double z = 0.0, cross = 0.0;
            for (std::size_t i = 0; i < 50; ++i) {
                for (std::size_t j = 0; j < 50; ++j) {
                    if (i != j) {
                        const double w = 1.0 / (1.0 + squared_distance(yy.row(i), yy.row(j)));
                        z += w;
                        cross -= a * p(i, j) * std::log(w);
                    }
                }
            }
            return cross + std::log(z);
        };
        double max_err = 0.0, max_g = 0.0;
        for (std::size_t k = 0; k < y.values().size(); ++k) {
            auto plus = y, minus = y;
            plus.values()[k] += h;
            minus.values()[k] -= h;
            const double fd = (objective(plus) - objective(minus)) / (2.0 * h);
            max_err = std::max(max_err, std::abs(fd - g.values()[k]));
            max_g = std::max(max_g, std::abs(g.values()[k]));
        }
        worst = std::max(worst, max_err / max_g);
    }
    return worst;
}

void pca_properties(double& ortho, double& residual) {
    const auto x = gaussian(200, 12, 21);
    const std::size_t d = 4;
    const auto m = pca_fit(x, d);
    ortho = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b < d; ++b) {
            double dot = 0.0;
            for (std::size_t c = 0; c < 12; ++c) {
                dot += m.components(a, c) * m.components(b, c);
            }
            ortho = std::max(ortho, std::abs(dot - (a == b ? 1.0 : 0.0)));
        }
    }
    // Residual variance of the rank-d reconstruction equals the sum of the
    // discarded eigenvalues; total variance is the trace of the covariance.
    const auto full = pca_fit(x, 12);
    const auto scores = pca_transform(m, x);
    double res = 0.0;
    for (std::size_t i = 0; i < 200; ++i) {
        for (std::size_t c = 0; c < 12; ++c) {
            double rec = m.mean[c];
            for (std::size_t a = 0; a < d; ++a) {
                rec += scores(i, a) * m.components(a, c);
            }
            res += (x(i, c) - rec) * (x(i, c) - rec);
        }
    }
    res /= 199.0;
    double discarded = 0.0;
    for (std::size_t a = d; a < 12; ++a) {
        discarded += full.eigenvalues[a];
    }
    residual = std::abs(res - discarded) / discarded;
}

double bisection_error() {
    double worst = 0.0;
    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> sq(40), dist(14);
        for (auto& v : sq) {
            v = 0.1 + 10.0 * rng.uniform();
        }
        const auto r = perplexity_search(sq, 12.0);
        worst = std::max(worst, std::abs(r.perplexity - 12.0));
        for (auto& v : dist) {
            v = 0.5 + 3.0 * rng.uniform();
        }
        std::sort(dist.begin(), dist.end());
        const auto s = smooth_knn_calibrate(dist);
        double sum = 0.0;
        for (double v : dist) {
            sum += membership(v, s.rho, s.sigma);
        }
        worst = std::max(worst, std::abs(sum - std::log2(static_cast<double>(dist.size()))));
    }
    return worst;
}

bool graph_symmetric() {
    const auto x = gaussian(80, 6, 31);
    UmapParams p;
    p.n_neighbors = 10;
    const auto m = fuzzy_graph(x, p).dense();
    for (std::size_t i = 0; i < 80; ++i) {
        for (std::size_t j = 0; j < 80; ++j) {
            if (m(i, j) != m(j, i)) {
                return false;
            }
        }
    }
    return true;
}

std::vector<std::uint8_t> encode212(const std::vector<int>& values) {
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < values.size(); i += 2) {
        const unsigned a = static_cast<unsigned>(values[i]) & 0xFFF;
        const unsigned b = i + 1 < values.size() ? static_cast<unsigned>(values[i + 1]) & 0xFFF : 0;
        out.push_back(static_cast<std::uint8_t>(a & 0xFF));
        out.push_back(static_cast<std::uint8_t>(((a >> 8) & 0x0F) | ((b >> 8) << 4)));
        out.push_back(static_cast<std::uint8_t>(b & 0xFF));
    }
    return out;
}

bool format212_round_trip() {
    std::mt19937_64 gen(9);
    std::uniform_int_distribution<int> value(-2048, 2047);
    for (int trial = 0; trial < 100; ++trial) {
        const int signals = 1 + static_cast<int>(gen() % 2);
        const std::int64_t frames = 1 + static_cast<std::int64_t>(gen() % 500);
        std::vector<int> v(static_cast<std::size_t>(signals * frames));
        for (auto& s : v) {
            s = value(gen);
        }
        v.front() = -2048;
        v.back() = 2047;
        const auto d = wfdb::decode_format212(encode212(v), signals, frames);
        for (std::int64_t f = 0; f < frames; ++f) {
            for (int s = 0; s < signals; ++s) {
                if (d.at(s, f) != v[static_cast<std::size_t>(f * signals + s)]) {
                    return false;
                }
            }
        }
    }
    return true;
}

bool partition_property() {
    std::mt19937_64 gen(17);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t count = 2 + gen() % 40;
        std::vector<std::int64_t> anchors;
        std::int64_t at = static_cast<std::int64_t>(gen() % 50);
        for (std::size_t i = 0; i < count; ++i) {
            anchors.push_back(at);
            at += 1 + static_cast<std::int64_t>(gen() % 400);
        }
        const std::int64_t length = at + 10;
        const auto w = beats::segment_beats(length, anchors);
        if (w.size() != anchors.size()) {
            return false;
        }
        // Every sample in [first anchor, last anchor) lies in exactly one window.
        std::vector<int> hits(static_cast<std::size_t>(length), 0);
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (w[i].anchor != anchors[i] || (i + 1 < w.size() && w[i].end != w[i + 1].begin)) {
                return false;
            }
            for (auto s = w[i].begin; s < w[i].end; ++s) {
                ++hits[static_cast<std::size_t>(s)];
            }
        }
        for (std::int64_t s = 0; s < length; ++s) {
            const bool inside = s >= anchors.front() && s < anchors.back();
            if (hits[static_cast<std::size_t>(s)] != (inside ? 1 : 0)) {
                return false;
            }
        }
    }
    return true;
}

bool isometry_trust() {
    const auto x = gaussian(60, 2, 41);
    Matrix y(60, 2);
    for (std::size_t i = 0; i < 60; ++i) {
        // Reflection, 90 degree rotation and translation.
        y(i, 0) = -x(i, 1) + 5.0;
        y(i, 1) = -x(i, 0) - 3.0;
    }
    for (std::size_t k : {1u, 5u, 12u, 29u}) {
        if (eval::trustworthiness(x, y, k) != 1.0) {
            return false;
        }
    }
    return true;
}

void criterion6() {
    Outcome o;
    const double grad = gradient_error();
    double ortho = 0.0, residual = 0.0;
    pca_properties(ortho, residual);
    const double bisect = bisection_error();
    check(o, grad < kGradTol, "gradient");
    check(o, ortho < kOrthoTol, "pca orthonormality");
    check(o, residual < kResidualTol, "pca residual variance");
    check(o, bisect <= kBisectionTol, "bisection targets");
    check(o, graph_symmetric(), "fuzzy graph symmetry");
    check(o, format212_round_trip(), "format 212 round trip");
    check(o, partition_property(), "segmentation partition");
    check(o, isometry_trust(), "isometry trustworthiness");
    o.detail = "grad_rel_err=" + fmt(grad) + " ortho=" + fmt(ortho) + " residual=" + fmt(residual) +
               " bisection=" + fmt(bisect) + o.detail;
    report(6, "numerical property suite", o);
}

// ---------------------------------------------------------------- criterion 8

double one_nn_agreement(const Matrix& y, std::size_t per_blob) {
    const auto g = knn_brute_force(y, 1, false);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < y.rows(); ++i) {
        agree += (i < per_blob) == (g.index(i, 0) < per_blob) ? 1 : 0;
    }
    return static_cast<double>(agree) / static_cast<double>(y.rows());
}

void criterion8() {
    const std::size_t per = 50;
    auto x = gaussian(2 * per, 256, 4);
    for (std::size_t i = per; i < 2 * per; ++i) {
        for (std::size_t c = 0; c < 256; ++c) {
            x(i, c) += 3.0;
        }
    }
    TsneParams tp;
    tp.perplexity = 10.0;
    tp.seed = 1;
    UmapParams up;
    up.seed = 3;
    const double t = one_nn_agreement(tsne_embed(x, tp).y, per);
    const double u = one_nn_agreement(umap_embed(x, up).y, per);
    const double p = one_nn_agreement(pca_transform(pca_fit(x, 2), x), per);
    Outcome o;
    o.pass = t == 1.0 && u == 1.0 && p == 1.0;
    o.detail = "tsne=" + fmt(t) + " umap=" + fmt(u) + " pca=" + fmt(p) + " (required 1)";
    report(8, "two-blob oracle", o);
}

// ---------------------------------------------------------------- dataset

struct DatasetRun {
    beats::BeatMatrix mlii;
    std::vector<std::string> subset;
};

DatasetRun load_dataset(const std::filesystem::path& dir) {
    std::vector<wfdb::RecordHeader> headers;
    for (auto id : wfdb::mitbih_record_ids()) {
        const auto raw = wfdb::read_file_bytes((dir / (std::string(id) + ".hea")).string());
        headers.push_back(wfdb::parse_header(std::string(raw.begin(), raw.end())));
    }
    DatasetRun run;
    run.subset = wfdb::select_study_subset(headers);
    const beats::Lead lead = beats::Lead::MLII;
    for (const auto& id : run.subset) {
        // One record at a time keeps peak memory at a single signal matrix.
        std::vector<wfdb::Record> one = {wfdb::load_record(dir.string(), id)};
        auto part = beats::build_dataset(one, std::span(&lead, 1)).at(lead);
        auto& w = run.mlii.waveforms;
        Matrix merged(w.rows() + part.waveforms.rows(), beats::kBeatWidth);
        std::copy(w.values().begin(), w.values().end(), merged.values().begin());
        std::copy(part.waveforms.values().begin(), part.waveforms.values().end(),
                  merged.values().begin() + static_cast<std::ptrdiff_t>(w.values().size()));
        w = std::move(merged);
        run.mlii.meta.insert(run.mlii.meta.end(), part.meta.begin(), part.meta.end());
    }
    return run;
}

void criterion1(const DatasetRun& run) {
    const auto totals = beats::count_classes(run.mlii);
    Outcome o;
    check(o, run.subset.size() == 40, "subset size " + std::to_string(run.subset.size()));
    check(o, totals.total == kExpectedTotal, "total " + std::to_string(totals.total));
    for (std::size_t c = 0; c < 6; ++c) {
        if (totals.by_aami[c] != kExpectedAami[c]) {
            check(o, false,
                  std::string(beats::to_string(beats::kAamiClasses[c])) + "=" + std::to_string(totals.by_aami[c]));
        }
    }
    // 'N' in the expected table covers both 'N' and '.'.
    auto observed = totals.by_symbol;
    if (auto dot = observed.find('.'); dot != observed.end()) {
        observed['N'] += dot->second;
        observed.erase(dot);
    }
    for (const auto& [sym, n] : observed) {
        const auto it = kExpectedSymbols.find(sym);
        const std::size_t want = it == kExpectedSymbols.end() ? 0 : it->second;
        if (n != want) {
            check(o, false, std::string("'") + sym + "'=" + std::to_string(n) + " want " + std::to_string(want));
        }
    }
    for (const auto& [sym, n] : kExpectedSymbols) {
        if (!observed.contains(sym)) {
            check(o, false, std::string("'") + sym + "' missing");
        }
    }
    o.detail = "beats=" + std::to_string(totals.total) + " (required " + std::to_string(kExpectedTotal) + ")" + o.detail;
    report(1, "dataset fidelity", o);
}

struct MethodScores {
    std::vector<double> accuracy;
    std::vector<double> f1;
};

Matrix embed(const std::string& method, const Matrix& x) {
    if (method == "tsne") {
        return tsne_embed(x, TsneParams{}).y;
    }
    if (method == "umap") {
        return umap_embed(x, UmapParams{}).y;
    }
    return pca_transform(pca_fit(x, 2), x);
}

const std::vector<std::string> kMethods = {"tsne", "umap", "pca"};

void criteria2to5(const DatasetRun& run) {
    std::map<std::string, MethodScores> per_patient;
    for (const auto& id : run.subset) {
        const auto rows = run.mlii.rows_of(id);
        const auto sub = run.mlii.select(rows);
        for (const auto& m : kMethods) {
            const auto r = eval::evaluate(embed(m, sub.waveforms), sub, eval::Task::binary_arrhythmia, kPerPatientK);
            per_patient[m].accuracy.push_back(r.accuracy);
            if (!r.f1_undefined) {
                per_patient[m].f1.push_back(r.f1);
            }
        }
    }
    std::map<std::string, double> pp_acc;
    Outcome o2;
    for (const auto& m : kMethods) {
        const double acc = eval::aggregate(per_patient[m].accuracy).median;
        const double f1 = eval::aggregate(per_patient[m].f1).median;
        pp_acc[m] = acc;
        o2.detail += m + ": median_acc=" + fmt(acc) + " median_f1=" + fmt(f1) + "; ";
        if (m != "pca") {
            check(o2, acc >= kPerPatientAccuracy && f1 >= kPerPatientF1, m + " below threshold");
        }
    }
    report(2, "per-patient arrhythmia detection", o2);

    const auto picked = beats::stratified_subsample(run.mlii, kMixedSize, 0);
    const auto mixed = run.mlii.select(picked);
    std::map<std::string, double> patient_acc, aami_acc;
    for (const auto& m : kMethods) {
        const auto y = embed(m, mixed.waveforms);
        patient_acc[m] = eval::evaluate(y, mixed, eval::Task::patient_id, kMixedK).accuracy;
        aami_acc[m] = eval::evaluate(y, mixed, eval::Task::aami_multiclass, kMixedK).accuracy;
    }
    Outcome o3, o4;
    for (const auto& m : {"tsne", "umap"}) {
        o3.detail += std::string(m) + "=" + fmt(patient_acc[m]) + " ";
        o4.detail += std::string(m) + "=" + fmt(aami_acc[m]) + " ";
        check(o3, patient_acc[m] >= kMixedPatientAccuracy, std::string(m) + " below " + fmt(kMixedPatientAccuracy));
        check(o4, aami_acc[m] >= kMixedAamiAccuracy, std::string(m) + " below " + fmt(kMixedAamiAccuracy));
    }
    report(3, "mixed-population patient identification", o3);
    report(4, "mixed-population arrhythmia detection", o4);

    Outcome o5;
    const std::vector<std::pair<std::string, std::map<std::string, double>*>> tasks = {
        {"per_patient", &pp_acc}, {"mixed_patient", &patient_acc}, {"mixed_aami", &aami_acc}};
    for (const auto& [name, scores] : tasks) {
        auto& s = *scores;
        o5.detail += name + ": pca=" + fmt(s["pca"]) + " tsne=" + fmt(s["tsne"]) + " umap=" + fmt(s["umap"]) + "; ";
        check(o5, s["pca"] < s["tsne"] && s["pca"] < s["umap"], name + " ordering");
    }
    report(5, "PCA inferiority ordering", o5);
}

void criterion7(const DatasetRun& run) {
    struct Target {
        std::string id;
        int clusters;
        bool at_least;
        bool largest_n;
    };
    const std::vector<Target> targets = {
        {"116", 5, false, true}, {"231", 4, false, true}, {"209", 5, false, true}, {"207", 6, true, false}};
    Outcome o;
    for (const auto& t : targets) {
        const auto sub = run.mlii.select(run.mlii.rows_of(t.id));
        const auto y = umap_embed(sub.waveforms, UmapParams{}).y;
        const auto rep = clusters::cluster_embedding(sub, y);
        const int n = static_cast<int>(rep.clusters.size());
        const bool count_ok = t.at_least ? n >= t.clusters - kClusterSlack : std::abs(n - t.clusters) <= kClusterSlack;
        std::string dominant = "-";
        bool dom_ok = true;
        if (!rep.clusters.empty()) {
            const auto d = clusters::dominant_label(rep.clusters.front());
            dominant = std::string(beats::to_string(d.aami));
            dom_ok = !t.largest_n || d.aami == beats::Aami::N;
        }
        o.detail += t.id + ": clusters=" + std::to_string(n) + " largest=" + dominant + "; ";
        check(o, count_ok, t.id + " count");
        check(o, dom_ok, t.id + " dominant class");
    }
    report(7, "cluster recovery", o);
}

int run_dataset() {
    const char* env = std::getenv("BEATMAP_MITDB_DIR");
    std::string reason;
    if (env == nullptr || *env == '\0') {
        reason = "BEATMAP_MITDB_DIR is not set; the full MIT-BIH download is required";
    } else {
        std::size_t missing = 0;
        for (auto id : wfdb::mitbih_record_ids()) {
            missing += wfdb::is_cached(env, std::string(id)) ? 0 : 1;
        }
        if (missing > 0) {
            reason = std::to_string(missing) + " MIT-BIH records missing from " + std::string(env);
        }
    }
    if (!reason.empty()) {
        blocked(1, "dataset fidelity", reason);
        blocked(2, "per-patient arrhythmia detection", reason);
        blocked(3, "mixed-population patient identification", reason);
        blocked(4, "mixed-population arrhythmia detection", reason);
        blocked(5, "PCA inferiority ordering", reason);
        blocked(7, "cluster recovery", reason);
        return 77;
    }
    const auto run = load_dataset(env);
    criterion1(run);
    criterion7(run);
    criteria2to5(run);
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    bool offline = false, dataset = false;
    for (int i = 1; i < argc; ++i) {
        offline |= std::strcmp(argv[i], "--offline") == 0;
        dataset |= std::strcmp(argv[i], "--dataset") == 0;
    }
    if (!offline && !dataset) {
        offline = dataset = true;
    }
    int status = 0;
    if (offline) {
        criterion6();
        criterion8();
        status = failures == 0 ? 0 : 1;
    }
    if (dataset) {
        const int d = run_dataset();
        if (d == 1 || status == 1) {
            return 1;
        }
        return offline && d == 77 ? 77 : d;
    }
    return status;
}
