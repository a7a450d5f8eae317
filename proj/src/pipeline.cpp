#include "beatmap/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "beatmap/beat_io.hpp"
#include "beatmap/csv.hpp"
#include "beatmap/embedding.hpp"
#include "beatmap/fetch.hpp"
#include "beatmap/hash.hpp"
#include "beatmap/pca.hpp"
#include "beatmap/svg.hpp"
#include "json.hpp"

namespace beatmap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFetchAttempts = 3;

class DirectoryLock {
public:
    explicit DirectoryLock(const fs::path& dir) {
        const auto path = dir / ".lock";
        fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
        if (fd_ < 0) {
            throw StageError("lock", "cannot open " + path.string());
        }
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            throw StageError("lock", "run directory " + dir.string() + " is in use by another run");
        }
    }
    ~DirectoryLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    int fd_ = -1;
};

std::string base_url_of(const RunConfig& c) { return c.base_url.empty() ? wfdb::kDefaultBaseUrl : c.base_url; }

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    return out;
}

/// Headers of the MIT-BIH records present in the cache.
std::vector<wfdb::RecordHeader> cached_headers(const fs::path& cache_dir) {
    std::vector<wfdb::RecordHeader> headers;
    for (auto id : wfdb::mitbih_record_ids()) {
        const auto paths = wfdb::cached_paths(cache_dir, std::string(id));
        if (!fs::exists(paths.hea)) {
            continue;
        }
        const auto bytes = wfdb::read_file_bytes(paths.hea.string());
        headers.push_back(wfdb::parse_header(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
    }
    return headers;
}

struct EmbeddingRun {
    Algorithm algorithm;
    manifold::Embedding embedding;
};

manifold::Embedding embed(Algorithm algorithm, const Matrix& x, const RunConfig& c) {
    switch (algorithm) {
    case Algorithm::pca: {
        manifold::Embedding e;
        e.y = manifold::pca_transform(manifold::pca_fit(x, 2), x);
        e.provenance.algorithm = "pca";
        e.provenance.params = {{"components", "2"}};
        return e;
    }
    case Algorithm::tsne: return manifold::tsne_embed(x, c.tsne);
    case Algorithm::umap: break;
    }
    return manifold::umap_embed(x, c.umap);
}

class Run {
public:
    Run(const RunConfig& config, const Logger& log) : c_(config), log_(log), dir_(config.output_dir) {}

    fs::path execute() {
        fs::create_directories(dir_);
        DirectoryLock lock(dir_);
        {
            auto out = open_out(dir_ / "config.json");
            out << config_to_json(c_);
        }
        record_output(dir_ / "config.json");

        stage("ingest", [&] { ingest(); });
        stage("beats", [&] { build_beats(); });
        if (c_.mixed) {
            stage("embed_mixed", [&] { embed_mixed(); });
            stage("evaluate_mixed", [&] { evaluate_mixed(); });
        }
        if (c_.per_patient) {
            stage("embed_per_patient", [&] { embed_per_patient(); });
            stage("evaluate_per_patient", [&] { evaluate_per_patient(); });
            stage("clusters", [&] { cluster_per_patient(); });
        }
        return write_manifest();
    }

private:
    template <typename F>
    void stage(const std::string& name, F&& body) {
        log_("stage " + name);
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body();
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(name, e.what());
        }
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        timings_.emplace_back(name, dt.count());
    }

    void record_output(const fs::path& path) {
        outputs_[fs::relative(path, dir_).generic_string()] = sha256_file(path);
    }

    void ingest() {
        std::vector<std::string> ids = c_.records;
        if (ids.empty()) {
            const auto headers = cached_headers(c_.cache_dir);
            if (headers.empty()) {
                throw std::runtime_error("no cached records in " + c_.cache_dir + "; run fetch first");
            }
            if (headers.size() < wfdb::mitbih_record_ids().size()) {
                log_("warning: only " + std::to_string(headers.size()) + " of " +
                     std::to_string(wfdb::mitbih_record_ids().size()) + " records cached");
            }
            ids = wfdb::select_study_subset(headers);
            log_("study subset: " + std::to_string(headers.size()) + " -> " + std::to_string(ids.size()) +
                 " records");
        }
        for (const auto& id : ids) {
            if (!wfdb::is_cached(c_.cache_dir, id)) {
                throw std::runtime_error("record " + id + " is not in the cache " + c_.cache_dir);
            }
            records_.push_back(wfdb::load_record(c_.cache_dir, id));
        }
    }

    void build_beats() {
        beats_ = beats::build_dataset(records_, c_.leads, c_.pipeline);
        records_.clear();
        for (const auto& [lead, matrix] : beats_) {
            const std::string name(beats::to_string(lead));
            const auto csv_path = dir_ / ("beats_" + name + ".csv");
            const auto bin_path = dir_ / ("beats_" + name + ".cmbm");
            beats::write_csv(csv_path, matrix);
            beats::write_binary(bin_path, matrix);
            record_output(csv_path);
            record_output(bin_path);
            dataset_hash_[lead] = sha256_file(bin_path);
            const auto totals = beats::count_classes(matrix);
            std::string line = name + ": " + std::to_string(totals.total) + " beats";
            for (auto cls : beats::kAamiClasses) {
                line += " " + std::string(beats::to_string(cls)) + "=" +
                        std::to_string(totals.by_aami[static_cast<std::size_t>(cls)]);
            }
            log_(line);
        }
    }

    void save_embedding(const fs::path& dir, const std::string& stem, manifold::Embedding& e, beats::Lead lead,
                        const beats::BeatMatrix& all, std::span<const std::size_t> rows) {
        fs::create_directories(dir);
        e.provenance.lead = beats::to_string(lead);
        e.provenance.dataset_hash = dataset_hash_.at(lead);
        if (e.provenance.algorithm != "pca") {
            e.provenance.seed = e.provenance.algorithm == "tsne" ? c_.tsne.seed : c_.umap.seed;
        }
        for (const auto& w : e.warnings) {
            log_("warning: " + stem + ": " + w);
        }
        const auto csv_path = dir / (stem + ".csv");
        const auto prov_path = dir / (stem + ".provenance.txt");
        manifold::write_embedding_csv(csv_path, e.y, all, rows);
        manifold::write_provenance(prov_path, e.provenance);
        record_output(csv_path);
        record_output(prov_path);
    }

    void scatter(const fs::path& path, const Matrix& y, const beats::BeatMatrix& sub, eval::Task task,
                 const std::string& title) {
        const auto tl = eval::task_labels(sub, task);
        std::vector<int> labels(sub.size(), 0);
        std::vector<std::string> classes = tl.classes;
        if (task == eval::Task::gender) {
            classes.push_back("U");
            std::fill(labels.begin(), labels.end(), 2);
        }
        for (std::size_t r = 0; r < tl.rows.size(); ++r) {
            labels[tl.rows[r]] = tl.labels[r];
        }
        svg::write_scatter(path, y, labels, classes, title);
        record_output(path);
    }

    void embed_mixed() {
        for (const auto& [lead, all] : beats_) {
            std::vector<std::size_t> rows(all.size());
            std::iota(rows.begin(), rows.end(), std::size_t{0});
            if (c_.subsample && c_.subsample->size < all.size()) {
                rows = beats::stratified_subsample(all, c_.subsample->size, c_.subsample->seed);
                log_("mixed: stratified subsample of " + std::to_string(rows.size()) + " / " +
                     std::to_string(all.size()) + " beats (seed " + std::to_string(c_.subsample->seed) + ")");
            }
            auto& slot = mixed_[lead];
            slot.rows = rows;
            slot.beats = all.select(rows);
            const std::string lname(beats::to_string(lead));
            for (auto algo : c_.algorithms) {
                const std::string aname(to_string(algo));
                log_("mixed: " + aname + " on " + lname + " (" + std::to_string(rows.size()) + " beats)");
                auto e = embed(algo, slot.beats.waveforms, c_);
                const fs::path out = dir_ / "mixed";
                save_embedding(out, "embedding_" + aname + "_" + lname, e, lead, all, rows);
                const std::string base = "scatter_" + aname + "_" + lname;
                svg::write_scatter(out / (base + "_unlabeled.svg"), e.y, {}, {}, aname + " " + lname);
                record_output(out / (base + "_unlabeled.svg"));
                scatter(out / (base + "_aami.svg"), e.y, slot.beats, eval::Task::aami_multiclass,
                        aname + " " + lname + " by AAMI class");
                scatter(out / (base + "_record.svg"), e.y, slot.beats, eval::Task::patient_id,
                        aname + " " + lname + " by record");
                scatter(out / (base + "_gender.svg"), e.y, slot.beats, eval::Task::gender,
                        aname + " " + lname + " by gender");
                slot.embeddings.push_back({algo, std::move(e)});
            }
        }
    }

    static std::vector<std::string> eval_header(bool per_patient) {
        std::vector<std::string> h;
        if (per_patient) {
            h.push_back("record_id");
        }
        for (const char* f : {"lead", "algorithm", "task", "k", "n", "excluded", "accuracy", "f1", "f1_undefined"}) {
            h.emplace_back(f);
        }
        return h;
    }

    static void eval_row(std::ostream& out, std::ostream& confusion, const std::string* record, beats::Lead lead,
                         Algorithm algo, const eval::EvalReport& r) {
        std::vector<std::string> row;
        if (record != nullptr) {
            row.push_back(*record);
        }
        const std::vector<std::string> rest = {std::string(beats::to_string(lead)), std::string(to_string(algo)),
                                               std::string(eval::to_string(r.task)), std::to_string(r.k),
                                               std::to_string(r.n), std::to_string(r.excluded),
                                               csv::format_double(r.accuracy), csv::format_double(r.f1),
                                               r.f1_undefined ? "1" : "0"};
        row.insert(row.end(), rest.begin(), rest.end());
        csv::write_row(out, row);
        confusion << "# " << (record != nullptr ? "record_id=" + *record + " " : "") << "lead=" << beats::to_string(lead)
                  << " algorithm=" << to_string(algo) << " task=" << eval::to_string(r.task) << " k=" << r.k << '\n';
        eval::write_confusion_csv(confusion, r.confusion);
        confusion << '\n';
    }

    void evaluate_mixed() {
        const auto eval_path = dir_ / "eval_mixed.csv";
        const auto conf_path = dir_ / "confusion_mixed.csv";
        auto out = open_out(eval_path);
        auto conf = open_out(conf_path);
        csv::write_row(out, eval_header(false));
        std::ofstream trust;
        if (c_.trustworthiness_k > 0) {
            trust = open_out(dir_ / "trustworthiness_mixed.csv");
            csv::write_row(trust, {"lead", "algorithm", "k", "trustworthiness"});
        }
        for (const auto& [lead, slot] : mixed_) {
            for (const auto& run : slot.embeddings) {
                for (auto task : c_.tasks) {
                    for (std::size_t k : c_.k_mixed) {
                        const auto tl_n = eval::task_labels(slot.beats, task).rows.size();
                        if (k >= tl_n) {
                            log_("skip k=" + std::to_string(k) + " for " + std::string(eval::to_string(task)) +
                                 ": only " + std::to_string(tl_n) + " labeled beats");
                            continue;
                        }
                        const auto r = eval::evaluate(run.embedding.y, slot.beats, task, k);
                        eval_row(out, conf, nullptr, lead, run.algorithm, r);
                        log_("mixed " + std::string(beats::to_string(lead)) + " " +
                             std::string(to_string(run.algorithm)) + " " + std::string(eval::to_string(task)) +
                             " k=" + std::to_string(k) + ": accuracy " + csv::format_double(r.accuracy));
                    }
                }
                if (c_.trustworthiness_k > 0 && 2 * c_.trustworthiness_k < slot.beats.size()) {
                    const double t = eval::trustworthiness(slot.beats.waveforms, run.embedding.y, c_.trustworthiness_k);
                    csv::write_row(trust, {std::string(beats::to_string(lead)), std::string(to_string(run.algorithm)),
                                           std::to_string(c_.trustworthiness_k), csv::format_double(t)});
                }
            }
        }
        out.close();
        conf.close();
        record_output(eval_path);
        record_output(conf_path);
        if (trust.is_open()) {
            trust.close();
            record_output(dir_ / "trustworthiness_mixed.csv");
        }
    }

    void embed_per_patient() {
        for (const auto& [lead, all] : beats_) {
            const std::string lname(beats::to_string(lead));
            for (const auto& id : all.record_ids()) {
                auto& slot = per_patient_[lead][id];
                slot.rows = all.rows_of(id);
                slot.beats = all.select(slot.rows);
                for (auto algo : c_.algorithms) {
                    const std::string aname(to_string(algo));
                    log_("record " + id + ": " + aname + " on " + lname + " (" + std::to_string(slot.rows.size()) +
                         " beats)");
                    auto e = embed(algo, slot.beats.waveforms, c_);
                    const fs::path out = dir_ / "per_patient" / id;
                    save_embedding(out, "embedding_" + aname + "_" + lname, e, lead, all, slot.rows);
                    scatter(out / ("scatter_" + aname + "_" + lname + "_aami.svg"), e.y, slot.beats,
                            eval::Task::aami_multiclass, "record " + id + " " + aname + " " + lname);
                    slot.embeddings.push_back({algo, std::move(e)});
                }
            }
        }
    }

    void evaluate_per_patient() {
        const auto eval_path = dir_ / "eval_per_patient.csv";
        const auto conf_path = dir_ / "confusion_per_patient.csv";
        auto out = open_out(eval_path);
        auto conf = open_out(conf_path);
        csv::write_row(out, eval_header(true));
        std::ofstream trust;
        if (c_.trustworthiness_k > 0) {
            trust = open_out(dir_ / "trustworthiness_per_patient.csv");
            csv::write_row(trust, {"record_id", "lead", "algorithm", "k", "trustworthiness"});
        }
        for (const auto& [lead, records] : per_patient_) {
            for (const auto& [id, slot] : records) {
                for (const auto& run : slot.embeddings) {
                    for (auto task : c_.tasks) {
                        // A single recording has one patient and one gender.
                        if (task == eval::Task::patient_id || task == eval::Task::gender) {
                            continue;
                        }
                        for (std::size_t k : c_.k_per_patient) {
                            if (k >= slot.beats.size()) {
                                continue;
                            }
                            const auto r = eval::evaluate(run.embedding.y, slot.beats, task, k);
                            eval_row(out, conf, &id, lead, run.algorithm, r);
                        }
                    }
                    if (c_.trustworthiness_k > 0 && 2 * c_.trustworthiness_k < slot.beats.size()) {
                        const double t =
                            eval::trustworthiness(slot.beats.waveforms, run.embedding.y, c_.trustworthiness_k);
                        csv::write_row(trust, {id, std::string(beats::to_string(lead)),
                                               std::string(to_string(run.algorithm)),
                                               std::to_string(c_.trustworthiness_k), csv::format_double(t)});
                    }
                }
            }
        }
        out.close();
        conf.close();
        record_output(eval_path);
        record_output(conf_path);
        if (trust.is_open()) {
            trust.close();
            record_output(dir_ / "trustworthiness_per_patient.csv");
        }
    }

    void cluster_per_patient() {
        const auto& wanted = c_.clusters.records;
        for (const auto& [lead, records] : per_patient_) {
            const std::string lname(beats::to_string(lead));
            for (const auto& [id, slot] : records) {
                if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), id) == wanted.end()) {
                    continue;
                }
                for (const auto& run : slot.embeddings) {
                    const auto& algos = c_.clusters.algorithms;
                    if (std::find(algos.begin(), algos.end(), run.algorithm) == algos.end()) {
                        continue;
                    }
                    const clusters::ClusterOptions opts{c_.clusters.resolution, c_.clusters.dilation,
                                                        c_.clusters.connectivity, c_.seed};
                    const auto report = clusters::cluster_embedding(slot.beats, run.embedding.y, opts);
                    const fs::path out = dir_ / "per_patient" / id;
                    const std::string prefix = std::string(to_string(run.algorithm)) + "_" + lname + "_";
                    for (const auto& p : clusters::write_cluster_report(out, prefix, slot.beats, report)) {
                        record_output(p);
                    }
                    const auto panel = out / (prefix + "cluster_panels.svg");
                    svg::write_cluster_panels(panel, slot.beats, report,
                                              "record " + id + " " + std::string(to_string(run.algorithm)) + " " +
                                                  lname + " clusters");
                    record_output(panel);
                    std::string line = "record " + id + " " + std::string(to_string(run.algorithm)) + ": " +
                                       std::to_string(report.clusters.size()) + " clusters, sizes";
                    for (std::size_t c = 0; c < std::min<std::size_t>(report.clusters.size(), 10); ++c) {
                        line += " " + std::to_string(report.clusters[c].size());
                    }
                    if (report.clusters.size() > 10) {
                        line += " ...";
                    }
                    log_(line);
                }
            }
        }
    }

    fs::path write_manifest() {
        json m;
        m["tool_version"] = kToolVersion;
        m["config"] = json::parse(config_to_json(c_));
        for (const auto& [lead, hash] : dataset_hash_) {
            m["dataset_hash"][std::string(beats::to_string(lead))] = hash;
        }
        m["outputs"] = json::object();
        for (const auto& [path, hash] : outputs_) {
            m["outputs"][path] = hash;
        }
        m["stages"] = json::array();
        for (const auto& [name, seconds] : timings_) {
            m["stages"].push_back({{"name", name}, {"wall_seconds", seconds}});
        }
        const auto path = dir_ / "manifest.json";
        auto out = open_out(path);
        out << m.dump(2) << '\n';
        return path;
    }

    struct Slot {
        std::vector<std::size_t> rows;
        beats::BeatMatrix beats;
        std::vector<EmbeddingRun> embeddings;
    };

    const RunConfig& c_;
    const Logger& log_;
    fs::path dir_;
    std::vector<wfdb::Record> records_;
    std::map<beats::Lead, beats::BeatMatrix> beats_;
    std::map<beats::Lead, std::string> dataset_hash_;
    std::map<beats::Lead, Slot> mixed_;
    std::map<beats::Lead, std::map<std::string, Slot>> per_patient_;
    std::map<std::string, std::string> outputs_;
    std::vector<std::pair<std::string, double>> timings_;
};

} // namespace

void apply_environment(RunConfig& config) {
    if (const char* env = std::getenv(kCacheDirEnv); env != nullptr && *env != '\0') {
        config.cache_dir = env;
    }
}

FetchSummary cmd_fetch(const RunConfig& config, const Logger& log) {
    FetchSummary summary;
    const auto base = base_url_of(config);
    fs::create_directories(config.cache_dir);
    for (auto id_view : wfdb::mitbih_record_ids()) {
        const std::string id(id_view);
        for (int attempt = 1;; ++attempt) {
            try {
                const auto files = wfdb::fetch_record(id, base, config.cache_dir);
                (files.downloaded ? summary.downloaded : summary.cached).push_back(id);
                log(id + (files.downloaded ? ": downloaded" : ": cached"));
                break;
            } catch (const wfdb::FetchError& e) {
                if (e.retriable() && attempt < kFetchAttempts) {
                    log(id + ": " + e.what() + " (retrying)");
                    continue;
                }
                summary.failures.push_back({id, e.what()});
                log(id + ": FAILED: " + e.what());
                break;
            } catch (const std::exception& e) {
                summary.failures.push_back({id, e.what()});
                log(id + ": FAILED: " + e.what());
                break;
            }
        }
    }
    const auto headers = cached_headers(config.cache_dir);
    summary.subset = wfdb::select_study_subset(headers);
    log("subset selection: " + std::to_string(headers.size()) + " -> " + std::to_string(summary.subset.size()) +
        " records");

    json m;
    m["base_url"] = base;
    m["downloaded"] = summary.downloaded;
    m["cached"] = summary.cached;
    m["failures"] = json::array();
    for (const auto& f : summary.failures) {
        m["failures"].push_back({{"record_id", f.record_id}, {"message", f.message}});
    }
    m["records"] = json::object();
    for (const auto& h : headers) {
        m["records"][h.record_id] = {{"leads", h.lead_names()}, {"n_samples", h.n_samples}};
    }
    m["subset"] = summary.subset;
    auto out = open_out(fs::path(config.cache_dir) / "fetch_manifest.json");
    out << m.dump(2) << '\n';
    return summary;
}

fs::path cmd_run(const RunConfig& config, const Logger& log) { return Run(config, log).execute(); }

std::vector<fs::path> cmd_clusters(const fs::path& run_dir, const fs::path& embedding, beats::Lead lead,
                                   const clusters::ClusterOptions& options, const fs::path& out_dir) {
    const auto bin = run_dir / ("beats_" + std::string(beats::to_string(lead)) + ".cmbm");
    if (!fs::exists(bin)) {
        throw StageError("clusters", "missing stage output: " + bin.string());
    }
    const auto emb_path = embedding.is_absolute() ? embedding : run_dir / embedding;
    if (!fs::exists(emb_path)) {
        throw StageError("clusters", "missing stage output: " + emb_path.string());
    }
    try {
        const auto all = beats::read_binary(bin);
        const auto rows = manifold::read_embedding_csv(emb_path);
        for (std::size_t i : rows.indices) {
            if (i >= all.size()) {
                throw std::runtime_error(emb_path.string() + ": index " + std::to_string(i) +
                                         " outside the beat matrix");
            }
        }
        const auto sub = all.select(rows.indices);
        const auto report = clusters::cluster_embedding(sub, rows.y, options);
        fs::create_directories(out_dir);
        const std::string prefix = emb_path.stem().string() + "_";
        auto written = clusters::write_cluster_report(out_dir, prefix, sub, report);
        const auto panel = out_dir / (prefix + "cluster_panels.svg");
        svg::write_cluster_panels(panel, sub, report, emb_path.stem().string() + " clusters");
        written.push_back(panel);
        return written;
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("clusters", e.what());
    }
}

} // namespace beatmap
