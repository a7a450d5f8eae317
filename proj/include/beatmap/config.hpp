#pragma once

// Run configuration, read from a JSON file.
//
// {
//   "cache_dir": "data/mitdb",
//   "base_url": "https://physionet.org/files/mitdb/1.0.0/",
//   "records": [],                    // empty: the MLII/V1 study subset
//   "leads": ["MLII"],
//   "algorithms": ["pca", "tsne", "umap"],
//   "tasks": ["patient_id", "gender", "aami", "binary"],
//   "scopes": {"mixed": true, "per_patient": true},
//   "k_mixed": [11, 51, 101, 201],
//   "k_per_patient": [5, 21, 41],
//   "subsample": {"size": 12000, "seed": 0},   // or null for all beats
//   "pipeline": {"median_kernel": 127, "order": "resample_then_detrend"},
//   "tsne": {"perplexity": 30, "learning_rate": 200, "n_iter": 1000,
//            "early_exaggeration": 12, "exaggeration_iters": 250, "init": "pca"},
//   "umap": {"n_neighbors": 15, "min_dist": 0.1, "spread": 1.0, "n_epochs": 500,
//            "negative_sample_rate": 5, "init": "pca"},
//   "clusters": {"algorithms": ["umap"], "records": [], "resolution": 128,
//                "dilation": 1, "connectivity": 8},
//   "trustworthiness_k": 0,           // 0 disables
//   "output_dir": "runs/default",
//   "seed": 0
// }
//
// Every key is optional. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "beatmap/beats.hpp"
#include "beatmap/clusters.hpp"
#include "beatmap/eval.hpp"
#include "beatmap/fetch.hpp"
#include "beatmap/tsne.hpp"
#include "beatmap/umap.hpp"

namespace beatmap {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, const std::string& detail)
        : std::runtime_error("config: " + key + ": " + detail) {}
};

enum class Algorithm { pca, tsne, umap };

std::string_view to_string(Algorithm algorithm) noexcept;
std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept;

struct Subsample {
    std::size_t size = 12000;
    std::uint64_t seed = 0;
};

struct ClusterConfig {
    std::vector<Algorithm> algorithms = {Algorithm::umap};
    /// Records to cluster; empty means every per-patient record.
    std::vector<std::string> records;
    std::size_t resolution = clusters::kDefaultResolution;
    int dilation = clusters::kDefaultDilation;
    int connectivity = 8;
};

struct RunConfig {
    std::string cache_dir = "data/mitdb";
    std::string base_url = wfdb::kDefaultBaseUrl;
    std::vector<std::string> records;
    std::vector<beats::Lead> leads = {beats::Lead::MLII};
    std::vector<Algorithm> algorithms = {Algorithm::pca, Algorithm::tsne, Algorithm::umap};
    std::vector<eval::Task> tasks = {eval::Task::patient_id, eval::Task::gender, eval::Task::aami_multiclass,
                                     eval::Task::binary_arrhythmia};
    bool mixed = true;
    bool per_patient = true;
    std::vector<std::size_t> k_mixed = {11, 51, 101, 201};
    std::vector<std::size_t> k_per_patient = {5, 21, 41};
    std::optional<Subsample> subsample = Subsample{};
    beats::PipelineOptions pipeline;
    manifold::TsneParams tsne;
    manifold::UmapParams umap;
    ClusterConfig clusters;
    std::size_t trustworthiness_k = 0;
    std::string output_dir = "runs/default";
    std::uint64_t seed = 0;
};

RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical JSON echo of a config (every key present).
std::string config_to_json(const RunConfig& config);

} // namespace beatmap
