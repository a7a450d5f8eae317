#pragma once

// The fetch / run / report / clusters commands behind the CLI.

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "beatmap/config.hpp"

namespace beatmap {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kCacheDirEnv = "BEATMAP_CACHE_DIR";

/// A failure tagged with the pipeline stage that raised it.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& detail)
        : std::runtime_error("[" + stage + "] " + detail), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

using Logger = std::function<void(const std::string&)>;

/// Replaces config.cache_dir with $BEATMAP_CACHE_DIR when it is set.
void apply_environment(RunConfig& config);

struct FetchFailure {
    std::string record_id;
    std::string message;
};

struct FetchSummary {
    std::vector<std::string> downloaded;
    std::vector<std::string> cached;
    std::vector<FetchFailure> failures;
    std::vector<std::string> subset;
};

/// Fetches all 48 records (retrying transient failures), keeps whatever
/// succeeded, selects the study subset and writes `fetch_manifest.json` to
/// the cache directory.
FetchSummary cmd_fetch(const RunConfig& config, const Logger& log);

/// Runs ingest, beats, embed, evaluate and clusters stages into
/// config.output_dir and writes `manifest.json`. Returns the manifest path.
std::filesystem::path cmd_run(const RunConfig& config, const Logger& log);

/// Reads the evaluation CSVs of a run and writes `summary_mixed.csv`,
/// `summary_per_patient.csv` and `summary.md`. Returns the markdown text.
std::string cmd_report(const std::filesystem::path& run_dir);

/// Clusters one stored embedding of a run. `embedding` is relative to the
/// run directory; outputs go to `out_dir` with the embedding's stem as
/// prefix. Returns the written files.
std::vector<std::filesystem::path> cmd_clusters(const std::filesystem::path& run_dir,
                                                const std::filesystem::path& embedding, beats::Lead lead,
                                                const clusters::ClusterOptions& options,
                                                const std::filesystem::path& out_dir);

} // namespace beatmap
