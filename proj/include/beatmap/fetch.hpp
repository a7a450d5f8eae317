#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

namespace beatmap::wfdb {

inline constexpr const char* kDefaultBaseUrl = "https://physionet.org/files/mitdb/1.0.0/";

class FetchError : public std::runtime_error {
public:
    enum class Kind { not_found, http, network, corrupt };

    FetchError(Kind kind, std::string record_id, int status, const std::string& detail);

    Kind kind() const noexcept { return kind_; }
    const std::string& record_id() const noexcept { return record_id_; }
    /// HTTP status, or 0 when no response was received.
    int status() const noexcept { return status_; }
    /// Transient failures (5xx, 429, connection errors) may succeed on retry.
    bool retriable() const noexcept;

private:
    Kind kind_;
    std::string record_id_;
    int status_;
};

struct RecordFiles {
    std::filesystem::path hea;
    std::filesystem::path dat;
    std::filesystem::path atr;
    bool downloaded = false;  // false on a cache hit
};

/// Paths of `<cache_dir>/<record_id>.{hea,dat,atr}`.
RecordFiles cached_paths(const std::filesystem::path& cache_dir, const std::string& record_id);

/// True when all three files exist and parse.
bool is_cached(const std::filesystem::path& cache_dir, const std::string& record_id);

/// Ensures the record is present in the cache, downloading missing files
/// with plain GET requests against `base_url` (`<base_url><record_id>.hea`
/// and so on). Downloads are written to temporary files, verified by
/// re-parsing, and then renamed into place. Concurrent calls for the same
/// record are serialized through a per-record lock (in-process mutex plus an
/// advisory file lock on `<record_id>.lock`).
RecordFiles fetch_record(const std::string& record_id, const std::string& base_url,
                         const std::filesystem::path& cache_dir);

} // namespace beatmap::wfdb
