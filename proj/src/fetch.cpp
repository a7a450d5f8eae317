#include "beatmap/fetch.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>

#include <httplib.h>

#include "beatmap/wfdb.hpp"

namespace beatmap::wfdb {

namespace fs = std::filesystem;

namespace {

std::string kind_name(FetchError::Kind kind) {
    switch (kind) {
    case FetchError::Kind::not_found: return "not found";
    case FetchError::Kind::http: return "http error";
    case FetchError::Kind::network: return "network error";
    case FetchError::Kind::corrupt: return "corrupt download";
    }
    return "error";
}

struct UrlParts {
    std::string origin;  // scheme://host[:port]
    std::string path;    // always ends with '/'
};

UrlParts split_url(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw std::invalid_argument("base url must include a scheme: " + base_url);
    }
    const auto path_start = base_url.find('/', scheme_end + 3);
    UrlParts parts;
    if (path_start == std::string::npos) {
        parts.origin = base_url;
        parts.path = "/";
    } else {
        parts.origin = base_url.substr(0, path_start);
        parts.path = base_url.substr(path_start);
    }
    if (parts.path.back() != '/') {
        parts.path += '/';
    }
    return parts;
}

void check_record_id(const std::string& id) {
    if (id.empty() || id.size() > 64 ||
        !std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isalnum(c) || c == '_' || c == '-'; })) {
        throw std::invalid_argument("invalid record id '" + id + "'");
    }
}

std::mutex& record_mutex(const std::string& key) {
    static std::mutex registry_guard;
    static std::map<std::string, std::unique_ptr<std::mutex>> registry;
    std::lock_guard lock(registry_guard);
    auto& slot = registry[key];
    if (!slot) {
        slot = std::make_unique<std::mutex>();
    }
    return *slot;
}

class FileLock {
public:
    explicit FileLock(const fs::path& path) {
        fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
        if (fd_ < 0) {
            throw std::runtime_error("cannot create lock file " + path.string());
        }
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw std::runtime_error("cannot lock " + path.string());
        }
    }
    ~FileLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
};

std::string as_text(const std::vector<std::uint8_t>& bytes) {
    return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

// Throws ParseError (or std::runtime_error for I/O) when the files do not
// form a readable record.
void validate(const fs::path& hea, const fs::path& dat, const fs::path& atr) {
    const auto header = parse_header(as_text(read_file_bytes(hea.string())));
    const auto needed = format212_byte_count(static_cast<std::size_t>(header.n_signals) *
                                             static_cast<std::size_t>(header.n_samples));
    const auto actual = fs::file_size(dat);
    if (actual < needed) {
        throw TruncatedData(needed, static_cast<std::size_t>(actual));
    }
    decode_annotations(read_file_bytes(atr.string()));
}

void write_file(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

} // namespace

FetchError::FetchError(Kind kind, std::string record_id, int status, const std::string& detail)
    : std::runtime_error("record " + record_id + ": " + kind_name(kind) +
                         (status > 0 ? " (HTTP " + std::to_string(status) + ")" : std::string()) +
                         (detail.empty() ? std::string() : ": " + detail)),
      kind_(kind),
      record_id_(std::move(record_id)),
      status_(status) {}

bool FetchError::retriable() const noexcept {
    if (kind_ == Kind::network) {
        return true;
    }
    return kind_ == Kind::http && (status_ >= 500 || status_ == 429 || status_ == 408);
}

RecordFiles cached_paths(const fs::path& cache_dir, const std::string& record_id) {
    return {cache_dir / (record_id + ".hea"), cache_dir / (record_id + ".dat"), cache_dir / (record_id + ".atr"), false};
}

bool is_cached(const fs::path& cache_dir, const std::string& record_id) {
    const auto paths = cached_paths(cache_dir, record_id);
    if (!fs::exists(paths.hea) || !fs::exists(paths.dat) || !fs::exists(paths.atr)) {
        return false;
    }
    try {
        validate(paths.hea, paths.dat, paths.atr);
    } catch (const std::exception&) {
        return false;
    }
    return true;
}

RecordFiles fetch_record(const std::string& record_id, const std::string& base_url, const fs::path& cache_dir) {
    check_record_id(record_id);
    fs::create_directories(cache_dir);

    std::lock_guard in_process(record_mutex(fs::absolute(cache_dir).string() + "/" + record_id));
    FileLock cross_process(cache_dir / (record_id + ".lock"));

    auto paths = cached_paths(cache_dir, record_id);
    if (is_cached(cache_dir, record_id)) {
        return paths;
    }

    const auto url = split_url(base_url);
    httplib::Client client(url.origin);
    client.set_follow_location(true);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);

    const std::array<std::pair<std::string, fs::path>, 3> targets = {{
        {record_id + ".hea", paths.hea},
        {record_id + ".dat", paths.dat},
        {record_id + ".atr", paths.atr},
    }};
    std::array<fs::path, 3> temps;
    auto cleanup = [&] {
        std::error_code ec;
        for (const auto& t : temps) {
            if (!t.empty()) {
                fs::remove(t, ec);
            }
        }
    };

    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto& [name, final_path] = targets[i];
        auto res = client.Get(url.path + name);
        if (!res) {
            cleanup();
            throw FetchError(FetchError::Kind::network, record_id, 0, httplib::to_string(res.error()));
        }
        if (res->status == 404) {
            cleanup();
            throw FetchError(FetchError::Kind::not_found, record_id, 404, name);
        }
        if (res->status != 200) {
            cleanup();
            throw FetchError(FetchError::Kind::http, record_id, res->status, name);
        }
        temps[i] = final_path;
        temps[i] += ".part";
        write_file(temps[i], res->body);
    }

    try {
        validate(temps[0], temps[1], temps[2]);
    } catch (const std::exception& e) {
        cleanup();
        throw FetchError(FetchError::Kind::corrupt, record_id, 0, e.what());
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
        fs::rename(temps[i], targets[i].second);
    }
    paths.downloaded = true;
    return paths;
}

} // namespace beatmap::wfdb
