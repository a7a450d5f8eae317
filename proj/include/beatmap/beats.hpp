#pragma once

// Heartbeat segmentation, resampling, baseline removal and AAMI labeling.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "beatmap/matrix.hpp"
#include "beatmap/wfdb.hpp"

namespace beatmap::beats {

inline constexpr std::size_t kBeatWidth = 256;
inline constexpr int kDefaultMedianKernel = 127;

enum class Lead { MLII, V1 };

/// AAMI superclasses plus O for annotations outside the AAMI scheme. The
/// enumerator order is the tie-break order used when ranking classes.
enum class Aami { N, S, V, F, Q, O };
inline constexpr std::array<Aami, 6> kAamiClasses = {Aami::N, Aami::S, Aami::V, Aami::F, Aami::Q, Aami::O};

std::string_view to_string(Lead lead) noexcept;
std::optional<Lead> parse_lead(std::string_view name) noexcept;
std::string_view to_string(Aami cls) noexcept;
std::optional<Aami> parse_aami(std::string_view name) noexcept;

Aami map_to_aami(char symbol) noexcept;

/// Half-open sample range [begin, end) cut around one anchor.
struct BeatWindow {
    std::int64_t begin = 0;
    std::int64_t end = 0;
    std::int64_t anchor = 0;

    std::int64_t size() const noexcept { return end - begin; }
    bool operator==(const BeatWindow&) const = default;
};

/// Cuts one window per anchor. Consecutive anchors r_i < r_{i+1} with
/// RR = r_{i+1} - r_i are split at r_{i+1} - floor(RR / 3): the earlier beat
/// keeps the samples before the split, the later beat the samples from it
/// on. The first anchor has no backward span and the last anchor no forward
/// span, so the windows tile [anchors.front(), anchors.back()) exactly.
std::vector<BeatWindow> segment_beats(std::int64_t signal_length, std::span<const std::int64_t> anchors);

/// Linear interpolation onto `width` equispaced points over [0, len - 1].
std::vector<double> resample(std::span<const double> window, std::size_t width = kBeatWidth);

/// Subtracts a running median (odd `kernel`, reflect padding at the edges).
std::vector<double> remove_baseline(std::span<const double> beat, int kernel = kDefaultMedianKernel);

/// Running median alone, exposed for testing.
std::vector<double> median_filter(std::span<const double> x, int kernel);

enum class ProcessingOrder { resample_then_detrend, detrend_then_resample };

std::string_view to_string(ProcessingOrder order) noexcept;
std::optional<ProcessingOrder> parse_processing_order(std::string_view name) noexcept;

struct BeatMeta {
    std::string record_id;
    Lead lead = Lead::MLII;
    std::int64_t r_sample = 0;
    char symbol = '?';
    Aami aami = Aami::O;
    wfdb::Gender gender = wfdb::Gender::unknown;

    bool operator==(const BeatMeta&) const = default;
};

/// N x 256 waveforms with index-aligned metadata.
struct BeatMatrix {
    Matrix waveforms;
    std::vector<BeatMeta> meta;

    std::size_t size() const noexcept { return meta.size(); }
    BeatMatrix select(std::span<const std::size_t> indices) const;
    /// Indices of the rows belonging to one record, in row order.
    std::vector<std::size_t> rows_of(std::string_view record_id) const;
    /// Distinct record ids in row order.
    std::vector<std::string> record_ids() const;
};

struct PipelineOptions {
    int median_kernel = kDefaultMedianKernel;
    ProcessingOrder order = ProcessingOrder::resample_then_detrend;
};

/// One processed beat waveform from a window of calibrated samples.
std::vector<double> process_window(std::span<const double> signal, const BeatWindow& window,
                                   const PipelineOptions& options = {});

/// Segments every annotation of every record on each requested lead.
/// Rows are ordered by record (input order) and then by annotation order.
/// Throws std::runtime_error naming the record when a lead is missing.
std::map<Lead, BeatMatrix> build_dataset(std::span<const wfdb::Record> records, std::span<const Lead> leads,
                                         const PipelineOptions& options = {});

/// Counts of raw symbols and of AAMI classes.
struct ClassTotals {
    std::map<char, std::size_t> by_symbol;
    std::array<std::size_t, 6> by_aami{};
    std::size_t total = 0;
};

ClassTotals count_classes(const BeatMatrix& beats);

/// Record-stratified sample of `size` rows: each record contributes in
/// proportion to its beat count (largest-remainder rounding), rows drawn
/// without replacement with the given seed. Returned indices are sorted.
std::vector<std::size_t> stratified_subsample(const BeatMatrix& beats, std::size_t size, std::uint64_t seed);

} // namespace beatmap::beats
