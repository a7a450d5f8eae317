#include "beatmap/beats.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "beatmap/rng.hpp"

namespace beatmap::beats {

namespace {

// Mirror index into [0, n) without repeating the edge sample.
std::int64_t reflect(std::int64_t i, std::int64_t n) {
    if (n == 1) {
        return 0;
    }
    const std::int64_t period = 2 * (n - 1);
    i %= period;
    if (i < 0) {
        i += period;
    }
    return i < n ? i : period - i;
}

BeatWindow widen_short(const BeatWindow& w, std::int64_t signal_length) {
    if (w.size() >= 2) {
        return w;
    }
    BeatWindow out = w;
    out.begin = std::clamp<std::int64_t>(w.anchor, 0, signal_length - 2);
    out.end = out.begin + 2;
    return out;
}

} // namespace

std::string_view to_string(Lead lead) noexcept {
    return lead == Lead::MLII ? "MLII" : "V1";
}

std::optional<Lead> parse_lead(std::string_view name) noexcept {
    if (name == "MLII") {
        return Lead::MLII;
    }
    if (name == "V1") {
        return Lead::V1;
    }
    return std::nullopt;
}

std::string_view to_string(Aami cls) noexcept {
    static constexpr std::array<std::string_view, 6> kNames = {"N", "S", "V", "F", "Q", "O"};
    return kNames[static_cast<std::size_t>(cls)];
}

std::optional<Aami> parse_aami(std::string_view name) noexcept {
    for (auto cls : kAamiClasses) {
        if (to_string(cls) == name) {
            return cls;
        }
    }
    return std::nullopt;
}

Aami map_to_aami(char symbol) noexcept {
    switch (symbol) {
    case 'N': case '.': case 'L': case 'R': case 'e': case 'j':
        return Aami::N;
    case 'A': case 'S': case 'J': case 'a':
        return Aami::S;
    case 'V': case 'E':
        return Aami::V;
    case 'F':
        return Aami::F;
    case 'Q': case 'f': case '/':
        return Aami::Q;
    default:
        return Aami::O;
    }
}

std::vector<BeatWindow> segment_beats(std::int64_t signal_length, std::span<const std::int64_t> anchors) {
    if (anchors.size() < 2) {
        throw std::invalid_argument("insufficient anchors: need at least 2, got " + std::to_string(anchors.size()));
    }
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        if (anchors[i] < 0 || anchors[i] >= signal_length) {
            throw std::invalid_argument("anchor " + std::to_string(anchors[i]) + " outside signal of length " +
                                        std::to_string(signal_length));
        }
        if (i > 0 && anchors[i] <= anchors[i - 1]) {
            throw std::invalid_argument("anchors must be strictly ascending");
        }
    }

    std::vector<BeatWindow> windows(anchors.size());
    std::int64_t begin = anchors.front();
    for (std::size_t i = 0; i + 1 < anchors.size(); ++i) {
        const std::int64_t rr = anchors[i + 1] - anchors[i];
        const std::int64_t split = anchors[i + 1] - rr / 3;
        windows[i] = {begin, split, anchors[i]};
        begin = split;
    }
    windows.back() = {begin, anchors.back(), anchors.back()};
    return windows;
}

std::vector<double> resample(std::span<const double> window, std::size_t width) {
    if (window.size() < 2) {
        throw std::invalid_argument("resample: window needs at least 2 samples, got " + std::to_string(window.size()));
    }
    if (width < 2) {
        throw std::invalid_argument("resample: output width must be at least 2");
    }
    std::vector<double> out(width);
    const double step = static_cast<double>(window.size() - 1) / static_cast<double>(width - 1);
    out.front() = window.front();
    out.back() = window.back();
    for (std::size_t j = 1; j + 1 < width; ++j) {
        const double t = static_cast<double>(j) * step;
        const auto lo = static_cast<std::size_t>(t);
        const double frac = t - static_cast<double>(lo);
        if (frac == 0.0 || lo + 1 >= window.size()) {
            out[j] = window[lo];
        } else {
            out[j] = window[lo] + frac * (window[lo + 1] - window[lo]);
        }
    }
    return out;
}

std::vector<double> median_filter(std::span<const double> x, int kernel) {
    if (kernel < 1 || kernel % 2 == 0) {
        throw std::invalid_argument("median filter kernel must be a positive odd integer, got " + std::to_string(kernel));
    }
    const auto n = static_cast<std::int64_t>(x.size());
    std::vector<double> out(x.size());
    if (n == 0) {
        return out;
    }
    const std::int64_t half = kernel / 2;

    // Sorted sliding window: drop the outgoing sample, insert the incoming one.
    std::vector<double> window;
    window.reserve(static_cast<std::size_t>(kernel));
    for (std::int64_t k = -half; k <= half; ++k) {
        window.push_back(x[static_cast<std::size_t>(reflect(k, n))]);
    }
    std::sort(window.begin(), window.end());
    out[0] = window[static_cast<std::size_t>(half)];
    for (std::int64_t i = 1; i < n; ++i) {
        const double outgoing = x[static_cast<std::size_t>(reflect(i - 1 - half, n))];
        const double incoming = x[static_cast<std::size_t>(reflect(i + half, n))];
        window.erase(std::lower_bound(window.begin(), window.end(), outgoing));
        window.insert(std::upper_bound(window.begin(), window.end(), incoming), incoming);
        out[static_cast<std::size_t>(i)] = window[static_cast<std::size_t>(half)];
    }
    return out;
}

std::vector<double> remove_baseline(std::span<const double> beat, int kernel) {
    auto baseline = median_filter(beat, kernel);
    for (std::size_t i = 0; i < beat.size(); ++i) {
        baseline[i] = beat[i] - baseline[i];
    }
    return baseline;
}

std::string_view to_string(ProcessingOrder order) noexcept {
    return order == ProcessingOrder::resample_then_detrend ? "resample_then_detrend" : "detrend_then_resample";
}

std::optional<ProcessingOrder> parse_processing_order(std::string_view name) noexcept {
    if (name == "resample_then_detrend") {
        return ProcessingOrder::resample_then_detrend;
    }
    if (name == "detrend_then_resample") {
        return ProcessingOrder::detrend_then_resample;
    }
    return std::nullopt;
}

BeatMatrix BeatMatrix::select(std::span<const std::size_t> indices) const {
    BeatMatrix out;
    out.waveforms = waveforms.select_rows(indices);
    out.meta.reserve(indices.size());
    for (auto i : indices) {
        out.meta.push_back(meta[i]);
    }
    return out;
}

std::vector<std::size_t> BeatMatrix::rows_of(std::string_view record_id) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < meta.size(); ++i) {
        if (meta[i].record_id == record_id) {
            rows.push_back(i);
        }
    }
    return rows;
}

std::vector<std::string> BeatMatrix::record_ids() const {
    std::vector<std::string> ids;
    for (const auto& m : meta) {
        if (ids.empty() || ids.back() != m.record_id) {
            if (std::find(ids.begin(), ids.end(), m.record_id) == ids.end()) {
                ids.push_back(m.record_id);
            }
        }
    }
    return ids;
}

std::vector<double> process_window(std::span<const double> signal, const BeatWindow& window,
                                   const PipelineOptions& options) {
    const auto raw = signal.subspan(static_cast<std::size_t>(window.begin), static_cast<std::size_t>(window.size()));
    if (options.order == ProcessingOrder::resample_then_detrend) {
        return remove_baseline(resample(raw), options.median_kernel);
    }
    return resample(remove_baseline(raw, options.median_kernel));
}

std::map<Lead, BeatMatrix> build_dataset(std::span<const wfdb::Record> records, std::span<const Lead> leads,
                                         const PipelineOptions& options) {
    std::vector<const wfdb::Record*> ordered;
    for (const auto& r : records) {
        ordered.push_back(&r);
    }
    std::stable_sort(ordered.begin(), ordered.end(), [](const wfdb::Record* a, const wfdb::Record* b) {
        const auto& x = a->header.record_id;
        const auto& y = b->header.record_id;
        return x.size() != y.size() ? x.size() < y.size() : x < y;
    });

    std::size_t total = 0;
    for (const auto* r : ordered) {
        total += r->annotations.size();
    }

    std::map<Lead, BeatMatrix> out;
    for (const Lead lead : leads) {
        BeatMatrix bm;
        bm.waveforms = Matrix(total, kBeatWidth);
        bm.meta.reserve(total);
        std::size_t row = 0;

        for (const auto* rec : ordered) {
            const auto& names = rec->signals.lead_names;
            const auto it = std::find(names.begin(), names.end(), to_string(lead));
            if (it == names.end()) {
                throw std::runtime_error("record " + rec->header.record_id + " has no " + std::string(to_string(lead)) +
                                         " lead");
            }
            const auto signal = rec->signals.samples.row(static_cast<std::size_t>(it - names.begin()));
            const auto length = static_cast<std::int64_t>(signal.size());

            // Annotations sharing a sample share one window.
            std::vector<std::int64_t> anchors;
            for (const auto& a : rec->annotations) {
                if (a.sample_index >= length) {
                    throw std::runtime_error("record " + rec->header.record_id + ": annotation at sample " +
                                             std::to_string(a.sample_index) + " is past the end of the signal");
                }
                if (anchors.empty() || anchors.back() != a.sample_index) {
                    anchors.push_back(a.sample_index);
                }
            }
            if (anchors.size() < 2) {
                throw std::runtime_error("record " + rec->header.record_id + ": insufficient anchors");
            }
            const auto windows = segment_beats(length, anchors);

            std::size_t w = 0;
            for (const auto& a : rec->annotations) {
                while (windows[w].anchor != a.sample_index) {
                    ++w;
                }
                const auto beat = process_window(signal, widen_short(windows[w], length), options);
                std::copy(beat.begin(), beat.end(), bm.waveforms.row(row).begin());
                bm.meta.push_back({rec->header.record_id, lead, a.sample_index, a.symbol, map_to_aami(a.symbol),
                                   rec->header.subject_gender});
                ++row;
            }
        }
        out.emplace(lead, std::move(bm));
    }
    return out;
}

ClassTotals count_classes(const BeatMatrix& beats) {
    ClassTotals totals;
    for (const auto& m : beats.meta) {
        ++totals.by_symbol[m.symbol];
        ++totals.by_aami[static_cast<std::size_t>(m.aami)];
        ++totals.total;
    }
    return totals;
}

std::vector<std::size_t> stratified_subsample(const BeatMatrix& beats, std::size_t size, std::uint64_t seed) {
    const std::size_t n = beats.size();
    if (size >= n) {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        return all;
    }

    const auto ids = beats.record_ids();
    std::vector<std::vector<std::size_t>> groups(ids.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto g = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), beats.meta[i].record_id) - ids.begin());
        groups[g].push_back(i);
    }

    std::vector<std::size_t> quota(ids.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double exact = static_cast<double>(size) * static_cast<double>(groups[g].size()) / static_cast<double>(n);
        quota[g] = static_cast<std::size_t>(exact);
        assigned += quota[g];
        remainders.emplace_back(exact - static_cast<double>(quota[g]), g);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < size; ++k) {
        ++quota[remainders[k % remainders.size()].second];
        ++assigned;
    }

    Rng rng(seed);
    std::vector<std::size_t> picked;
    picked.reserve(size);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        auto& members = groups[g];
        rng.shuffle(std::span<std::size_t>(members));
        picked.insert(picked.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[g]));
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

} // namespace beatmap::beats
