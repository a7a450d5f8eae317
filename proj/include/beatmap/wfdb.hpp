#pragma once

// Readers for the pieces of the WFDB format used by the MIT-BIH Arrhythmia
// Database: text headers, format-212 signal files and MIT annotation files.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "beatmap/matrix.hpp"

namespace beatmap::wfdb {

enum class Gender { male, female, unknown };

std::string_view to_string(Gender g) noexcept;

/// Thrown for malformed WFDB input. `line()` is 1-based for header errors
/// and 0 when the error is not tied to a header line.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string kind, std::size_t line, const std::string& detail);

    const std::string& kind() const noexcept { return kind_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string kind_;
    std::size_t line_;
};

/// A byte stream shorter than its declared contents.
class TruncatedData : public ParseError {
public:
    TruncatedData(std::size_t expected, std::size_t actual);

    std::size_t expected() const noexcept { return expected_; }
    std::size_t actual() const noexcept { return actual_; }

private:
    std::size_t expected_;
    std::size_t actual_;
};

struct SignalSpec {
    std::string file_name;
    std::string lead_name;
    int format_code = 0;
    double adc_gain = 0.0;   // adu per mV
    int adc_baseline = 0;    // adu
    int adc_resolution = 0;  // bits
    int adc_zero = 0;
    int initial_value = 0;   // adu
    int checksum = 0;
};

struct RecordHeader {
    std::string record_id;
    int n_signals = 0;
    double sampling_rate = 0.0;  // Hz
    std::int64_t n_samples = 0;
    std::vector<SignalSpec> signals;
    Gender subject_gender = Gender::unknown;
    std::optional<int> subject_age;
    std::vector<std::string> comments;

    std::vector<std::string> lead_names() const;
};

RecordHeader parse_header(std::string_view raw_text);

/// Signed 12-bit samples, one row per signal.
struct DigitalSignals {
    int n_signals = 0;
    std::int64_t n_samples = 0;
    std::vector<std::int16_t> adu;  // row-major, n_signals x n_samples

    std::int16_t at(int signal, std::int64_t sample) const {
        return adu[static_cast<std::size_t>(signal) * static_cast<std::size_t>(n_samples) +
                   static_cast<std::size_t>(sample)];
    }
};

/// Bytes needed to hold `n_values` format-212 samples.
std::size_t format212_byte_count(std::size_t n_values) noexcept;

DigitalSignals decode_format212(std::span<const std::uint8_t> raw, int n_signals, std::int64_t n_samples);

struct Annotation {
    std::int64_t sample_index = 0;
    int code = 0;           // MIT annotation code (0..49)
    char symbol = '?';
    bool unknown_symbol = false;
    int subtype = 0;
    int chan = 0;
    int num = 0;
    std::string aux;        // raw bytes, carried verbatim

    bool operator==(const Annotation&) const = default;
};

/// Maps an MIT annotation code to its mnemonic. Returns nullopt for codes
/// with no assigned symbol.
std::optional<char> symbol_for_code(int code) noexcept;

std::vector<Annotation> decode_annotations(std::span<const std::uint8_t> raw);

/// Calibrated samples in mV, one row per signal.
struct SignalMatrix {
    Matrix samples;
    std::vector<std::string> lead_names;
};

SignalMatrix apply_adc_calibration(const DigitalSignals& raw, const RecordHeader& header);

/// Record ids that make up the MIT-BIH Arrhythmia Database, ascending.
std::span<const std::string_view> mitbih_record_ids() noexcept;

/// Ids of records whose first lead is MLII and second lead is V1, ascending.
std::vector<std::string> select_study_subset(std::span<const RecordHeader> headers);

/// A fully loaded record: header, calibrated signals and annotations.
struct Record {
    RecordHeader header;
    SignalMatrix signals;
    std::vector<Annotation> annotations;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);

/// Loads `<dir>/<record_id>.{hea,dat,atr}`.
Record load_record(const std::string& dir, const std::string& record_id);

} // namespace beatmap::wfdb
