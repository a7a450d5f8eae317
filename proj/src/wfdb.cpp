#include "beatmap/wfdb.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

namespace beatmap::wfdb {

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        lines.push_back(line);
        if (end == text.size()) {
            break;
        }
        start = end + 1;
    }
    return lines;
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) {
            ++i;
        }
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') {
            ++j;
        }
        if (j > i) {
            out.push_back(line.substr(i, j - i));
        }
        i = j;
    }
    return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
    T value{};
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        return std::nullopt;
    }
    return value;
}

// Leading integer of a token such as "212x1+0", or nullopt.
std::optional<int> leading_int(std::string_view s) {
    std::size_t n = 0;
    while (n < s.size() && s[n] >= '0' && s[n] <= '9') {
        ++n;
    }
    if (n == 0) {
        return std::nullopt;
    }
    return parse_number<int>(s.substr(0, n));
}

bool is_blank(std::string_view line) {
    return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t'; });
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) {
        s.remove_suffix(1);
    }
    return s;
}

void parse_demographics(RecordHeader& header) {
    for (const auto& comment : header.comments) {
        auto tokens = split_ws(comment);
        if (tokens.size() < 2 || (tokens[1] != "M" && tokens[1] != "F")) {
            continue;
        }
        const auto age = parse_number<int>(tokens[0]);
        if (!age && tokens[0] != "?") {
            continue;
        }
        header.subject_gender = tokens[1] == "M" ? Gender::male : Gender::female;
        if (age && *age >= 0) {
            header.subject_age = *age;
        }
        return;
    }
}

SignalSpec parse_signal_line(std::string_view line, std::size_t line_no) {
    auto tokens = split_ws(line);
    if (tokens.size() < 2) {
        throw ParseError("signal-line", line_no, "expected at least file name and format");
    }
    SignalSpec spec;
    spec.file_name = std::string(tokens[0]);

    const auto format = leading_int(tokens[1]);
    if (!format) {
        throw ParseError("signal-line", line_no, "bad format field '" + std::string(tokens[1]) + "'");
    }
    spec.format_code = *format;
    if (spec.format_code != 212 || tokens[1] != "212") {
        throw ParseError("unsupported-format", line_no,
                         "format '" + std::string(tokens[1]) + "' is not supported (only 212)");
    }

    spec.adc_gain = 200.0;
    std::optional<int> explicit_baseline;
    if (tokens.size() > 2) {
        std::string_view gain_field = tokens[2];
        const auto slash = gain_field.find('/');
        if (slash != std::string_view::npos) {
            gain_field = gain_field.substr(0, slash);
        }
        const auto paren = gain_field.find('(');
        std::string_view gain_text = gain_field.substr(0, paren);
        if (paren != std::string_view::npos) {
            const auto close = gain_field.find(')', paren);
            if (close == std::string_view::npos) {
                throw ParseError("signal-line", line_no, "unterminated baseline in gain field");
            }
            explicit_baseline = parse_number<int>(gain_field.substr(paren + 1, close - paren - 1));
            if (!explicit_baseline) {
                throw ParseError("signal-line", line_no, "bad baseline in gain field");
            }
        }
        const auto gain = parse_number<double>(gain_text);
        if (!gain) {
            throw ParseError("signal-line", line_no, "bad gain '" + std::string(gain_text) + "'");
        }
        if (*gain < 0.0) {
            throw ParseError("signal-line", line_no, "adc gain must be positive");
        }
        if (*gain > 0.0) {
            spec.adc_gain = *gain;
        }
    }

    auto int_field = [&](std::size_t idx, int fallback, const char* name) {
        if (tokens.size() <= idx) {
            return fallback;
        }
        const auto v = parse_number<int>(tokens[idx]);
        if (!v) {
            throw ParseError("signal-line", line_no, std::string("bad ") + name + " '" + std::string(tokens[idx]) + "'");
        }
        return *v;
    };
    spec.adc_resolution = int_field(3, 12, "adc resolution");
    spec.adc_zero = int_field(4, 0, "adc zero");
    spec.initial_value = int_field(5, spec.adc_zero, "initial value");
    spec.checksum = int_field(6, 0, "checksum");
    spec.adc_baseline = explicit_baseline.value_or(spec.adc_zero);

    if (tokens.size() > 8) {
        // Description is the remainder of the line and may contain spaces.
        const auto pos = static_cast<std::size_t>(tokens[8].data() - line.data());
        spec.lead_name = std::string(trim(line.substr(pos)));
    }
    return spec;
}

std::uint16_t read_u16(std::span<const std::uint8_t> raw, std::size_t pos) {
    return static_cast<std::uint16_t>(raw[pos] | (raw[pos + 1] << 8));
}

constexpr int kSkip = 59;
constexpr int kNum = 60;
constexpr int kSub = 61;
constexpr int kChan = 62;
constexpr int kAux = 63;

constexpr std::array<std::string_view, 48> kRecordIds = {
    "100", "101", "102", "103", "104", "105", "106", "107", "108", "109", "111", "112",
    "113", "114", "115", "116", "117", "118", "119", "121", "122", "123", "124", "200",
    "201", "202", "203", "205", "207", "208", "209", "210", "212", "213", "214", "215",
    "217", "219", "220", "221", "222", "223", "228", "230", "231", "232", "233", "234",
};

bool record_id_less(const std::string& a, const std::string& b) {
    const auto na = parse_number<long>(a);
    const auto nb = parse_number<long>(b);
    if (na && nb && *na != *nb) {
        return *na < *nb;
    }
    return a < b;
}

} // namespace

std::string_view to_string(Gender g) noexcept {
    switch (g) {
    case Gender::male: return "M";
    case Gender::female: return "F";
    case Gender::unknown: break;
    }
    return "U";
}

ParseError::ParseError(std::string kind, std::size_t line, const std::string& detail)
    : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) + kind + ": " + detail),
      kind_(std::move(kind)),
      line_(line) {}

TruncatedData::TruncatedData(std::size_t expected, std::size_t actual)
    : ParseError("truncated", 0,
                 "expected at least " + std::to_string(expected) + " bytes, got " + std::to_string(actual)),
      expected_(expected),
      actual_(actual) {}

std::vector<std::string> RecordHeader::lead_names() const {
    std::vector<std::string> names;
    names.reserve(signals.size());
    for (const auto& s : signals) {
        names.push_back(s.lead_name);
    }
    return names;
}

RecordHeader parse_header(std::string_view raw_text) {
    const auto lines = split_lines(raw_text);
    RecordHeader header;

    std::size_t idx = 0;
    while (idx < lines.size() && (is_blank(lines[idx]) || trim(lines[idx]).starts_with('#'))) {
        ++idx;
    }
    if (idx == lines.size()) {
        throw ParseError("record-line", 1, "missing record line");
    }

    const std::size_t record_line_no = idx + 1;
    const auto tokens = split_ws(lines[idx]);
    if (tokens.size() < 2) {
        throw ParseError("record-line", record_line_no, "expected '<name> <n_signals> [fs [n_samples]]'");
    }
    std::string_view name = tokens[0];
    if (name.find('/') != std::string_view::npos) {
        throw ParseError("record-line", record_line_no, "multi-segment records are not supported");
    }
    header.record_id = std::string(name);

    const auto n_signals = parse_number<int>(tokens[1]);
    if (!n_signals) {
        throw ParseError("record-line", record_line_no, "bad signal count '" + std::string(tokens[1]) + "'");
    }
    if (*n_signals < 1) {
        throw ParseError("signal-count", record_line_no, "record declares no signals");
    }
    header.n_signals = *n_signals;

    header.sampling_rate = 250.0;
    if (tokens.size() > 2) {
        std::string_view fs = tokens[2];
        fs = fs.substr(0, std::min(fs.find('/'), fs.find('(')));
        const auto rate = parse_number<double>(fs);
        if (!rate || *rate <= 0.0) {
            throw ParseError("record-line", record_line_no, "bad sampling rate '" + std::string(tokens[2]) + "'");
        }
        header.sampling_rate = *rate;
    }
    if (tokens.size() > 3) {
        const auto n = parse_number<std::int64_t>(tokens[3]);
        if (!n) {
            throw ParseError("record-line", record_line_no, "bad sample count '" + std::string(tokens[3]) + "'");
        }
        header.n_samples = *n;
    }
    if (header.n_samples <= 0) {
        throw ParseError("record-line", record_line_no, "record must declare a positive sample count");
    }

    std::size_t last_signal_line = record_line_no;
    for (++idx; idx < lines.size(); ++idx) {
        const auto line = trim(lines[idx]);
        if (line.empty()) {
            continue;
        }
        if (line.starts_with('#')) {
            header.comments.emplace_back(trim(line.substr(1)));
            continue;
        }
        if (static_cast<int>(header.signals.size()) == header.n_signals) {
            throw ParseError("signal-count", idx + 1,
                             "more signal lines than the " + std::to_string(header.n_signals) + " declared");
        }
        header.signals.push_back(parse_signal_line(line, idx + 1));
        last_signal_line = idx + 1;
    }
    if (static_cast<int>(header.signals.size()) != header.n_signals) {
        throw ParseError("signal-count", last_signal_line,
                         "declared " + std::to_string(header.n_signals) + " signals, found " +
                             std::to_string(header.signals.size()));
    }

    parse_demographics(header);
    return header;
}

std::size_t format212_byte_count(std::size_t n_values) noexcept {
    return (n_values + 1) / 2 * 3;
}

DigitalSignals decode_format212(std::span<const std::uint8_t> raw, int n_signals, std::int64_t n_samples) {
    if (n_signals < 1 || n_samples < 0) {
        throw std::invalid_argument("decode_format212: bad dimensions");
    }
    const auto n_values = static_cast<std::size_t>(n_signals) * static_cast<std::size_t>(n_samples);
    const auto expected = format212_byte_count(n_values);
    if (raw.size() < expected) {
        throw TruncatedData(expected, raw.size());
    }

    DigitalSignals out;
    out.n_signals = n_signals;
    out.n_samples = n_samples;
    out.adu.resize(n_values);

    auto store = [&](std::size_t value_index, int v) {
        if (v & 0x800) {
            v -= 0x1000;
        }
        const std::size_t frame = value_index / static_cast<std::size_t>(n_signals);
        const std::size_t signal = value_index % static_cast<std::size_t>(n_signals);
        out.adu[signal * static_cast<std::size_t>(n_samples) + frame] = static_cast<std::int16_t>(v);
    };

    for (std::size_t v = 0, pos = 0; v < n_values; v += 2, pos += 3) {
        const int b0 = raw[pos];
        const int b1 = raw[pos + 1];
        const int b2 = raw[pos + 2];
        store(v, b0 | ((b1 & 0x0F) << 8));
        if (v + 1 < n_values) {
            store(v + 1, b2 | ((b1 & 0xF0) << 4));
        }
    }
    return out;
}

std::optional<char> symbol_for_code(int code) noexcept {
    // Index = MIT annotation code; '\0' marks codes without a mnemonic.
    static constexpr std::array<char, 42> kSymbols = {
        '\0', 'N', 'L', 'R', 'a', 'V', 'F', 'J', 'A', 'S', 'E', 'j', '/', 'Q', '~', '\0',
        '|',  '\0', 's', 'T', '*', 'D', '"', '=', 'p', 'B', '^', 't', '+', 'u', '?', '!',
        '[',  ']',  'e', 'n', '@', 'x', 'f', '(', ')', 'r',
    };
    if (code < 0 || code >= static_cast<int>(kSymbols.size()) || kSymbols[code] == '\0') {
        return std::nullopt;
    }
    return kSymbols[code];
}

std::vector<Annotation> decode_annotations(std::span<const std::uint8_t> raw) {
    std::vector<Annotation> out;
    std::int64_t time = 0;
    std::size_t pos = 0;

    while (true) {
        if (pos + 2 > raw.size()) {
            throw ParseError("unterminated", 0, "unterminated annotation stream");
        }
        const std::uint16_t word = read_u16(raw, pos);
        pos += 2;
        const int code = word >> 10;
        const int value = word & 0x3FF;

        if (code == 0 && value == 0) {
            return out;
        }
        switch (code) {
        case kSkip: {
            if (pos + 4 > raw.size()) {
                throw ParseError("unterminated", 0, "unterminated annotation stream (SKIP)");
            }
            const std::uint32_t high = read_u16(raw, pos);
            const std::uint32_t low = read_u16(raw, pos + 2);
            time += static_cast<std::int32_t>((high << 16) | low);
            pos += 4;
            break;
        }
        case kNum:
            if (!out.empty()) {
                out.back().num = static_cast<std::int8_t>(value & 0xFF);
            }
            break;
        case kSub:
            if (!out.empty()) {
                out.back().subtype = static_cast<std::int8_t>(value & 0xFF);
            }
            break;
        case kChan:
            if (!out.empty()) {
                out.back().chan = value & 0xFF;
            }
            break;
        case kAux: {
            const std::size_t len = static_cast<std::size_t>(value & 0xFF);
            const std::size_t padded = len + (len & 1);
            if (pos + padded > raw.size()) {
                throw ParseError("unterminated", 0, "unterminated annotation stream (AUX)");
            }
            if (!out.empty()) {
                out.back().aux.assign(reinterpret_cast<const char*>(raw.data() + pos), len);
            }
            pos += padded;
            break;
        }
        default: {
            time += value;
            if (time < 0 || (!out.empty() && time < out.back().sample_index)) {
                throw ParseError("non-monotone", 0, "annotation time moves backwards at byte " + std::to_string(pos - 2));
            }
            Annotation a;
            a.sample_index = time;
            a.code = code;
            if (const auto sym = symbol_for_code(code)) {
                a.symbol = *sym;
            } else {
                a.unknown_symbol = true;
            }
            if (!out.empty()) {
                a.chan = out.back().chan;
                a.num = out.back().num;
            }
            out.push_back(std::move(a));
            break;
        }
        }
    }
}

SignalMatrix apply_adc_calibration(const DigitalSignals& raw, const RecordHeader& header) {
    if (raw.n_signals != header.n_signals || raw.n_samples != header.n_samples ||
        static_cast<int>(header.signals.size()) != header.n_signals) {
        throw std::invalid_argument("apply_adc_calibration: signal dimensions do not match header of record " +
                                    header.record_id);
    }
    SignalMatrix out;
    out.samples = Matrix(static_cast<std::size_t>(raw.n_signals), static_cast<std::size_t>(raw.n_samples));
    out.lead_names = header.lead_names();
    for (int s = 0; s < raw.n_signals; ++s) {
        const auto& spec = header.signals[static_cast<std::size_t>(s)];
        auto row = out.samples.row(static_cast<std::size_t>(s));
        for (std::int64_t t = 0; t < raw.n_samples; ++t) {
            row[static_cast<std::size_t>(t)] = (raw.at(s, t) - spec.adc_baseline) / spec.adc_gain;
        }
    }
    return out;
}

std::span<const std::string_view> mitbih_record_ids() noexcept {
    return kRecordIds;
}

std::vector<std::string> select_study_subset(std::span<const RecordHeader> headers) {
    std::vector<std::string> ids;
    for (const auto& h : headers) {
        if (h.signals.size() >= 2 && h.signals[0].lead_name == "MLII" && h.signals[1].lead_name == "V1") {
            ids.push_back(h.record_id);
        }
    }
    std::sort(ids.begin(), ids.end(), record_id_less);
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Record load_record(const std::string& dir, const std::string& record_id) {
    const std::string base = dir + "/" + record_id;
    const auto hea = read_file_bytes(base + ".hea");
    Record rec;
    rec.header = parse_header(std::string_view(reinterpret_cast<const char*>(hea.data()), hea.size()));
    for (const auto& s : rec.header.signals) {
        if (s.file_name != rec.header.signals.front().file_name) {
            throw ParseError("signal-line", 0, "signals spread over several files are not supported");
        }
    }
    const auto dat = read_file_bytes(dir + "/" + rec.header.signals.front().file_name);
    const auto digital = decode_format212(dat, rec.header.n_signals, rec.header.n_samples);
    rec.signals = apply_adc_calibration(digital, rec.header);
    rec.annotations = decode_annotations(read_file_bytes(base + ".atr"));
    return rec;
}

} // namespace beatmap::wfdb
