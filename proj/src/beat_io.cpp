#include "beatmap/beat_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "beatmap/csv.hpp"

namespace beatmap::beats {

namespace {

constexpr char kMagic[4] = {'C', 'M', 'B', 'M'};

wfdb::Gender parse_gender(std::string_view s, const std::string& file, std::size_t row) {
    if (s == "M") {
        return wfdb::Gender::male;
    }
    if (s == "F") {
        return wfdb::Gender::female;
    }
    if (s == "U") {
        return wfdb::Gender::unknown;
    }
    throw csv::CsvError(file, row, "bad gender '" + std::string(s) + "'");
}

template <typename T>
void put_le(std::ostream& out, T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bytes[i] = static_cast<char>(u & 0xFF);
        u = static_cast<U>(u >> 8);
    }
    out.write(bytes, sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
        throw std::runtime_error("beat cache: unexpected end of file");
    }
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = sizeof(T); i-- > 0;) {
        u = static_cast<std::make_unsigned_t<T>>((u << 8) | bytes[i]);
    }
    return static_cast<T>(u);
}

std::uint8_t gender_code(wfdb::Gender g) {
    switch (g) {
    case wfdb::Gender::male: return 0;
    case wfdb::Gender::female: return 1;
    case wfdb::Gender::unknown: break;
    }
    return 2;
}

} // namespace

void write_csv(std::ostream& out, const BeatMatrix& beats) {
    std::vector<std::string> fields = {"record_id", "r_sample", "symbol", "aami", "gender"};
    for (std::size_t s = 0; s < kBeatWidth; ++s) {
        fields.push_back("s" + std::to_string(s));
    }
    csv::write_row(out, fields);
    for (std::size_t i = 0; i < beats.size(); ++i) {
        const auto& m = beats.meta[i];
        fields.clear();
        fields.push_back(m.record_id);
        fields.push_back(std::to_string(m.r_sample));
        fields.emplace_back(1, m.symbol);
        fields.emplace_back(to_string(m.aami));
        fields.emplace_back(wfdb::to_string(m.gender));
        for (double v : beats.waveforms.row(i)) {
            fields.push_back(csv::format_double(v));
        }
        csv::write_row(out, fields);
    }
}

void write_csv(const std::filesystem::path& path, const BeatMatrix& beats) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    write_csv(out, beats);
}

BeatMatrix read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    const std::string name = path.string();
    const auto rows = csv::read_all(in, name);
    if (rows.empty() || rows.front().size() != 5 + kBeatWidth || rows.front()[0] != "record_id") {
        throw csv::CsvError(name, 1, "missing or malformed header");
    }
    // Lead is not a CSV column; it is carried by the file name.
    const auto stem = path.stem().string();
    const auto lead = parse_lead(stem.substr(stem.find('_') + 1)).value_or(Lead::MLII);

    BeatMatrix beats;
    beats.waveforms = Matrix(rows.size() - 1, kBeatWidth);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r];
        const std::size_t row_no = r + 1;
        if (f.size() != 5 + kBeatWidth) {
            throw csv::CsvError(name, row_no, "expected " + std::to_string(5 + kBeatWidth) + " fields, got " +
                                                  std::to_string(f.size()));
        }
        BeatMeta m;
        m.record_id = f[0];
        m.lead = lead;
        m.r_sample = csv::parse_field<std::int64_t>(f[1], name, row_no, "r_sample");
        if (f[2].size() != 1) {
            throw csv::CsvError(name, row_no, "symbol must be one character");
        }
        m.symbol = f[2][0];
        const auto aami = parse_aami(f[3]);
        if (!aami) {
            throw csv::CsvError(name, row_no, "bad AAMI class '" + f[3] + "'");
        }
        m.aami = *aami;
        m.gender = parse_gender(f[4], name, row_no);
        auto out_row = beats.waveforms.row(r - 1);
        for (std::size_t s = 0; s < kBeatWidth; ++s) {
            out_row[s] = csv::parse_field<double>(f[5 + s], name, row_no, "s" + std::to_string(s));
        }
        beats.meta.push_back(std::move(m));
    }
    return beats;
}

void write_binary(std::ostream& out, const BeatMatrix& beats) {
    out.write(kMagic, 4);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(beats.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kBeatWidth));
    for (double v : beats.waveforms.values()) {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    for (const auto& m : beats.meta) {
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(m.record_id.size()));
        out.write(m.record_id.data(), static_cast<std::streamsize>(m.record_id.size()));
        put_le<std::uint8_t>(out, m.lead == Lead::MLII ? 0 : 1);
        put_le<std::int64_t>(out, m.r_sample);
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(m.symbol));
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(m.aami));
        put_le<std::uint8_t>(out, gender_code(m.gender));
    }
}

void write_binary(const std::filesystem::path& path, const BeatMatrix& beats) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    write_binary(out, beats);
}

BeatMatrix read_binary(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("beat cache: bad magic");
    }
    const auto n = get_le<std::uint32_t>(in);
    const auto width = get_le<std::uint32_t>(in);
    if (width != kBeatWidth) {
        throw std::runtime_error("beat cache: unsupported width " + std::to_string(width));
    }
    BeatMatrix beats;
    beats.waveforms = Matrix(n, width);
    for (double& v : beats.waveforms.values()) {
        v = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in)));
    }
    beats.meta.resize(n);
    for (auto& m : beats.meta) {
        const auto len = get_le<std::uint16_t>(in);
        m.record_id.resize(len);
        if (!in.read(m.record_id.data(), len)) {
            throw std::runtime_error("beat cache: unexpected end of file");
        }
        const auto lead = get_le<std::uint8_t>(in);
        if (lead > 1) {
            throw std::runtime_error("beat cache: bad lead code");
        }
        m.lead = lead == 0 ? Lead::MLII : Lead::V1;
        m.r_sample = get_le<std::int64_t>(in);
        m.symbol = static_cast<char>(get_le<std::uint8_t>(in));
        const auto aami = get_le<std::uint8_t>(in);
        const auto gender = get_le<std::uint8_t>(in);
        if (aami > 5 || gender > 2) {
            throw std::runtime_error("beat cache: bad class code");
        }
        m.aami = static_cast<Aami>(aami);
        m.gender = gender == 0 ? wfdb::Gender::male : gender == 1 ? wfdb::Gender::female : wfdb::Gender::unknown;
    }
    return beats;
}

BeatMatrix read_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return read_binary(in);
}

} // namespace beatmap::beats
