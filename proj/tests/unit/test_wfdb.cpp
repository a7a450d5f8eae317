#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "beatmap/csv.hpp"
#include "beatmap/wfdb.hpp"
#include "doctest.h"

using namespace beatmap;
using namespace beatmap::wfdb;

namespace {

const std::string kData = BEATMAP_TEST_DATA;

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Test-only format-212 packer.
std::vector<std::uint8_t> encode212(const std::vector<int>& values) {
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < values.size(); i += 2) {
        const unsigned a = static_cast<unsigned>(values[i]) & 0xFFF;
        const unsigned b = i + 1 < values.size() ? static_cast<unsigned>(values[i + 1]) & 0xFFF : 0;
        out.push_back(static_cast<std::uint8_t>(a & 0xFF));
        out.push_back(static_cast<std::uint8_t>(((a >> 8) & 0x0F) | ((b >> 8) << 4)));
        out.push_back(static_cast<std::uint8_t>(b & 0xFF));
    }
    return out;
}

struct OracleAnnotation {
    std::int64_t sample;
    char symbol;
    int subtype, chan, num;
    std::size_t aux_len;
};

std::vector<OracleAnnotation> read_rdann(const std::string& id) {
    std::ifstream in(kData + "/oracle/" + id + "_rdann.csv");
    const auto rows = csv::read_all(in, id);
    std::vector<OracleAnnotation> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r];
        out.push_back({std::stoll(f[0]), f[1][0], std::stoi(f[2]), std::stoi(f[3]), std::stoi(f[4]),
                       static_cast<std::size_t>(std::stoul(f[5]))});
    }
    return out;
}

std::string header_line_error(const std::string& text) {
    try {
        parse_header(text);
    } catch (const ParseError& e) {
        return e.kind() + "@" + std::to_string(e.line());
    }
    return "none";
}

} // namespace

TEST_CASE("parse_header reads record 100") {
    const auto h = parse_header(read_text(kData + "/mitdb/100.hea"));
    CHECK(h.record_id == "100");
    CHECK(h.n_signals == 2);
    CHECK(h.sampling_rate == 360.0);
    CHECK(h.n_samples == 650000);
    REQUIRE(h.signals.size() == 2);
    // The distributed header names the second lead V5, not V1.
    CHECK(h.lead_names() == std::vector<std::string>{"MLII", "V5"});
    CHECK(h.signals[0].format_code == 212);
    CHECK(h.signals[0].adc_gain == 200.0);
    CHECK(h.signals[0].adc_baseline == 1024);
    CHECK(h.signals[0].initial_value == 995);
    CHECK(h.signals[1].initial_value == 1011);
    CHECK(h.subject_gender == Gender::male);
    CHECK(h.subject_age == 69);
}

TEST_CASE("parse_header reads record 101 demographics") {
    const auto h = parse_header(read_text(kData + "/mitdb/101.hea"));
    CHECK(h.lead_names() == std::vector<std::string>{"MLII", "V1"});
    CHECK(h.subject_gender == Gender::female);
    CHECK(h.subject_age == 75);
}

TEST_CASE("parse_header echoes a synthetic one-signal header") {
    const auto h = parse_header("syn 1 360 1000\nsyn.dat 212 200 11 1024 7 0 0 MLII\n");
    CHECK(h.n_signals == 1);
    CHECK(h.n_samples == 1000);
    CHECK(h.signals[0].adc_gain == 200.0);
    CHECK(h.signals[0].adc_baseline == 1024);
    CHECK(h.signals[0].initial_value == 7);
    CHECK(h.signals[0].lead_name == "MLII");
    CHECK(h.subject_gender == Gender::unknown);
    CHECK_FALSE(h.subject_age.has_value());
}

TEST_CASE("parse_header gain field forms") {
    auto h = parse_header("r 1 360 10\nr.dat 212 100(5)/mV 11 0 0 0 0 I\n");
    CHECK(h.signals[0].adc_gain == 100.0);
    CHECK(h.signals[0].adc_baseline == 5);
    h = parse_header("r 1 360 10\nr.dat 212 0 11 3\n");
    CHECK(h.signals[0].adc_gain == 200.0);
    CHECK(h.signals[0].adc_baseline == 3);
    h = parse_header("r 1 360 10\nr.dat 212\n");
    CHECK(h.signals[0].adc_gain == 200.0);
}

TEST_CASE("parse_header errors name kind and line") {
    CHECK(header_line_error("") == "record-line@1");
    CHECK(header_line_error("100 0 360 650000\n") == "signal-count@1");
    CHECK(header_line_error("# comment\n100 x 360\n") == "record-line@2");
    CHECK(header_line_error("100 2 360 650000\n100.dat 212 200 11 1024 995 0 0 MLII\n") == "signal-count@2");
    CHECK(header_line_error("100 1 360 650000\n100.dat 16 200 11 1024 995 0 0 MLII\n") == "unsupported-format@2");
    CHECK(header_line_error("100/2 1 360 650000\n") == "record-line@1");
}

TEST_CASE("parse_header gender from first matching comment") {
    auto h = parse_header("r 1 360 10\nr.dat 212\n# Medications\n# ? F x\n");
    CHECK(h.subject_gender == Gender::female);
    CHECK_FALSE(h.subject_age.has_value());
    h = parse_header("r 1 360 10\nr.dat 212\n# 52 M\n# 40 F\n");
    CHECK(h.subject_gender == Gender::male);
    CHECK(h.subject_age == 52);
}

TEST_CASE("decode_format212 examples") {
    const std::vector<std::uint8_t> zero = {0x00, 0x00, 0x00};
    auto d = decode_format212(zero, 2, 1);
    CHECK(d.at(0, 0) == 0);
    CHECK(d.at(1, 0) == 0);

    const std::vector<std::uint8_t> neg = {0xFF, 0x0F, 0x00};
    d = decode_format212(neg, 2, 1);
    CHECK(d.at(0, 0) == -1);
    CHECK(d.at(1, 0) == 0);

    const std::vector<std::uint8_t> mixed = {0x34, 0x12, 0x56};
    d = decode_format212(mixed, 2, 1);
    CHECK(d.at(0, 0) == 564);
    CHECK(d.at(1, 0) == 342);
}

TEST_CASE("decode_format212 interleaves frames and ignores odd trailing sample") {
    // One signal, 3 samples: the final group carries only one value.
    const auto raw = encode212({5, -6, 2047, -2048});
    auto d = decode_format212(raw, 1, 3);
    CHECK(d.at(0, 0) == 5);
    CHECK(d.at(0, 1) == -6);
    CHECK(d.at(0, 2) == 2047);
    // Two signals, two frames: values are s0f0, s1f0, s0f1, s1f1.
    d = decode_format212(encode212({1, 2, 3, 4}), 2, 2);
    CHECK(d.at(0, 0) == 1);
    CHECK(d.at(1, 0) == 2);
    CHECK(d.at(0, 1) == 3);
    CHECK(d.at(1, 1) == 4);
}

TEST_CASE("decode_format212 reports truncation") {
    const std::vector<std::uint8_t> raw = {0x00, 0x00, 0x00, 0x00};
    try {
        decode_format212(raw, 2, 2);
        FAIL("expected TruncatedData");
    } catch (const TruncatedData& e) {
        CHECK(e.expected() == 6);
        CHECK(e.actual() == 4);
    }
}

TEST_CASE("format 212 round trip over random streams") {
    std::mt19937_64 gen(7);
    std::uniform_int_distribution<int> value(-2048, 2047);
    std::uniform_int_distribution<int> bytes(0, 255);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t groups = 1 + gen() % 50;
        std::vector<std::uint8_t> raw(groups * 3);
        for (auto& b : raw) {
            b = static_cast<std::uint8_t>(bytes(gen));
        }
        const auto d = decode_format212(raw, 2, static_cast<std::int64_t>(groups));
        std::vector<int> interleaved;
        for (std::size_t f = 0; f < groups; ++f) {
            interleaved.push_back(d.at(0, static_cast<std::int64_t>(f)));
            interleaved.push_back(d.at(1, static_cast<std::int64_t>(f)));
        }
        REQUIRE(encode212(interleaved) == raw);
        for (int v : interleaved) {
            CHECK((v >= -2048 && v <= 2047));
        }
    }
    std::vector<int> values(1000);
    for (int& v : values) {
        v = value(gen);
    }
    const auto d = decode_format212(encode212(values), 1, 1000);
    for (std::size_t i = 0; i < values.size(); ++i) {
        REQUIRE(d.at(0, static_cast<std::int64_t>(i)) == values[i]);
    }
}

TEST_CASE("decode_annotations single words") {
    const std::vector<std::uint8_t> one = {0x01, 0x04, 0x00, 0x00};
    const auto a = decode_annotations(one);
    REQUIRE(a.size() == 1);
    CHECK(a[0].sample_index == 1);
    CHECK(a[0].symbol == 'N');
    CHECK(decode_annotations(std::vector<std::uint8_t>{0x00, 0x00}).empty());
}

TEST_CASE("decode_annotations rejects unterminated streams") {
    try {
        decode_annotations(std::vector<std::uint8_t>{0x01, 0x04});
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("unterminated annotation stream") != std::string::npos);
    }
    CHECK_THROWS_AS(decode_annotations(std::vector<std::uint8_t>{}), ParseError);
}

TEST_CASE("decode_annotations escape semantics") {
    // SKIP +100000 (PDP-11 long: high word 0x0001, low word 0x86A0), then
    // N at +5 with SUB 3, CHN 2, NUM -1; V at +1 with AUX "ab"; terminator.
    const std::vector<std::uint8_t> raw = {
        0x00, 0xEC, 0x01, 0x00, 0xA0, 0x86,  // SKIP
        0x05, 0x04,                          // N, +5
        0x03, 0xF4,                          // SUB 3
        0x02, 0xF8,                          // CHN 2
        0xFF, 0xF0,                          // NUM -1
        0x01, 0x14,                          // V, +1
        0x02, 0xFC, 'a', 'b',                // AUX len 2
        0x00, 0x00};
    const auto a = decode_annotations(raw);
    REQUIRE(a.size() == 2);
    CHECK(a[0].sample_index == 100005);
    CHECK(a[0].subtype == 3);
    // CHN and NUM persist until changed.
    CHECK(a[0].chan == 2);
    CHECK(a[0].num == -1);
    CHECK(a[1].sample_index == 100006);
    CHECK(a[1].symbol == 'V');
    CHECK(a[1].chan == 2);
    CHECK(a[1].num == -1);
    CHECK(a[1].aux == "ab");
}

TEST_CASE("decode_annotations keeps unknown codes") {
    const std::vector<std::uint8_t> raw = {0x01, 0xB4, 0x00, 0x00}; // code 45
    const auto a = decode_annotations(raw);
    REQUIRE(a.size() == 1);
    CHECK(a[0].unknown_symbol);
    CHECK(a[0].code == 45);
}

TEST_CASE("decode_annotations matches the reference reader on records 100 and 101") {
    for (const std::string id : {"100", "101"}) {
        CAPTURE(id);
        const auto raw = read_file_bytes(kData + "/mitdb/" + id + ".atr");
        const auto got = decode_annotations(raw);
        const auto want = read_rdann(id);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CAPTURE(i);
            REQUIRE(got[i].sample_index == want[i].sample);
            REQUIRE(got[i].symbol == want[i].symbol);
            REQUIRE(got[i].subtype == want[i].subtype);
            REQUIRE(got[i].chan == want[i].chan);
            REQUIRE(got[i].num == want[i].num);
            REQUIRE(got[i].aux.size() == want[i].aux_len);
            if (i > 0) {
                REQUIRE(got[i].sample_index >= got[i - 1].sample_index);
            }
        }
    }
    const auto a100 = decode_annotations(read_file_bytes(kData + "/mitdb/100.atr"));
    CHECK(a100.size() == 2274);
    CHECK(a100[0].aux == std::string("(N\0", 3));
}

TEST_CASE("apply_adc_calibration") {
    RecordHeader h;
    h.n_signals = 1;
    h.n_samples = 3;
    h.signals.resize(1);
    h.signals[0].adc_gain = 200.0;
    h.signals[0].adc_baseline = 1024;
    h.signals[0].lead_name = "MLII";
    DigitalSignals raw{1, 3, {1024, 1224, 824}};
    const auto s = apply_adc_calibration(raw, h);
    CHECK(s.samples(0, 0) == 0.0);
    CHECK(s.samples(0, 1) == 1.0);
    CHECK(s.samples(0, 2) == -1.0);
    CHECK(s.lead_names == std::vector<std::string>{"MLII"});

    DigitalSignals wrong{1, 2, {0, 0}};
    CHECK_THROWS_AS(apply_adc_calibration(wrong, h), std::invalid_argument);
}

TEST_CASE("calibration is affine in the adu value") {
    RecordHeader h;
    h.n_signals = 1;
    h.n_samples = 1;
    h.signals.resize(1);
    h.signals[0].adc_gain = 137.0;
    h.signals[0].adc_baseline = -12;
    for (int adu = -2048; adu <= 2047; adu += 97) {
        const auto s = apply_adc_calibration(DigitalSignals{1, 1, {static_cast<std::int16_t>(adu)}}, h);
        CHECK(s.samples(0, 0) == doctest::Approx((adu + 12) / 137.0).epsilon(1e-15));
    }
    CHECK(apply_adc_calibration(DigitalSignals{1, 1, {-12}}, h).samples(0, 0) == 0.0);
}

TEST_CASE("load_record matches the reference reader samples") {
    for (const std::string id : {"100", "101"}) {
        CAPTURE(id);
        const auto rec = load_record(kData + "/mitdb", id);
        CHECK(rec.signals.samples.rows() == 2);
        CHECK(rec.signals.samples.cols() == 650000);
        CHECK(rec.header.sampling_rate == 360.0);
        std::ifstream in(kData + "/oracle/" + id + "_rdsamp.csv");
        const auto rows = csv::read_all(in, id);
        for (std::size_t r = 1; r < rows.size(); ++r) {
            const auto idx = std::stoul(rows[r][0]);
            for (std::size_t c = 0; c < 2; ++c) {
                const double adu = std::stod(rows[r][1 + c]);
                const double want = (adu - rec.header.signals[c].adc_baseline) / rec.header.signals[c].adc_gain;
                CHECK(std::abs(rec.signals.samples(c, idx) - want) <= 1e-9);
            }
        }
    }
    const auto rec = load_record(kData + "/mitdb", "100");
    CHECK(std::abs(rec.signals.samples(0, 0) - (-0.145)) <= 1e-9);
}

TEST_CASE("load_record digital column sums match the reference reader") {
    const std::map<std::string, std::array<double, 2>> sums = {{"100", {625781133.0, 640765524.0}},
                                                               {"101", {628651144.0, 655445125.0}}};
    for (const auto& [id, want] : sums) {
        const auto raw = read_file_bytes(kData + "/mitdb/" + id + ".dat");
        const auto d = decode_format212(raw, 2, 650000);
        for (int s = 0; s < 2; ++s) {
            double total = 0.0;
            for (std::int64_t i = 0; i < d.n_samples; ++i) {
                total += d.at(s, i);
            }
            CHECK(total == want[static_cast<std::size_t>(s)]);
        }
    }
}

TEST_CASE("select_study_subset") {
    CHECK(select_study_subset({}).empty());
    auto mk = [](std::string id, std::string l0, std::string l1) {
        RecordHeader h;
        h.record_id = std::move(id);
        h.n_signals = 2;
        h.signals.resize(2);
        h.signals[0].lead_name = std::move(l0);
        h.signals[1].lead_name = std::move(l1);
        return h;
    };
    const std::vector<RecordHeader> hs = {mk("201", "MLII", "V1"), mk("114", "V5", "MLII"), mk("100", "MLII", "V5"),
                                          mk("101", "MLII", "V1"), mk("201", "MLII", "V1")};
    CHECK(select_study_subset(hs) == std::vector<std::string>{"101", "201"});
    CHECK(mitbih_record_ids().size() == 48);
}
