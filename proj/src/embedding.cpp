#include "beatmap/embedding.hpp"

#include <cmath>
#include <fstream>

#include "beatmap/csv.hpp"

namespace beatmap::manifold {

void write_embedding_csv(const std::filesystem::path& path, const Matrix& y, const beats::BeatMatrix& beats,
                         std::span<const std::size_t> rows) {
    if (y.rows() != rows.size() || y.cols() != 2) {
        throw std::invalid_argument("write_embedding_csv: embedding does not match beat metadata");
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    csv::write_row(out, {"index", "y0", "y1", "record_id", "r_sample", "symbol", "aami", "gender"});
    for (std::size_t i = 0; i < y.rows(); ++i) {
        const auto& m = beats.meta.at(rows[i]);
        csv::write_row(out, {std::to_string(rows[i]), csv::format_double(y(i, 0)), csv::format_double(y(i, 1)),
                             m.record_id, std::to_string(m.r_sample), std::string(1, m.symbol),
                             std::string(beats::to_string(m.aami)), std::string(wfdb::to_string(m.gender))});
    }
}

EmbeddingRows read_embedding_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    const std::string name = path.string();
    const auto rows = csv::read_all(in, name);
    if (rows.empty() || rows.front().size() < 3 || rows.front()[0] != "index" || rows.front()[1] != "y0" ||
        rows.front()[2] != "y1") {
        throw csv::CsvError(name, 1, "missing or malformed header");
    }
    EmbeddingRows out;
    out.y = Matrix(rows.size() - 1, 2);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r];
        if (f.size() != rows.front().size()) {
            throw csv::CsvError(name, r + 1, "wrong field count");
        }
        out.indices.push_back(csv::parse_field<std::size_t>(f[0], name, r + 1, "index"));
        for (std::size_t c = 0; c < 2; ++c) {
            const double v = csv::parse_field<double>(f[1 + c], name, r + 1, c == 0 ? "y0" : "y1");
            if (!std::isfinite(v)) {
                throw csv::CsvError(name, r + 1, "non-finite coordinate");
            }
            out.y(r - 1, c) = v;
        }
    }
    return out;
}

void write_provenance(const std::filesystem::path& path, const Provenance& p) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << "algorithm=" << p.algorithm << '\n'
        << "seed=" << p.seed << '\n'
        << "lead=" << p.lead << '\n'
        << "dataset_hash=" << p.dataset_hash << '\n';
    for (const auto& [key, value] : p.params) {
        out << "param." << key << '=' << value << '\n';
    }
}

Provenance read_provenance(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    Provenance p;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "algorithm") {
            p.algorithm = value;
        } else if (key == "seed") {
            p.seed = std::stoull(value);
        } else if (key == "lead") {
            p.lead = value;
        } else if (key == "dataset_hash") {
            p.dataset_hash = value;
        } else if (key.starts_with("param.")) {
            p.params.emplace_back(key.substr(6), value);
        }
    }
    return p;
}

} // namespace beatmap::manifold
