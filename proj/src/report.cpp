#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "beatmap/csv.hpp"
#include "beatmap/eval.hpp"
#include "beatmap/pipeline.hpp"

namespace beatmap {

namespace fs = std::filesystem;

namespace {

struct EvalRow {
    std::string record_id;
    std::string lead;
    std::string algorithm;
    std::string task;
    std::size_t k = 0;
    double accuracy = 0.0;
    double f1 = 0.0;
};

std::vector<EvalRow> read_eval(const fs::path& path, bool per_patient) {
    std::ifstream in(path);
    if (!in) {
        throw StageError("report", "cannot open " + path.string());
    }
    const std::string name = path.string();
    const auto rows = csv::read_all(in, name);
    const std::size_t offset = per_patient ? 1 : 0;
    const std::size_t width = 9 + offset;
    if (rows.empty() || rows.front().size() != width || rows.front()[offset] != "lead") {
        throw csv::CsvError(name, 1, "missing or malformed header");
    }
    std::vector<EvalRow> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r];
        const std::size_t row_no = r + 1;
        if (f.size() != width) {
            throw csv::CsvError(name, row_no, "expected " + std::to_string(width) + " fields, got " +
                                                  std::to_string(f.size()));
        }
        EvalRow e;
        if (per_patient) {
            e.record_id = f[0];
        }
        e.lead = f[offset];
        e.algorithm = f[offset + 1];
        e.task = f[offset + 2];
        if (!parse_algorithm(e.algorithm)) {
            throw csv::CsvError(name, row_no, "unknown algorithm '" + e.algorithm + "'");
        }
        if (!eval::parse_task(e.task)) {
            throw csv::CsvError(name, row_no, "unknown task '" + e.task + "'");
        }
        e.k = csv::parse_field<std::size_t>(f[offset + 3], name, row_no, "k");
        e.accuracy = csv::parse_field<double>(f[offset + 6], name, row_no, "accuracy");
        e.f1 = csv::parse_field<double>(f[offset + 7], name, row_no, "f1");
        if (!(e.accuracy >= 0.0 && e.accuracy <= 1.0) || !(e.f1 >= 0.0 && e.f1 <= 1.0)) {
            throw csv::CsvError(name, row_no, "metric outside [0, 1]");
        }
        out.push_back(e);
    }
    return out;
}

std::string pct(double v) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << 100.0 * v;
    return s.str();
}

/// Algorithms in canonical order, restricted to those present.
std::vector<std::string> algorithms_of(const std::vector<EvalRow>& rows) {
    std::set<std::string> seen;
    for (const auto& r : rows) {
        seen.insert(r.algorithm);
    }
    std::vector<std::string> out;
    for (auto a : {Algorithm::pca, Algorithm::tsne, Algorithm::umap}) {
        if (seen.count(std::string(to_string(a)))) {
            out.emplace_back(to_string(a));
        }
    }
    return out;
}

} // namespace

std::string cmd_report(const fs::path& run_dir) {
    const auto mixed_path = run_dir / "eval_mixed.csv";
    const auto patient_path = run_dir / "eval_per_patient.csv";
    const bool has_mixed = fs::exists(mixed_path);
    const bool has_patient = fs::exists(patient_path);
    if (!has_mixed && !has_patient) {
        throw StageError("report", "missing stage output: " + mixed_path.string() + " and " + patient_path.string());
    }

    std::ostringstream md;
    md << "# Evaluation summary\n\n";

    if (has_mixed) {
        const auto rows = read_eval(mixed_path, false);
        const auto algos = algorithms_of(rows);
        // (lead, task, k) -> algorithm -> row
        std::map<std::tuple<std::string, std::string, std::size_t>, std::map<std::string, EvalRow>> table;
        for (const auto& r : rows) {
            table[{r.lead, r.task, r.k}][r.algorithm] = r;
        }
        std::ofstream csv_out(run_dir / "summary_mixed.csv");
        std::vector<std::string> header = {"lead", "task", "k"};
        for (const auto& a : algos) {
            header.push_back(a + "_accuracy");
            header.push_back(a + "_f1");
        }
        csv::write_row(csv_out, header);

        md << "## Mixed population (LOO KNN, accuracy % / F1 %)\n\n| lead | task | k |";
        for (const auto& a : algos) {
            md << ' ' << a << " |";
        }
        md << "\n|---|---|---|";
        for (std::size_t i = 0; i < algos.size(); ++i) {
            md << "---|";
        }
        md << '\n';
        for (const auto& [key, by_algo] : table) {
            const auto& [lead, task, k] = key;
            std::vector<std::string> line = {lead, task, std::to_string(k)};
            md << "| " << lead << " | " << task << " | " << k << " |";
            for (const auto& a : algos) {
                const auto it = by_algo.find(a);
                if (it == by_algo.end()) {
                    line.insert(line.end(), {"", ""});
                    md << " - |";
                } else {
                    line.push_back(csv::format_double(it->second.accuracy));
                    line.push_back(csv::format_double(it->second.f1));
                    md << ' ' << pct(it->second.accuracy) << " / " << pct(it->second.f1) << " |";
                }
            }
            csv::write_row(csv_out, line);
            md << '\n';
        }
        md << '\n';
    }

    if (has_patient) {
        const auto rows = read_eval(patient_path, true);
        const auto algos = algorithms_of(rows);
        // (lead, task, k) -> record -> algorithm -> row
        std::map<std::tuple<std::string, std::string, std::size_t>,
                 std::map<std::string, std::map<std::string, EvalRow>>>
            table;
        for (const auto& r : rows) {
            table[{r.lead, r.task, r.k}][r.record_id][r.algorithm] = r;
        }
        std::ofstream csv_out(run_dir / "summary_per_patient.csv");
        std::vector<std::string> header = {"lead", "task", "k", "record_id"};
        for (const auto& a : algos) {
            header.push_back(a + "_accuracy");
            header.push_back(a + "_f1");
        }
        csv::write_row(csv_out, header);

        for (const auto& [key, by_record] : table) {
            const auto& [lead, task, k] = key;
            md << "## Per recording: " << lead << ", task " << task << ", k=" << k
               << " (accuracy % / F1 %)\n\n| record |";
            for (const auto& a : algos) {
                md << ' ' << a << " |";
            }
            md << "\n|---|";
            for (std::size_t i = 0; i < algos.size(); ++i) {
                md << "---|";
            }
            md << '\n';
            std::map<std::string, std::vector<double>> acc;
            std::map<std::string, std::vector<double>> f1;
            for (const auto& [record, by_algo] : by_record) {
                std::vector<std::string> line = {lead, task, std::to_string(k), record};
                md << "| " << record << " |";
                for (const auto& a : algos) {
                    const auto it = by_algo.find(a);
                    if (it == by_algo.end()) {
                        line.insert(line.end(), {"", ""});
                        md << " - |";
                        continue;
                    }
                    acc[a].push_back(it->second.accuracy);
                    f1[a].push_back(it->second.f1);
                    line.push_back(csv::format_double(it->second.accuracy));
                    line.push_back(csv::format_double(it->second.f1));
                    md << ' ' << pct(it->second.accuracy) << " / " << pct(it->second.f1) << " |";
                }
                csv::write_row(csv_out, line);
                md << '\n';
            }
            for (const char* stat : {"mean", "median"}) {
                std::vector<std::string> line = {lead, task, std::to_string(k), stat};
                md << "| **" << stat << "** |";
                for (const auto& a : algos) {
                    if (acc[a].empty()) {
                        line.insert(line.end(), {"", ""});
                        md << " - |";
                        continue;
                    }
                    const auto sa = eval::aggregate(acc[a]);
                    const auto sf = eval::aggregate(f1[a]);
                    const bool mean = std::string_view(stat) == "mean";
                    const double va = mean ? sa.mean : sa.median;
                    const double vf = mean ? sf.mean : sf.median;
                    line.push_back(csv::format_double(va));
                    line.push_back(csv::format_double(vf));
                    md << ' ' << pct(va) << " / " << pct(vf) << " |";
                }
                csv::write_row(csv_out, line);
                md << '\n';
            }
            md << '\n';
        }
    }

    const std::string text = md.str();
    std::ofstream(run_dir / "summary.md") << text;
    return text;
}

} // namespace beatmap
