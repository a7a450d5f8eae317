#include "beatmap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "beatmap/csv.hpp"

namespace beatmap::eval {

std::string_view to_string(Task task) noexcept {
    switch (task) {
    case Task::patient_id: return "patient_id";
    case Task::gender: return "gender";
    case Task::aami_multiclass: return "aami";
    case Task::binary_arrhythmia: break;
    }
    return "binary";
}

std::optional<Task> parse_task(std::string_view name) noexcept {
    for (Task t : kAllTasks) {
        if (to_string(t) == name) {
            return t;
        }
    }
    return std::nullopt;
}

std::vector<int> knn_classify_loo(const Matrix& y, std::span<const int> labels, std::size_t k) {
    const std::size_t n = y.rows();
    if (labels.size() != n) {
        throw std::invalid_argument("knn_classify_loo: label count does not match rows");
    }
    if (k == 0 || k >= n) {
        throw std::invalid_argument("knn_classify_loo: k=" + std::to_string(k) + " must lie in [1, N) with N=" +
                                    std::to_string(n));
    }
    const int n_labels = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::pair<double, std::size_t>> row;
    row.reserve(n - 1);
    std::vector<std::size_t> votes(static_cast<std::size_t>(n_labels));
    std::vector<double> dist_sum(static_cast<std::size_t>(n_labels));
    std::vector<int> predicted(n);
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                row.emplace_back(squared_distance(y.row(i), y.row(j)), j);
            }
        }
        std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
        std::fill(votes.begin(), votes.end(), 0);
        std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
        // Elements before the (k-1)th are the k-1 smallest in (distance, index) order.
        for (std::size_t m = 0; m < k; ++m) {
            const auto lbl = static_cast<std::size_t>(labels[row[m].second]);
            ++votes[lbl];
            dist_sum[lbl] += std::sqrt(row[m].first);
        }
        int best = -1;
        for (int c = 0; c < n_labels; ++c) {
            const auto uc = static_cast<std::size_t>(c);
            if (votes[uc] == 0) {
                continue;
            }
            if (best < 0) {
                best = c;
                continue;
            }
            const auto ub = static_cast<std::size_t>(best);
            if (votes[uc] > votes[ub] || (votes[uc] == votes[ub] && dist_sum[uc] < dist_sum[ub])) {
                best = c;
            }
        }
        predicted[i] = best;
    }
    return predicted;
}

BinaryLabel binary_arrhythmia_label(beats::Aami cls) noexcept {
    return cls == beats::Aami::N ? BinaryLabel::normal : BinaryLabel::abnormal;
}

std::size_t ConfusionMatrix::total() const noexcept { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::trace() const noexcept {
    std::size_t t = 0;
    for (std::size_t c = 0; c < size(); ++c) {
        t += at(c, c);
    }
    return t;
}

ConfusionMatrix make_confusion(std::vector<std::string> classes, std::span<const int> truth,
                               std::span<const int> predicted) {
    if (truth.size() != predicted.size()) {
        throw std::invalid_argument("make_confusion: truth and predictions differ in length");
    }
    ConfusionMatrix cm;
    cm.classes = std::move(classes);
    const std::size_t c = cm.classes.size();
    cm.counts.assign(c * c, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto t = static_cast<std::size_t>(truth[i]);
        const auto p = static_cast<std::size_t>(predicted[i]);
        if (truth[i] < 0 || predicted[i] < 0 || t >= c || p >= c) {
            throw std::invalid_argument("make_confusion: label out of range");
        }
        ++cm.counts[t * c + p];
    }
    return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
    Metrics m;
    const std::size_t c = cm.size();
    const std::size_t total = cm.total();
    m.accuracy = total > 0 ? static_cast<double>(cm.trace()) / static_cast<double>(total) : 0.0;
    double f1_sum = 0.0;
    std::size_t supported = 0;
    for (std::size_t k = 0; k < c; ++k) {
        std::size_t tp = cm.at(k, k);
        std::size_t row = 0;
        std::size_t col = 0;
        for (std::size_t j = 0; j < c; ++j) {
            row += cm.at(k, j);
            col += cm.at(j, k);
        }
        ClassMetrics cls;
        cls.support = row;
        const std::size_t fp = col - tp;
        const std::size_t fn = row - tp;
        if (col == 0) {
            cls.precision_undefined = true;
        } else {
            cls.precision = static_cast<double>(tp) / static_cast<double>(col);
        }
        if (row == 0) {
            cls.recall_undefined = true;
        } else {
            cls.recall = static_cast<double>(tp) / static_cast<double>(row);
        }
        if (2 * tp + fp + fn == 0) {
            cls.f1_undefined = true;
        } else {
            cls.f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
        }
        if (row > 0) {
            f1_sum += cls.f1;
            ++supported;
        }
        m.per_class.push_back(cls);
    }
    m.macro_f1 = supported > 0 ? f1_sum / static_cast<double>(supported) : 0.0;
    return m;
}

TaskLabels task_labels(const beats::BeatMatrix& beats, Task task) {
    TaskLabels out;
    switch (task) {
    case Task::patient_id: {
        out.classes = beats.record_ids();
        std::sort(out.classes.begin(), out.classes.end());
        std::map<std::string, int> index;
        for (std::size_t c = 0; c < out.classes.size(); ++c) {
            index[out.classes[c]] = static_cast<int>(c);
        }
        for (std::size_t i = 0; i < beats.size(); ++i) {
            out.rows.push_back(i);
            out.labels.push_back(index.at(beats.meta[i].record_id));
        }
        break;
    }
    case Task::gender:
        out.classes = {"M", "F"};
        for (std::size_t i = 0; i < beats.size(); ++i) {
            const auto g = beats.meta[i].gender;
            if (g == wfdb::Gender::unknown) {
                ++out.excluded;
                continue;
            }
            out.rows.push_back(i);
            out.labels.push_back(g == wfdb::Gender::male ? 0 : 1);
        }
        break;
    case Task::aami_multiclass:
        for (auto cls : beats::kAamiClasses) {
            out.classes.emplace_back(beats::to_string(cls));
        }
        for (std::size_t i = 0; i < beats.size(); ++i) {
            out.rows.push_back(i);
            out.labels.push_back(static_cast<int>(beats.meta[i].aami));
        }
        break;
    case Task::binary_arrhythmia:
        out.classes = {"normal", "abnormal"};
        out.positive = 1;
        for (std::size_t i = 0; i < beats.size(); ++i) {
            out.rows.push_back(i);
            out.labels.push_back(binary_arrhythmia_label(beats.meta[i].aami) == BinaryLabel::abnormal ? 1 : 0);
        }
        break;
    }
    return out;
}

EvalReport evaluate(const Matrix& y, const beats::BeatMatrix& beats, Task task, std::size_t k) {
    if (y.rows() != beats.size()) {
        throw std::invalid_argument("evaluate: embedding rows do not match beats");
    }
    const auto tl = task_labels(beats, task);
    const Matrix sub = tl.rows.size() == y.rows() ? y : y.select_rows(tl.rows);
    const auto predicted = knn_classify_loo(sub, tl.labels, k);
    EvalReport r;
    r.task = task;
    r.k = k;
    r.n = tl.rows.size();
    r.excluded = tl.excluded;
    r.confusion = make_confusion(tl.classes, tl.labels, predicted);
    r.detail = metrics(r.confusion);
    r.accuracy = r.detail.accuracy;
    if (tl.positive) {
        const auto& pos = r.detail.per_class[*tl.positive];
        r.f1 = pos.f1;
        r.f1_undefined = pos.f1_undefined;
    } else {
        r.f1 = r.detail.macro_f1;
    }
    return r;
}

Summary aggregate(std::span<const double> values) {
    if (values.empty()) {
        throw std::invalid_argument("aggregate: no values");
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    Summary s;
    s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    const std::size_t mid = sorted.size() / 2;
    s.median = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    return s;
}

double trustworthiness(const Matrix& x_high, const Matrix& y_low, std::size_t k) {
    const std::size_t n = x_high.rows();
    if (y_low.rows() != n) {
        throw std::invalid_argument("trustworthiness: row counts differ");
    }
    if (k == 0 || 2 * k >= n) {
        throw std::invalid_argument("trustworthiness: k=" + std::to_string(k) + " must satisfy 1 <= k < N/2");
    }
    std::vector<std::pair<double, std::size_t>> high(n - 1);
    std::vector<std::pair<double, std::size_t>> low(n - 1);
    std::vector<std::size_t> rank(n);
    double penalty = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0, c = 0; j < n; ++j) {
            if (j != i) {
                high[c] = {squared_distance(x_high.row(i), x_high.row(j)), j};
                low[c] = {squared_distance(y_low.row(i), y_low.row(j)), j};
                ++c;
            }
        }
        std::sort(high.begin(), high.end());
        for (std::size_t r = 0; r < high.size(); ++r) {
            rank[high[r].second] = r + 1;
        }
        std::partial_sort(low.begin(), low.begin() + static_cast<std::ptrdiff_t>(k), low.end());
        for (std::size_t m = 0; m < k; ++m) {
            const std::size_t r = rank[low[m].second];
            if (r > k) {
                penalty += static_cast<double>(r - k);
            }
        }
    }
    const double nn = static_cast<double>(n);
    const double kk = static_cast<double>(k);
    return 1.0 - 2.0 / (nn * kk * (2.0 * nn - 3.0 * kk - 1.0)) * penalty;
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm) {
    std::vector<std::string> fields = {"truth\\predicted"};
    fields.insert(fields.end(), cm.classes.begin(), cm.classes.end());
    csv::write_row(out, fields);
    for (std::size_t t = 0; t < cm.size(); ++t) {
        fields.assign(1, cm.classes[t]);
        for (std::size_t p = 0; p < cm.size(); ++p) {
            fields.push_back(std::to_string(cm.at(t, p)));
        }
        csv::write_row(out, fields);
    }
}

} // namespace beatmap::eval
