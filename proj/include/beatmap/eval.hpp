#pragma once

// Leave-one-out KNN evaluation of embeddings and trustworthiness.

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "beatmap/beats.hpp"
#include "beatmap/matrix.hpp"

namespace beatmap::eval {

enum class Task { patient_id, gender, aami_multiclass, binary_arrhythmia };

inline constexpr Task kAllTasks[] = {Task::patient_id, Task::gender, Task::aami_multiclass, Task::binary_arrhythmia};

/// Config and CSV names: patient_id, gender, aami, binary.
std::string_view to_string(Task task) noexcept;
std::optional<Task> parse_task(std::string_view name) noexcept;

/// Majority vote over the k nearest other rows (Euclidean). Neighbors at
/// equal distance are taken in index order. Vote ties go to the label with
/// the smallest summed neighbor distance, then to the smallest label id.
std::vector<int> knn_classify_loo(const Matrix& y, std::span<const int> labels, std::size_t k);

enum class BinaryLabel { normal, abnormal };
BinaryLabel binary_arrhythmia_label(beats::Aami cls) noexcept;

/// Rows are truth, columns predictions, both indexed like `classes`.
struct ConfusionMatrix {
    std::vector<std::string> classes;
    std::vector<std::size_t> counts;

    std::size_t size() const noexcept { return classes.size(); }
    std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * size() + predicted]; }
    std::size_t total() const noexcept;
    std::size_t trace() const noexcept;
};

ConfusionMatrix make_confusion(std::vector<std::string> classes, std::span<const int> truth,
                               std::span<const int> predicted);

struct ClassMetrics {
    std::size_t support = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    /// Set when the ratio was 0/0 and reported as 0.
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f1_undefined = false;
};

struct Metrics {
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    /// Unweighted mean of per-class F1 over classes with support.
    double macro_f1 = 0.0;
};

Metrics metrics(const ConfusionMatrix& confusion);

/// Labels of one task over a beat matrix. Rows whose label is unknown
/// (gender U) are left out and counted in `excluded`.
struct TaskLabels {
    std::vector<std::string> classes;
    std::vector<std::size_t> rows;
    std::vector<int> labels;
    std::size_t excluded = 0;
    /// Class whose F1 is the headline score (abnormal for the binary task).
    std::optional<std::size_t> positive;
};

TaskLabels task_labels(const beats::BeatMatrix& beats, Task task);

struct EvalReport {
    Task task = Task::aami_multiclass;
    std::size_t k = 0;
    std::size_t n = 0;
    std::size_t excluded = 0;
    double accuracy = 0.0;
    /// F1 of the positive class for the binary task, macro F1 otherwise.
    double f1 = 0.0;
    bool f1_undefined = false;
    ConfusionMatrix confusion;
    Metrics detail;
};

EvalReport evaluate(const Matrix& y, const beats::BeatMatrix& beats, Task task, std::size_t k);

struct Summary {
    double mean = 0.0;
    double median = 0.0;
};

/// Arithmetic mean; median averages the two middle values for even counts.
Summary aggregate(std::span<const double> values);

/// Venna-Kaski trustworthiness with ranks taken in the high-dimensional
/// space (ties by index). Requires 1 <= k < N / 2.
double trustworthiness(const Matrix& x_high, const Matrix& y_low, std::size_t k);

/// Confusion matrix as a CSV block: header `truth\predicted,<classes>`.
void write_confusion_csv(std::ostream& out, const ConfusionMatrix& confusion);

} // namespace beatmap::eval
