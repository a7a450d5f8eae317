#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "beatmap/beats.hpp"
#include "beatmap/matrix.hpp"

namespace beatmap::manifold {

struct Provenance {
    std::string algorithm;
    std::vector<std::pair<std::string, std::string>> params;
    std::uint64_t seed = 0;
    std::string lead;
    std::string dataset_hash;
};

struct Embedding {
    Matrix y; // N x 2
    Provenance provenance;
    std::vector<std::string> warnings;
    /// (iteration or epoch, objective value) pairs recorded while optimizing.
    std::vector<std::pair<int, double>> objective_log;
};

/// Columns: index, y0, y1, record_id, r_sample, symbol, aami, gender.
/// Row r of `y` describes beat `rows[r]` of `beats`, and `index` holds that
/// beat row so embeddings of subsets can be joined back to the beat matrix.
void write_embedding_csv(const std::filesystem::path& path, const Matrix& y, const beats::BeatMatrix& beats,
                         std::span<const std::size_t> rows);

struct EmbeddingRows {
    Matrix y;
    std::vector<std::size_t> indices;
};

/// Reads back the index and coordinate columns. Errors name file and row.
EmbeddingRows read_embedding_csv(const std::filesystem::path& path);

/// One `key=value` line per field: algorithm, seed, lead, dataset_hash,
/// then `param.<name>=<value>` for each parameter.
void write_provenance(const std::filesystem::path& path, const Provenance& provenance);
Provenance read_provenance(const std::filesystem::path& path);

} // namespace beatmap::manifold
