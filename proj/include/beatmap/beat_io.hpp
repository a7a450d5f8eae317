#pragma once

// Serialization of BeatMatrix.
//
// CSV (`beats_<lead>.csv`): header row
//   record_id,r_sample,symbol,aami,gender,s0,...,s255
// then one row per beat.
//
// Binary cache (all integers little-endian):
//   char[4]  magic "CMBM"
//   u32      N (rows)
//   u32      width (256)
//   f32      N * width samples, row-major
//   N metadata entries, in row order:
//     u16    record id length L
//     u8[L]  record id bytes
//     u8     lead (0 = MLII, 1 = V1)
//     i64    r_sample
//     u8     MIT-BIH symbol
//     u8     AAMI class (0..5 = N, S, V, F, Q, O)
//     u8     gender (0 = male, 1 = female, 2 = unknown)

#include <filesystem>
#include <iosfwd>

#include "beatmap/beats.hpp"

namespace beatmap::beats {

void write_csv(std::ostream& out, const BeatMatrix& beats);
void write_csv(const std::filesystem::path& path, const BeatMatrix& beats);
BeatMatrix read_csv(const std::filesystem::path& path);

void write_binary(std::ostream& out, const BeatMatrix& beats);
void write_binary(const std::filesystem::path& path, const BeatMatrix& beats);
/// Waveforms come back rounded to float precision.
BeatMatrix read_binary(std::istream& in);
BeatMatrix read_binary(const std::filesystem::path& path);

} // namespace beatmap::beats
