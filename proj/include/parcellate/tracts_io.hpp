#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "parcellate/types.hpp"

namespace ppa::io {

// PPAF binary layout (all little-endian):
//
//   bytes 0-3   magic "PPAF" (50 50 41 46)
//   bytes 4-5   version, u16 = 1
//   bytes 6-7   subject-id byte length L, u16
//   L bytes     UTF-8 subject id
//   8 bytes     streamline count S, u64
//   per streamline:
//     u32 point count P (P >= 2), then P * 3 * f32 (x, y, z)
//
// Trailing bytes beyond the declared content are rejected as TruncatedFile:
// the byte count must match the declared counts exactly.

enum class TractFormat { Ppaf, Csv };

SubjectTract read_ppaf(const std::filesystem::path& path);
void write_ppaf(const SubjectTract& tract, const std::filesystem::path& path);

// Plain-text alternative: header `streamline_id,point_index,x,y,z`, rows
// grouped by streamline_id with strictly increasing point_index. The subject
// id is the file stem (the text format carries no header block).
SubjectTract read_csv_tract(const std::filesystem::path& path);
void write_csv_tract(const SubjectTract& tract, const std::filesystem::path& path);

// Extension sniffing (.ppaf / .csv) with an optional explicit override.
SubjectTract read_tract(const std::filesystem::path& path,
                        std::optional<TractFormat> format = std::nullopt);

// Loads every .ppaf/.csv file in a directory into a cohort (sorted by
// subject id, duplicates rejected).
Cohort load_cohort(const std::filesystem::path& dir,
                   std::optional<TractFormat> format = std::nullopt);

}  // namespace ppa::io
