#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "parcellate/bundler.hpp"
#include "parcellate/types.hpp"

namespace ppa {

// Per-subject simplex vector: omega[k] is the share of the subject's fibers
// assigned to bundle k.
struct CompositionVector {
    std::string subject_id;
    std::vector<double> omega;
};

struct ConnectomeMatrix {
    std::vector<CompositionVector> rows;  // cohort order
    std::size_t k = 0;
};

// Per-subject bundle histogram divided by the subject's (post-filter) fiber
// count. Zero-count bundles keep explicit 0 entries.
ConnectomeMatrix compose(const Assignment& assignment, const EndpointDataset& data,
                         const Cohort& cohort, std::size_t k);

// Population-level fiber counts per bundle; sums to m.
std::vector<std::uint64_t> bundle_sizes(const Assignment& assignment, std::size_t k);

// CSV: header subject_id,omega_0,...,omega_{K-1}; full double precision.
void write_omega_csv(const ConnectomeMatrix& matrix, const std::filesystem::path& path);
ConnectomeMatrix read_omega_csv(const std::filesystem::path& path);

// CSV: header bundle,count.
void write_sizes_csv(const std::vector<std::uint64_t>& sizes, const std::filesystem::path& path);
std::vector<std::uint64_t> read_sizes_csv(const std::filesystem::path& path);

}  // namespace ppa
