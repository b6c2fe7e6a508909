#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "parcellate/bundler.hpp"
#include "parcellate/types.hpp"

namespace ppa {

// Labelled voxel volume with a voxel-to-world affine. Label 0 is background;
// labels 1..p are ROIs.
//
// ATL1 binary layout (little-endian):
//   bytes 0-3  magic "ATL1" (41 54 4C 31)
//   u16        version = 1
//   u32 x 3    nx, ny, nz
//   f64 x 16   voxel-to-world affine, row-major
//   u16        ROI count p
//   p times    u16 byte length, then UTF-8 ROI name
//   u16 x nx*ny*nz  labels, x-fastest
struct Atlas {
    std::array<std::uint32_t, 3> dims{};
    std::array<double, 16> affine{};   // voxel -> world (mm), row-major
    std::array<double, 16> inverse{};  // world -> voxel, cached
    std::vector<std::uint16_t> labels;
    std::uint16_t num_rois = 0;
    std::vector<std::string> roi_names;

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
};

// Validates dims/labels/names and caches the affine inverse.
Atlas make_atlas(std::array<std::uint32_t, 3> dims, const std::array<double, 16>& affine,
                 std::vector<std::uint16_t> labels, std::vector<std::string> roi_names);

Atlas load_atlas(const std::filesystem::path& path);
void save_atlas(const Atlas& atlas, const std::filesystem::path& path);

// Count of voxels per label, index 0 = background.
std::vector<std::size_t> label_histogram(const Atlas& atlas);

// ROI id of the voxel nearest to a world point; 0 when the point falls
// outside the volume.
std::uint16_t roi_of(const Atlas& atlas, const Vec3& point);

// The 80-region tractography name table used by HCP842-style atlases.
const std::vector<std::string>& hcp842_roi_names();

enum class SummaryKind { Count, NCount, NCount2 };

SummaryKind summary_kind_from_string(const std::string& s);
std::string to_string(SummaryKind kind);

// Symmetric p x p connectivity matrix; row/column i is ROI id i+1.
struct ConnectivityMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;  // row-major
    SummaryKind kind = SummaryKind::Count;

    static ConnectivityMatrix zeros(std::size_t p, SummaryKind kind);
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

// Per-subject connectivity from endpoint ROI membership. Entry (r,s):
//   count    number of fibers joining r and s
//   ncount   count / median length of those fibers
//   ncount2  sum over those fibers of 1/length
// Fibers with either endpoint in background are skipped (tallied through
// *skipped when given).
ConnectivityMatrix build_apa(const SubjectTract& tract, const Atlas& atlas, SummaryKind kind,
                             std::size_t* skipped = nullptr);

// Population count matrix over fibers whose bundle is active for a trait.
// `active` holds bundle indices; assignment must align with the pooled
// cohort fibers (subject-major).
ConnectivityMatrix build_active_matrix(const Cohort& cohort, const Atlas& atlas,
                                       const Assignment& assignment,
                                       const std::vector<std::size_t>& active,
                                       std::size_t num_bundles);

// Zeroes every entry below ratio * max(W); ratio in (0, 1].
ConnectivityMatrix threshold_matrix(const ConnectivityMatrix& w, double ratio);

// CSV with ROI-name header row and column.
void write_matrix_csv(const ConnectivityMatrix& w, const std::vector<std::string>& roi_names,
                      const std::filesystem::path& path);

// `roi_a,roi_b,weight` for each surviving (non-zero, r <= s) entry.
void write_edge_list_csv(const ConnectivityMatrix& w, const std::vector<std::string>& roi_names,
                         const std::filesystem::path& path);

}  // namespace ppa
