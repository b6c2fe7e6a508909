#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "parcellate/bundler.hpp"
#include "parcellate/regress.hpp"
#include "parcellate/types.hpp"

namespace ppa {

// Cohort generator with planted bundles and a sparse linear trait, so every
// pipeline stage has ground truth to recover.
struct SynthConfig {
    std::size_t n_subjects = 0;
    std::size_t k_true = 0;
    std::vector<Centroid6> bundle_centers;       // k_true x 6, mm
    double endpoint_noise_sigma = 1.0;
    std::size_t fibers_min = 0;                  // per-subject fiber count range
    std::size_t fibers_max = 0;
    std::vector<double> dirichlet_concentration; // k_true positive reals
    double beta_intercept = 0.0;
    std::vector<double> beta_true;               // k_true - 1 (last bundle is reference)
    double trait_noise_sigma = 0.0;
    double flip_probability = 0.5;               // chance a fiber is stored reversed
    std::size_t midpoints = 0;                   // interior points per streamline
    std::uint64_t seed = 0;

    void validate() const;
};

SynthConfig synth_config_from_json_file(const std::filesystem::path& path);
void write_synth_config_json(const SynthConfig& config, const std::filesystem::path& path);

// Spread k centres over a widely separated grid; convenience for configs
// that don't pin explicit centres.
std::vector<Centroid6> default_bundle_centers(std::size_t k, double spacing);

struct SynthTruth {
    std::vector<std::uint32_t> fiber_bundle;        // pooled, subject-major
    std::vector<std::vector<double>> omega_target;  // Dirichlet draw per subject
    std::vector<std::vector<double>> omega_true;    // realized proportions
    std::vector<double> traits;
};

struct SynthResult {
    Cohort cohort;
    TraitTable traits;
    SynthTruth truth;
};

// Fully seeded; per-subject streams make generation order-independent.
// Traits follow the linear model on realized proportions (reference bundle
// dropped) plus Gaussian noise.
SynthResult generate(const SynthConfig& config);

void write_truth_json(const SynthTruth& truth, const std::filesystem::path& path);

// Chance-corrected partition agreement in [-1, 1].
double adjusted_rand_index(const std::vector<std::uint32_t>& a,
                           const std::vector<std::uint32_t>& b);

double recovery_score(const SynthTruth& truth, const Assignment& assignment);

// Synthetic ATL1 volume covering the generated geometry: voxels labelled by
// the nearest bundle-centre endpoint, one ROI per endpoint cloud (p = 2k).
Atlas make_synthetic_atlas(const SynthConfig& config, std::uint32_t grid = 16);

}  // namespace ppa
