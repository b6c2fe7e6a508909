#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "parcellate/types.hpp"

namespace ppa {

// One bundle centre: two 3-D endpoint means laid out as (u, v).
using Centroid6 = std::array<double, 6>;

inline Centroid6 to_centroid(const Vec3& a, const Vec3& b) {
    return {a[0], a[1], a[2], b[0], b[1], b[2]};
}

struct FlipDistance {
    double d2;     // squared mm
    bool flipped;  // true when the reversed ordering won (ties stay unflipped)
};

// min( |a-u|^2 + |b-v|^2 , |a-v|^2 + |b-u|^2 ) over the two endpoint orderings.
FlipDistance flip_distance2(const EndpointPair& pair, const Centroid6& centroid);

// Population fiber-bundle basis learned by mini-batch K-means on the pooled
// 6-D endpoint pairs.
struct BundleModel {
    std::size_t k = 0;
    std::vector<Centroid6> centroids;
    std::vector<std::uint64_t> counts;  // cumulative per-centre update counts
    std::uint64_t seed = 0;
    std::size_t batch_size = 0;
    std::size_t iterations = 0;

    // Centres that never received an update; their composition entries are 0.
    std::vector<std::size_t> empty_bundles() const;
};

// One bundle per fiber, aligned with the EndpointDataset ordering.
struct Assignment {
    std::vector<std::uint32_t> bundle_index;
    std::vector<std::uint8_t> flipped;

    std::size_t size() const { return bundle_index.size(); }
};

// Flip-aware k-means++ seeding: first centre uniform, each next drawn with
// probability proportional to its current minimum flip_distance2.
std::vector<Centroid6> init_centroids(const EndpointDataset& data, std::size_t k,
                                      std::uint64_t seed);

// Mini-batch K-means with per-centre learning rates eta = 1/count. Batches
// are sampled uniformly with replacement; assignments for a batch are found
// against a frozen model, then applied sequentially. Deterministic given the
// seed.
BundleModel fit(const EndpointDataset& data, std::size_t k, std::size_t batch_size,
                std::size_t iterations, std::uint64_t seed);

// Nearest centre under flip_distance2, ties to the lowest bundle index.
Assignment assign(const BundleModel& model, const EndpointDataset& data);

// Sum of flip_distance2 to each fiber's assigned centre.
double objective(const BundleModel& model, const EndpointDataset& data);

// Default budget: 100 epochs-equivalent, ceil(100 * m / batch_size).
std::size_t auto_iterations(std::size_t m, std::size_t batch_size);

// JSON model file: {format_version, k, centroids row-major, counts, seed,
// batch_size, iterations}.
void save_model(const BundleModel& model, const std::filesystem::path& path);
BundleModel load_model(const std::filesystem::path& path);

}  // namespace ppa
