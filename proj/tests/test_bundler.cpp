#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "parcellate/bundler.hpp"
#include "parcellate/errors.hpp"
#include "parcellate/rng.hpp"
#include "parcellate/synth.hpp"
#include "test_support.hpp"
#include "reference_fits.hpp"

using namespace ppa;

namespace {

EndpointPair endpoint_pair(const Vec3& a, const Vec3& b) {
    EndpointPair p;
    p.a = a;
    p.b = b;
    p.fiber_length = distance(a, b);
    return p;
}

EndpointDataset random_dataset(Rng& rng, std::size_t m, double span = 100.0) {
    EndpointDataset data;
    for (std::size_t i = 0; i < m; ++i) {
        const auto coord = [&]() { return (rng.next_double() - 0.5) * span; };
        data.pairs.push_back(endpoint_pair({coord(), coord(), coord()}, {coord(), coord(), coord()}));
    }
    return data;
}

// two planted clouds around widely separated centre pairs
EndpointDataset planted_two_bundles(Rng& rng, std::size_t per_bundle,
                                    std::vector<std::uint32_t>& labels) {
    const std::vector<Centroid6> centres = {{0, 0, 0, 30, 0, 0}, {100, 100, 100, 130, 100, 100}};
    EndpointDataset data;
    for (std::size_t i = 0; i < 2 * per_bundle; ++i) {
        const std::size_t which = i % 2;
        labels.push_back(static_cast<std::uint32_t>(which));
        Vec3 a{centres[which][0] + rng.next_normal(), centres[which][1] + rng.next_normal(),
               centres[which][2] + rng.next_normal()};
        Vec3 b{centres[which][3] + rng.next_normal(), centres[which][4] + rng.next_normal(),
               centres[which][5] + rng.next_normal()};
        if (rng.next_double() < 0.5) std::swap(a, b);  // random orientation
        data.pairs.push_back(endpoint_pair(a, b));
    }
    return data;
}

}  // namespace

TEST_CASE("flip_distance2 on aligned and swapped centroids") {
    const auto pair = endpoint_pair({1, 2, 3}, {4, 5, 6});
    const Centroid6 aligned = {1, 2, 3, 4, 5, 6};
    const Centroid6 swapped = {4, 5, 6, 1, 2, 3};

    const auto d_aligned = flip_distance2(pair, aligned);
    CHECK(d_aligned.d2 == 0.0);
    CHECK_FALSE(d_aligned.flipped);

    const auto d_swapped = flip_distance2(pair, swapped);
    CHECK(d_swapped.d2 == 0.0);
    CHECK(d_swapped.flipped);
}

TEST_CASE("flip_distance2 equals the explicit two-term evaluation") {
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        const auto data = random_dataset(rng, 1);
        const auto& p = data.pairs[0];
        Centroid6 c;
        for (auto& v : c) v = (rng.next_double() - 0.5) * 100.0;
        const Vec3 u{c[0], c[1], c[2]};
        const Vec3 v{c[3], c[4], c[5]};
        const double direct = squared_distance(p.a, u) + squared_distance(p.b, v);
        const double swapped = squared_distance(p.a, v) + squared_distance(p.b, u);
        const auto d = flip_distance2(p, c);
        CHECK(d.d2 == std::min(direct, swapped));
        CHECK(d.flipped == (swapped < direct));
    }
}

TEST_CASE("init_centroids: k=m uses every point, k=1 draws one, seeds reproduce") {
    Rng rng(103);
    const auto data = random_dataset(rng, 12);

    const auto all = init_centroids(data, 12, 7);
    REQUIRE(all.size() == 12);
    // every data point appears among the centroids in some orientation
    for (const auto& p : data.pairs) {
        bool found = false;
        for (const auto& c : all) {
            if (flip_distance2(p, c).d2 == 0.0) {
                found = true;
                break;
            }
        }
        CHECK(found);
    }

    const auto one = init_centroids(data, 1, 7);
    REQUIRE(one.size() == 1);
    bool matches_some_point = false;
    for (const auto& p : data.pairs) {
        if (flip_distance2(p, one[0]).d2 == 0.0) matches_some_point = true;
    }
    CHECK(matches_some_point);

    CHECK(init_centroids(data, 5, 99) == init_centroids(data, 5, 99));
    CHECK_THROWS_AS(init_centroids(data, 13, 7), InsufficientData);
}

TEST_CASE("fit rejects bad parameters") {
    Rng rng(107);
    const auto data = random_dataset(rng, 10);
    CHECK_THROWS_AS(fit(data, 3, 4, 0, 1), InvalidParameter);
    CHECK_THROWS_AS(fit(data, 3, 0, 5, 1), InvalidParameter);
    CHECK_THROWS_AS(fit(data, 0, 4, 5, 1), InvalidParameter);
    CHECK_THROWS_AS(fit(data, 11, 4, 5, 1), InsufficientData);
}

TEST_CASE("fit recovers two well-separated planted bundles (ARI >= 0.99)") {
    Rng rng(109);
    std::vector<std::uint32_t> truth;
    const auto data = planted_two_bundles(rng, 250, truth);
    const auto model = fit(data, 2, 100, auto_iterations(data.size(), 100), 42);
    const auto labels = assign(model, data);
    CHECK(adjusted_rand_index(truth, labels.bundle_index) >= 0.99);
}

TEST_CASE("fit with k=1 lands on the orientation-aligned mean") {
    Rng rng(113);
    // all pairs near (0,0,0)-(50,0,0), random storage orientation
    EndpointDataset data;
    Centroid6 truth = {0, 0, 0, 50, 0, 0};
    for (int i = 0; i < 200; ++i) {
        Vec3 a{truth[0] + 0.5 * rng.next_normal(), truth[1] + 0.5 * rng.next_normal(),
               truth[2] + 0.5 * rng.next_normal()};
        Vec3 b{truth[3] + 0.5 * rng.next_normal(), truth[4] + 0.5 * rng.next_normal(),
               truth[5] + 0.5 * rng.next_normal()};
        if (rng.next_double() < 0.5) std::swap(a, b);
        data.pairs.push_back(endpoint_pair(a, b));
    }
    const auto model = fit(data, 1, 50, 400, 11);

    // centre within sampling tolerance of one orientation of the true centre
    const EndpointPair truth_pair = endpoint_pair({truth[0], truth[1], truth[2]},
                                              {truth[3], truth[4], truth[5]});
    CHECK(flip_distance2(truth_pair, model.centroids[0]).d2 < 1.0);

    // objective is the total within-cluster scatter of the single centre
    double expected = 0.0;
    for (const auto& p : data.pairs) expected += flip_distance2(p, model.centroids[0]).d2;
    CHECK(objective(model, data) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("assign: exact centroid match, tie break, and brute-force agreement") {
    Rng rng(127);
    const auto data = random_dataset(rng, 60);
    const auto model = fit(data, 6, 30, 100, 3);

    // fiber equal to a centroid goes to that centroid
    for (std::size_t j = 0; j < model.k; ++j) {
        EndpointDataset probe;
        probe.pairs.push_back(endpoint_pair({model.centroids[j][0], model.centroids[j][1],
                                         model.centroids[j][2]},
                                        {model.centroids[j][3], model.centroids[j][4],
                                         model.centroids[j][5]}));
        const auto a = assign(model, probe);
        CHECK(a.bundle_index[0] == j);
    }

    // equidistant fiber goes to the lowest bundle index
    BundleModel tie_model;
    tie_model.k = 6;
    tie_model.centroids = {{9, 9, 9, 9, 9, 9}, {9, 9, 9, 9, 9, 9}, {0, 0, 0, 1, 1, 1},
                           {7, 7, 7, 7, 7, 7}, {7, 7, 7, 7, 7, 7}, {0, 0, 0, 1, 1, 1}};
    tie_model.counts.assign(6, 1);
    EndpointDataset equidistant;
    equidistant.pairs.push_back(endpoint_pair({8, 8, 8}, {8, 8, 8}));
    const auto tie = assign(tie_model, equidistant);
    CHECK(tie.bundle_index[0] == 0);

    // brute force over all K x 2 orientations
    const auto labels = assign(model, data);
    for (std::size_t i = 0; i < data.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::uint32_t best_j = 0;
        for (std::size_t j = 0; j < model.k; ++j) {
            const Vec3 u{model.centroids[j][0], model.centroids[j][1], model.centroids[j][2]};
            const Vec3 v{model.centroids[j][3], model.centroids[j][4], model.centroids[j][5]};
            const double d_direct =
                squared_distance(data.pairs[i].a, u) + squared_distance(data.pairs[i].b, v);
            const double d_swapped =
                squared_distance(data.pairs[i].a, v) + squared_distance(data.pairs[i].b, u);
            const double d = std::min(d_direct, d_swapped);
            if (d < best) {
                best = d;
                best_j = static_cast<std::uint32_t>(j);
            }
        }
        CHECK(labels.bundle_index[i] == best_j);
    }
}

TEST_CASE("objective is zero when data equals centroids and when k=m") {
    Rng rng(131);
    const auto data = random_dataset(rng, 8);
    const auto model = fit(data, 8, 8, 100, 5);
    // k=m: every point sits on its own centre, up to 1-ulp update drift
    CHECK(objective(model, data) <= 1e-18);

    BundleModel direct;
    direct.k = data.size();
    for (const auto& p : data.pairs) direct.centroids.push_back(to_centroid(p.a, p.b));
    direct.counts.assign(direct.k, 1);
    CHECK(objective(direct, data) == 0.0);
}

TEST_CASE("mini-batch objective is within 1.2x of the Lloyd reference") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(1000 + seed);
        // blobs with random centres, sigma 5
        EndpointDataset data;
        std::vector<Centroid6> blob_centres;
        for (int b = 0; b < 5; ++b) {
            Centroid6 c;
            for (auto& v : c) v = rng.next_double() * 100.0;
            blob_centres.push_back(c);
        }
        for (std::size_t i = 0; i < 2000; ++i) {
            const auto& c = blob_centres[i % 5];
            Vec3 a{c[0] + 5 * rng.next_normal(), c[1] + 5 * rng.next_normal(),
                   c[2] + 5 * rng.next_normal()};
            Vec3 b{c[3] + 5 * rng.next_normal(), c[4] + 5 * rng.next_normal(),
                   c[5] + 5 * rng.next_normal()};
            if (rng.next_double() < 0.5) std::swap(a, b);
            data.pairs.push_back(endpoint_pair(a, b));
        }

        const auto model = fit(data, 5, 200, auto_iterations(data.size(), 200), seed);
        const double mini_batch = objective(model, data);

        const auto lloyd = ppa::test::lloyd_reference(
            data, init_centroids(data, 5, derive_seed(seed, "init")));
        const double full_batch = ppa::test::scatter_objective(data, lloyd);

        CHECK(mini_batch <= 1.2 * full_batch);
    }
}

TEST_CASE("flip invariance: reversing a fiber changes nothing") {
    Rng rng(137);
    auto data = random_dataset(rng, 300);
    const auto model = fit(data, 10, 100, 200, 21);
    const auto before = assign(model, data);

    auto reversed = data;
    for (auto& p : reversed.pairs) std::swap(p.a, p.b);
    const auto after = assign(model, reversed);

    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(before.bundle_index[i] == after.bundle_index[i]);
        for (std::size_t j = 0; j < model.k; ++j) {
            CHECK(flip_distance2(data.pairs[i], model.centroids[j]).d2 ==
                  flip_distance2(reversed.pairs[i], model.centroids[j]).d2);
        }
    }
}

TEST_CASE("fit is deterministic and counts are monotone") {
    Rng rng(139);
    const auto data = random_dataset(rng, 400);

    const auto a = fit(data, 7, 64, 150, 77);
    const auto b = fit(data, 7, 64, 150, 77);
    REQUIRE(a.centroids.size() == b.centroids.size());
    for (std::size_t j = 0; j < a.k; ++j) {
        for (int c = 0; c < 6; ++c) {
            CHECK(a.centroids[j][c] == b.centroids[j][c]);  // bit-for-bit
        }
    }
    CHECK(a.counts == b.counts);

    // counts accumulate across a longer run of the same stream
    const auto longer = fit(data, 7, 64, 300, 77);
    std::uint64_t total_a = 0;
    std::uint64_t total_longer = 0;
    for (std::size_t j = 0; j < a.k; ++j) {
        total_a += a.counts[j];
        total_longer += longer.counts[j];
    }
    CHECK(total_a == 150 * 64);
    CHECK(total_longer == 300 * 64);
}

TEST_CASE("partition property: every fiber lands in exactly one bundle") {
    Rng rng(149);
    const auto data = random_dataset(rng, 500);
    const auto model = fit(data, 9, 100, 100, 13);
    const auto labels = assign(model, data);
    REQUIRE(labels.size() == data.size());
    std::vector<std::size_t> counts(model.k, 0);
    for (auto b : labels.bundle_index) {
        REQUIRE(b < model.k);
        ++counts[b];
    }
    std::size_t total = 0;
    for (auto c : counts) total += c;
    CHECK(total == data.size());
}

TEST_CASE("model JSON round-trip preserves every field bit-for-bit") {
    ppa::test::TempDir dir("model");
    Rng rng(151);
    const auto data = random_dataset(rng, 100);
    const auto model = fit(data, 4, 32, 80, 19);

    const auto path = dir / "model.json";
    save_model(model, path);
    const auto loaded = load_model(path);

    CHECK(loaded.k == model.k);
    CHECK(loaded.counts == model.counts);
    CHECK(loaded.seed == model.seed);
    CHECK(loaded.batch_size == model.batch_size);
    CHECK(loaded.iterations == model.iterations);
    for (std::size_t j = 0; j < model.k; ++j) {
        for (int c = 0; c < 6; ++c) CHECK(loaded.centroids[j][c] == model.centroids[j][c]);
    }
}
