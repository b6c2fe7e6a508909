#include "parcellate/bundler.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "parcellate/errors.hpp"
#include "parcellate/rng.hpp"

namespace ppa {

FlipDistance flip_distance2(const EndpointPair& pair, const Centroid6& centroid) {
    const Vec3 u = {centroid[0], centroid[1], centroid[2]};
    const Vec3 v = {centroid[3], centroid[4], centroid[5]};
    const double direct = squared_distance(pair.a, u) + squared_distance(pair.b, v);
    const double swapped = squared_distance(pair.a, v) + squared_distance(pair.b, u);
    if (swapped < direct) return {swapped, true};
    return {direct, false};
}

std::vector<std::size_t> BundleModel::empty_bundles() const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < counts.size(); ++j) {
        if (counts[j] == 0) out.push_back(j);
    }
    return out;
}

namespace {

struct Nearest {
    std::uint32_t index;
    bool flipped;
    double d2;
};

Nearest nearest_centroid(const EndpointPair& pair, const std::vector<Centroid6>& centroids) {
    Nearest best{0, false, std::numeric_limits<double>::infinity()};
    for (std::size_t j = 0; j < centroids.size(); ++j) {
        const FlipDistance d = flip_distance2(pair, centroids[j]);
        if (d.d2 < best.d2) {
            best = {static_cast<std::uint32_t>(j), d.flipped, d.d2};
        }
    }
    return best;
}

}  // namespace

std::vector<Centroid6> init_centroids(const EndpointDataset& data, std::size_t k,
                                      std::uint64_t seed) {
    const std::size_t m = data.size();
    if (k < 1) throw InvalidParameter("init_centroids: k must be at least 1");
    if (k > m) {
        throw InsufficientData("init_centroids: k=" + std::to_string(k) + " exceeds m=" +
                               std::to_string(m));
    }

    Rng rng(seed);
    std::vector<Centroid6> centroids;
    centroids.reserve(k);

    const auto as_centroid = [&](std::size_t i) {
        return to_centroid(data.pairs[i].a, data.pairs[i].b);
    };

    centroids.push_back(as_centroid(rng.next_index(m)));

    std::vector<double> min_d2(m);
    for (std::size_t i = 0; i < m; ++i) {
        min_d2[i] = flip_distance2(data.pairs[i], centroids[0]).d2;
    }

    while (centroids.size() < k) {
        double total = 0.0;
        for (double d : min_d2) total += d;
        std::size_t pick;
        if (total > 0.0) {
            pick = rng.next_weighted(min_d2);
        } else {
            // every point coincides with a centre; fall back to uniform
            pick = rng.next_index(m);
        }
        centroids.push_back(as_centroid(pick));
        const Centroid6& fresh = centroids.back();
        for (std::size_t i = 0; i < m; ++i) {
            const double d = flip_distance2(data.pairs[i], fresh).d2;
            if (d < min_d2[i]) min_d2[i] = d;
        }
    }
    return centroids;
}

std::size_t auto_iterations(std::size_t m, std::size_t batch_size) {
    if (batch_size == 0) throw InvalidParameter("auto_iterations: batch_size must be positive");
    return (100 * m + batch_size - 1) / batch_size;
}

BundleModel fit(const EndpointDataset& data, std::size_t k, std::size_t batch_size,
                std::size_t iterations, std::uint64_t seed) {
    const std::size_t m = data.size();
    if (batch_size < 1) throw InvalidParameter("fit: batch_size must be at least 1");
    if (iterations < 1) throw InvalidParameter("fit: iterations must be at least 1");
    if (k < 1) throw InvalidParameter("fit: k must be at least 1");
    if (k > m) {
        throw InsufficientData("fit: k=" + std::to_string(k) + " exceeds m=" + std::to_string(m));
    }

    BundleModel model;
    model.k = k;
    model.seed = seed;
    model.batch_size = batch_size;
    model.iterations = iterations;
    model.centroids = init_centroids(data, k, derive_seed(seed, "init"));
    model.counts.assign(k, 0);

    Rng rng(derive_seed(seed, "minibatch"));
    std::vector<std::size_t> batch(batch_size);
    std::vector<Nearest> cached(batch_size);

    for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t b = 0; b < batch_size; ++b) batch[b] = rng.next_index(m);
        // assignment against the frozen model, then sequential updates
        for (std::size_t b = 0; b < batch_size; ++b) {
            cached[b] = nearest_centroid(data.pairs[batch[b]], model.centroids);
        }
        for (std::size_t b = 0; b < batch_size; ++b) {
            const EndpointPair& pair = data.pairs[batch[b]];
            const Nearest& n = cached[b];
            Centroid6& centre = model.centroids[n.index];
            const double eta = 1.0 / static_cast<double>(++model.counts[n.index]);
            const Centroid6 oriented =
                n.flipped ? to_centroid(pair.b, pair.a) : to_centroid(pair.a, pair.b);
            for (int c = 0; c < 6; ++c) {
                centre[c] = (1.0 - eta) * centre[c] + eta * oriented[c];
            }
        }
    }
    return model;
}

Assignment assign(const BundleModel& model, const EndpointDataset& data) {
    if (model.centroids.empty()) throw InvalidParameter("assign: model has no centroids");
    Assignment out;
    out.bundle_index.resize(data.size());
    out.flipped.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Nearest n = nearest_centroid(data.pairs[i], model.centroids);
        out.bundle_index[i] = n.index;
        out.flipped[i] = n.flipped ? 1 : 0;
    }
    return out;
}

double objective(const BundleModel& model, const EndpointDataset& data) {
    if (model.centroids.empty()) throw InvalidParameter("objective: model has no centroids");
    double total = 0.0;
    for (const auto& pair : data.pairs) {
        total += nearest_centroid(pair, model.centroids).d2;
    }
    return total;
}

void save_model(const BundleModel& model, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["k"] = model.k;
    std::vector<double> flat;
    flat.reserve(model.k * 6);
    for (const auto& c : model.centroids) flat.insert(flat.end(), c.begin(), c.end());
    j["centroids"] = flat;
    j["counts"] = model.counts;
    j["seed"] = model.seed;
    j["batch_size"] = model.batch_size;
    j["iterations"] = model.iterations;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoFailure("write failed on '" + path.string() + "'");
}

BundleModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open '" + path.string() + "' for reading");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw MalformedRow("model file '" + path.string() + "': " + e.what());
    }

    BundleModel model;
    try {
        if (j.at("format_version").get<int>() != 1) {
            throw InvalidParameter("model file '" + path.string() + "': unsupported version");
        }
        model.k = j.at("k").get<std::size_t>();
        const auto flat = j.at("centroids").get<std::vector<double>>();
        if (flat.size() != model.k * 6) {
            throw SizeMismatch("model file '" + path.string() + "': centroid array size " +
                               std::to_string(flat.size()) + " != 6*k");
        }
        model.centroids.resize(model.k);
        for (std::size_t i = 0; i < model.k; ++i) {
            for (int c = 0; c < 6; ++c) model.centroids[i][c] = flat[i * 6 + c];
        }
        model.counts = j.at("counts").get<std::vector<std::uint64_t>>();
        if (model.counts.size() != model.k) {
            throw SizeMismatch("model file '" + path.string() + "': counts size mismatch");
        }
        model.seed = j.at("seed").get<std::uint64_t>();
        model.batch_size = j.at("batch_size").get<std::size_t>();
        model.iterations = j.at("iterations").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw MalformedRow("model file '" + path.string() + "': " + e.what());
    }
    for (const auto& c : model.centroids) {
        for (double v : c) {
            if (!std::isfinite(v)) {
                throw NonFiniteCoordinate("model file '" + path.string() +
                                          "': non-finite centroid");
            }
        }
    }
    return model;
}

}  // namespace ppa
