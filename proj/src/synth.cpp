#include "parcellate/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "parcellate/errors.hpp"
#include "parcellate/rng.hpp"

namespace ppa {

void SynthConfig::validate() const {
    if (n_subjects < 1) throw InvalidConfig("n_subjects must be at least 1");
    if (k_true < 2) throw InvalidConfig("k_true must be at least 2");
    if (bundle_centers.size() != k_true) {
        throw InvalidConfig("bundle_centers must have k_true rows");
    }
    for (const auto& c : bundle_centers) {
        for (double v : c) {
            if (!std::isfinite(v)) throw InvalidConfig("non-finite bundle centre");
        }
    }
    if (!(endpoint_noise_sigma >= 0.0)) throw InvalidConfig("endpoint_noise_sigma must be >= 0");
    if (fibers_min < 1 || fibers_max < fibers_min) {
        throw InvalidConfig("fiber count range must satisfy 1 <= min <= max");
    }
    if (dirichlet_concentration.size() != k_true) {
        throw InvalidConfig("dirichlet_concentration must have k_true entries");
    }
    for (double a : dirichlet_concentration) {
        if (!(a > 0.0)) throw InvalidConfig("dirichlet_concentration entries must be positive");
    }
    if (beta_true.size() != k_true - 1) {
        throw InvalidConfig("beta_true must have k_true - 1 entries (reference dropped)");
    }
    if (!(trait_noise_sigma >= 0.0)) throw InvalidConfig("trait_noise_sigma must be >= 0");
    if (flip_probability < 0.0 || flip_probability > 1.0) {
        throw InvalidConfig("flip_probability must be in [0,1]");
    }
}

std::vector<Centroid6> default_bundle_centers(std::size_t k, double spacing) {
    // one centre per grid cell; endpoint halves offset so each bundle has a
    // distinct direction
    std::vector<Centroid6> centers;
    centers.reserve(k);
    const std::size_t side = static_cast<std::size_t>(std::ceil(std::cbrt(double(k))));
    for (std::size_t i = 0; i < k; ++i) {
        const double x = static_cast<double>(i % side) * spacing;
        const double y = static_cast<double>((i / side) % side) * spacing;
        const double z = static_cast<double>(i / (side * side)) * spacing;
        centers.push_back({x, y, z, x + spacing * 0.35, y + spacing * 0.2, z + spacing * 0.1});
    }
    return centers;
}

namespace {

std::string subject_name(std::size_t index, std::size_t total) {
    std::size_t width = 1;
    for (std::size_t v = total > 0 ? total - 1 : 0; v >= 10; v /= 10) ++width;
    std::string digits = std::to_string(index);
    std::string out = "s";
    out.append(width > digits.size() ? width - digits.size() : 0, '0');
    out += digits;
    return out;
}

}  // namespace

SynthResult generate(const SynthConfig& config) {
    config.validate();

    SynthResult result;
    result.truth.omega_target.resize(config.n_subjects);
    result.truth.omega_true.resize(config.n_subjects);
    result.truth.traits.resize(config.n_subjects);
    result.traits.names = {"trait"};
    result.traits.columns.resize(1);

    std::vector<SubjectTract> subjects(config.n_subjects);

    for (std::size_t si = 0; si < config.n_subjects; ++si) {
        Rng rng(derive_seed(config.seed, "synth-subject-" + std::to_string(si)));

        // bundle mixture for this subject
        std::vector<double> omega(config.k_true);
        double total = 0.0;
        for (std::size_t k = 0; k < config.k_true; ++k) {
            omega[k] = rng.next_gamma(config.dirichlet_concentration[k]);
            total += omega[k];
        }
        for (double& w : omega) w /= total;
        result.truth.omega_target[si] = omega;

        const std::size_t m_i =
            config.fibers_min +
            static_cast<std::size_t>(rng.next_index(config.fibers_max - config.fibers_min + 1));

        SubjectTract& tract = subjects[si];
        tract.subject_id = subject_name(si, config.n_subjects);
        tract.streamlines.reserve(m_i);

        std::vector<std::uint64_t> counts(config.k_true, 0);
        for (std::size_t f = 0; f < m_i; ++f) {
            const std::size_t bundle = rng.next_weighted(omega);
            ++counts[bundle];
            result.truth.fiber_bundle.push_back(static_cast<std::uint32_t>(bundle));

            const Centroid6& centre = config.bundle_centers[bundle];
            Vec3 a{centre[0], centre[1], centre[2]};
            Vec3 b{centre[3], centre[4], centre[5]};
            for (int c = 0; c < 3; ++c) {
                a[c] += config.endpoint_noise_sigma * rng.next_normal();
                b[c] += config.endpoint_noise_sigma * rng.next_normal();
            }

            std::vector<Vec3> points;
            points.reserve(config.midpoints + 2);
            points.push_back(a);
            for (std::size_t mp = 0; mp < config.midpoints; ++mp) {
                const double t = static_cast<double>(mp + 1) /
                                 static_cast<double>(config.midpoints + 1);
                Vec3 interior{a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]),
                              a[2] + t * (b[2] - a[2])};
                for (int c = 0; c < 3; ++c) {
                    interior[c] += config.endpoint_noise_sigma * rng.next_normal();
                }
                points.push_back(interior);
            }
            points.push_back(b);

            if (rng.next_double() < config.flip_probability) {
                std::reverse(points.begin(), points.end());
            }

            Streamline s;
            s.points.reserve(points.size());
            for (const auto& p : points) {
                s.points.push_back({static_cast<float>(p[0]), static_cast<float>(p[1]),
                                    static_cast<float>(p[2])});
            }
            tract.streamlines.push_back(std::move(s));
        }

        // realized proportions drive the trait
        std::vector<double>& realized = result.truth.omega_true[si];
        realized.resize(config.k_true);
        for (std::size_t k = 0; k < config.k_true; ++k) {
            realized[k] = static_cast<double>(counts[k]) / static_cast<double>(m_i);
        }

        double y = config.beta_intercept;
        for (std::size_t k = 0; k + 1 < config.k_true; ++k) {
            y += realized[k] * config.beta_true[k];
        }
        y += config.trait_noise_sigma * rng.next_normal();
        result.truth.traits[si] = y;

        result.traits.subject_ids.push_back(tract.subject_id);
        result.traits.columns[0].push_back(y);
    }

    result.cohort = make_cohort(std::move(subjects));
    return result;
}

namespace {

double pairs_of(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

double adjusted_rand_index(const std::vector<std::uint32_t>& a,
                           const std::vector<std::uint32_t>& b) {
    if (a.size() != b.size()) {
        throw LengthMismatch("adjusted_rand_index: " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()) + " labels");
    }
    if (a.empty()) throw InvalidParameter("adjusted_rand_index: empty partitions");

    const auto relabel = [](const std::vector<std::uint32_t>& labels,
                            std::vector<std::uint32_t>& dense) {
        std::vector<std::uint32_t> sorted(labels);
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        dense.resize(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            dense[i] = static_cast<std::uint32_t>(
                std::lower_bound(sorted.begin(), sorted.end(), labels[i]) - sorted.begin());
        }
        return sorted.size();
    };

    std::vector<std::uint32_t> da;
    std::vector<std::uint32_t> db;
    const std::size_t ka = relabel(a, da);
    const std::size_t kb = relabel(b, db);

    std::vector<double> contingency(ka * kb, 0.0);
    std::vector<double> row_sum(ka, 0.0);
    std::vector<double> col_sum(kb, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        contingency[da[i] * kb + db[i]] += 1.0;
        row_sum[da[i]] += 1.0;
        col_sum[db[i]] += 1.0;
    }

    double index = 0.0;
    for (double c : contingency) index += pairs_of(c);
    double sum_a = 0.0;
    for (double c : row_sum) sum_a += pairs_of(c);
    double sum_b = 0.0;
    for (double c : col_sum) sum_b += pairs_of(c);

    const double all_pairs = pairs_of(static_cast<double>(a.size()));
    const double expected = all_pairs > 0.0 ? sum_a * sum_b / all_pairs : 0.0;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;  // both partitions degenerate and identical
    return (index - expected) / (max_index - expected);
}

double recovery_score(const SynthTruth& truth, const Assignment& assignment) {
    return adjusted_rand_index(truth.fiber_bundle, assignment.bundle_index);
}

SynthConfig synth_config_from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open '" + path.string() + "' for reading");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig("config '" + path.string() + "': " + e.what());
    }

    SynthConfig config;
    try {
        config.n_subjects = j.at("n_subjects").get<std::size_t>();
        config.k_true = j.at("k_true").get<std::size_t>();
        if (j.contains("bundle_centers")) {
            const auto flat = j.at("bundle_centers").get<std::vector<double>>();
            if (flat.size() != config.k_true * 6) {
                throw InvalidConfig("bundle_centers must hold k_true*6 values (row-major)");
            }
            config.bundle_centers.resize(config.k_true);
            for (std::size_t i = 0; i < config.k_true; ++i) {
                for (int c = 0; c < 6; ++c) config.bundle_centers[i][c] = flat[i * 6 + c];
            }
        } else {
            const double spacing = j.value("center_spacing", 100.0);
            config.bundle_centers = default_bundle_centers(config.k_true, spacing);
        }
        config.endpoint_noise_sigma = j.at("endpoint_noise_sigma").get<double>();
        config.fibers_min = j.at("fibers_min").get<std::size_t>();
        config.fibers_max = j.at("fibers_max").get<std::size_t>();
        if (j.contains("dirichlet_concentration")) {
            config.dirichlet_concentration =
                j.at("dirichlet_concentration").get<std::vector<double>>();
        } else {
            config.dirichlet_concentration.assign(config.k_true, 1.0);
        }
        config.beta_intercept = j.value("beta_intercept", 0.0);
        if (j.contains("beta_true")) {
            config.beta_true = j.at("beta_true").get<std::vector<double>>();
        } else {
            config.beta_true.assign(config.k_true - 1, 0.0);
        }
        config.trait_noise_sigma = j.value("trait_noise_sigma", 0.0);
        config.flip_probability = j.value("flip_probability", 0.5);
        config.midpoints = j.value("midpoints", std::size_t{0});
        config.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig("config '" + path.string() + "': " + e.what());
    }
    config.validate();
    return config;
}

void write_synth_config_json(const SynthConfig& config, const std::filesystem::path& path) {
    nlohmann::json j;
    j["n_subjects"] = config.n_subjects;
    j["k_true"] = config.k_true;
    std::vector<double> flat;
    flat.reserve(config.k_true * 6);
    for (const auto& c : config.bundle_centers) flat.insert(flat.end(), c.begin(), c.end());
    j["bundle_centers"] = flat;
    j["endpoint_noise_sigma"] = config.endpoint_noise_sigma;
    j["fibers_min"] = config.fibers_min;
    j["fibers_max"] = config.fibers_max;
    j["dirichlet_concentration"] = config.dirichlet_concentration;
    j["beta_intercept"] = config.beta_intercept;
    j["beta_true"] = config.beta_true;
    j["trait_noise_sigma"] = config.trait_noise_sigma;
    j["flip_probability"] = config.flip_probability;
    j["midpoints"] = config.midpoints;
    j["seed"] = config.seed;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoFailure("write failed on '" + path.string() + "'");
}

void write_truth_json(const SynthTruth& truth, const std::filesystem::path& path) {
    nlohmann::json j;
    j["fiber_bundle"] = truth.fiber_bundle;
    j["omega_target"] = truth.omega_target;
    j["omega_true"] = truth.omega_true;
    j["traits"] = truth.traits;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open '" + path.string() + "' for writing");
    out << j.dump() << '\n';
    if (!out) throw IoFailure("write failed on '" + path.string() + "'");
}

Atlas make_synthetic_atlas(const SynthConfig& config, std::uint32_t grid) {
    config.validate();
    if (grid < 2) throw InvalidParameter("make_synthetic_atlas: grid must be at least 2");

    // bounding box of all centre endpoints, padded by 4 sigma
    Vec3 lo{1e300, 1e300, 1e300};
    Vec3 hi{-1e300, -1e300, -1e300};
    for (const auto& centre : config.bundle_centers) {
        for (int half = 0; half < 2; ++half) {
            for (int c = 0; c < 3; ++c) {
                const double v = centre[half * 3 + c];
                lo[c] = std::min(lo[c], v);
                hi[c] = std::max(hi[c], v);
            }
        }
    }
    const double pad = 4.0 * config.endpoint_noise_sigma + 1.0;
    for (int c = 0; c < 3; ++c) {
        lo[c] -= pad;
        hi[c] += pad;
    }

    std::array<double, 16> affine{};
    for (int c = 0; c < 3; ++c) {
        affine[static_cast<std::size_t>(c) * 4 + c] =
            (hi[c] - lo[c]) / static_cast<double>(grid - 1);
        affine[static_cast<std::size_t>(c) * 4 + 3] = lo[c];
    }
    affine[15] = 1.0;

    // one ROI per endpoint cloud: bundle j owns ROIs 2j+1 (a side) and 2j+2
    const std::size_t p = config.k_true * 2;
    std::vector<std::string> names;
    names.reserve(p);
    for (std::size_t k = 0; k < config.k_true; ++k) {
        names.push_back("Bundle_" + std::to_string(k) + "_A");
        names.push_back("Bundle_" + std::to_string(k) + "_B");
    }

    std::vector<std::uint16_t> labels(static_cast<std::size_t>(grid) * grid * grid);
    std::size_t idx = 0;
    for (std::uint32_t z = 0; z < grid; ++z) {
        for (std::uint32_t y = 0; y < grid; ++y) {
            for (std::uint32_t x = 0; x < grid; ++x) {
                const Vec3 world{affine[0] * x + affine[3], affine[5] * y + affine[7],
                                 affine[10] * z + affine[11]};
                double best_d2 = 1e300;
                std::uint16_t best = 0;
                for (std::size_t k = 0; k < config.k_true; ++k) {
                    const auto& centre = config.bundle_centers[k];
                    for (int half = 0; half < 2; ++half) {
                        const Vec3 endpoint{centre[half * 3 + 0], centre[half * 3 + 1],
                                            centre[half * 3 + 2]};
                        const double d2 = squared_distance(world, endpoint);
                        if (d2 < best_d2) {
                            best_d2 = d2;
                            best = static_cast<std::uint16_t>(k * 2 + half + 1);
                        }
                    }
                }
                labels[idx++] = best;
            }
        }
    }
    return make_atlas({grid, grid, grid}, affine, std::move(labels), std::move(names));
}

}  // namespace ppa
