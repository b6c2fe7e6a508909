#include "parcellate/preprocess.hpp"

#include <algorithm>

#include "parcellate/errors.hpp"

namespace ppa {

double fiber_length(const Streamline& s) {
    validate_streamline(s);
    double total = 0.0;
    for (std::size_t i = 1; i < s.points.size(); ++i) {
        total += distance(widen(s.points[i - 1]), widen(s.points[i]));
    }
    return total;
}

ResampledStreamline resample(const Streamline& s, std::size_t q) {
    if (q < 2) throw InvalidParameter("resample: q must be at least 2");
    validate_streamline(s);

    const std::size_t n = s.points.size();
    std::vector<double> cumulative(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
        cumulative[i] = cumulative[i - 1] + distance(widen(s.points[i - 1]), widen(s.points[i]));
    }
    const double total = cumulative.back();
    if (!(total > 0.0)) throw DegenerateLength("resample: zero arc length");

    ResampledStreamline out;
    out.points.resize(q);
    out.points.front() = widen(s.points.front());
    out.points.back() = widen(s.points.back());

    std::size_t segment = 0;
    for (std::size_t j = 1; j + 1 < q; ++j) {
        const double target = total * static_cast<double>(j) / static_cast<double>(q - 1);
        while (segment + 2 < n && cumulative[segment + 1] < target) ++segment;
        const double seg_len = cumulative[segment + 1] - cumulative[segment];
        const double t = seg_len > 0.0 ? (target - cumulative[segment]) / seg_len : 0.0;
        const Vec3 p0 = widen(s.points[segment]);
        const Vec3 p1 = widen(s.points[segment + 1]);
        out.points[j] = {p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1]),
                         p0[2] + t * (p1[2] - p0[2])};
    }
    return out;
}

namespace {

struct TrackDistance {
    double mdf;
    bool flipped;
};

TrackDistance track_distance(const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
    const std::size_t q = x.size();
    double direct = 0.0;
    double reversed = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
        direct += distance(x[j], y[j]);
        reversed += distance(x[j], y[q - 1 - j]);
    }
    direct /= static_cast<double>(q);
    reversed /= static_cast<double>(q);
    if (reversed < direct) return {reversed, true};
    return {direct, false};
}

}  // namespace

double mdf_distance(const ResampledStreamline& x, const ResampledStreamline& y) {
    if (x.points.size() != y.points.size()) {
        throw MismatchedPointCount("mdf_distance: " + std::to_string(x.points.size()) + " vs " +
                                   std::to_string(y.points.size()) + " points");
    }
    if (x.points.empty()) throw InvalidParameter("mdf_distance: empty tracks");
    return track_distance(x.points, y.points).mdf;
}

SubjectTract filter_outliers(const SubjectTract& tract, double threshold,
                             double min_cluster_fraction, std::size_t q) {
    if (!(threshold > 0.0)) throw InvalidParameter("filter_outliers: threshold must be > 0");
    if (!(min_cluster_fraction > 0.0) || !(min_cluster_fraction < 1.0)) {
        throw InvalidParameter("filter_outliers: min_cluster_fraction must be in (0,1)");
    }
    validate_tract(tract);

    const std::size_t m = tract.streamlines.size();
    std::vector<ResampledStreamline> tracks;
    tracks.reserve(m);
    for (const auto& s : tract.streamlines) tracks.push_back(resample(s, q));

    struct Cluster {
        std::vector<Vec3> centroid;
        std::vector<std::size_t> members;
    };
    std::vector<Cluster> clusters;

    for (std::size_t i = 0; i < m; ++i) {
        bool assigned = false;
        for (auto& cluster : clusters) {
            const TrackDistance d = track_distance(tracks[i].points, cluster.centroid);
            if (d.mdf <= threshold) {
                cluster.members.push_back(i);
                const double count = static_cast<double>(cluster.members.size());
                for (std::size_t j = 0; j < q; ++j) {
                    // member track oriented the way the assignment measured it
                    const Vec3& p = d.flipped ? tracks[i].points[q - 1 - j] : tracks[i].points[j];
                    for (int c = 0; c < 3; ++c) {
                        cluster.centroid[j][c] += (p[c] - cluster.centroid[j][c]) / count;
                    }
                }
                assigned = true;
                break;
            }
        }
        if (!assigned) {
            clusters.push_back({tracks[i].points, {i}});
        }
    }

    const double min_size = min_cluster_fraction * static_cast<double>(m);
    std::vector<std::size_t> kept;
    for (const auto& cluster : clusters) {
        if (static_cast<double>(cluster.members.size()) >= min_size) {
            kept.insert(kept.end(), cluster.members.begin(), cluster.members.end());
        }
    }
    if (kept.empty()) {
        throw AllFibersRemoved("filter_outliers: no cluster reaches fraction " +
                               std::to_string(min_cluster_fraction) + " of " + std::to_string(m) +
                               " fibers (threshold too strict?)");
    }
    std::sort(kept.begin(), kept.end());

    SubjectTract out;
    out.subject_id = tract.subject_id;
    out.streamlines.reserve(kept.size());
    for (std::size_t i : kept) out.streamlines.push_back(tract.streamlines[i]);
    return out;
}

EndpointDataset extract_endpoints(const Cohort& cohort) {
    EndpointDataset dataset;
    dataset.pairs.reserve(cohort.total_fibers);
    for (std::size_t si = 0; si < cohort.subjects.size(); ++si) {
        const auto& tract = cohort.subjects[si];
        for (std::size_t fi = 0; fi < tract.streamlines.size(); ++fi) {
            const auto& s = tract.streamlines[fi];
            EndpointPair pair;
            pair.a = widen(s.points.front());
            pair.b = widen(s.points.back());
            pair.subject_index = si;
            pair.fiber_index = fi;
            pair.fiber_length = fiber_length(s);
            dataset.pairs.push_back(pair);
        }
    }
    return dataset;
}

}  // namespace ppa
