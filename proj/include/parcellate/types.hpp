#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace ppa {

// Coordinates are kept at file precision (32-bit float, millimetres, world
// space); all geometry is evaluated in double.
using Point3f = std::array<float, 3>;
using Vec3 = std::array<double, 3>;

inline Vec3 widen(const Point3f& p) {
    return {static_cast<double>(p[0]), static_cast<double>(p[1]), static_cast<double>(p[2])};
}

inline double squared_distance(const Vec3& a, const Vec3& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

inline double distance(const Vec3& a, const Vec3& b) {
    return std::sqrt(squared_distance(a, b));
}

// One fiber tract: an ordered 3-D polyline with at least 2 points and
// positive arc length.
struct Streamline {
    std::vector<Point3f> points;

    bool operator==(const Streamline&) const = default;
};

struct SubjectTract {
    std::string subject_id;
    std::vector<Streamline> streamlines;

    bool operator==(const SubjectTract&) const = default;
};

// Subjects ordered by subject_id; build through make_cohort so the ordering
// and fiber totals stay consistent.
struct Cohort {
    std::vector<SubjectTract> subjects;
    std::size_t total_fibers = 0;
};

// Throws InvalidStreamline / NonFiniteCoordinate on violation.
void validate_streamline(const Streamline& s);

// Throws on empty id, empty streamline list, or any invalid streamline.
void validate_tract(const SubjectTract& t);

// Sorts by subject_id, rejects duplicates, computes total_fibers.
Cohort make_cohort(std::vector<SubjectTract> subjects);

// 6-D endpoint representation of one fiber: the two endpoints of the source
// streamline plus bookkeeping for composition and connectivity matrices.
struct EndpointPair {
    Vec3 a{};
    Vec3 b{};
    std::size_t subject_index = 0;
    std::size_t fiber_index = 0;
    double fiber_length = 0.0;
};

// The pooled endpoint matrix: one column per fiber across the whole cohort,
// subject-major and fiber-minor.
struct EndpointDataset {
    std::vector<EndpointPair> pairs;

    std::size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }
};

}  // namespace ppa
