#include "parcellate/types.hpp"

#include <algorithm>

#include "parcellate/errors.hpp"

namespace ppa {

void validate_streamline(const Streamline& s) {
    if (s.points.size() < 2) {
        throw InvalidStreamline("streamline has " + std::to_string(s.points.size()) +
                                " point(s), need at least 2");
    }
    double arc = 0.0;
    for (std::size_t i = 0; i < s.points.size(); ++i) {
        const auto& p = s.points[i];
        if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
            throw NonFiniteCoordinate("non-finite coordinate at point " + std::to_string(i));
        }
        if (i > 0) arc += distance(widen(s.points[i - 1]), widen(p));
    }
    if (!(arc > 0.0)) {
        throw InvalidStreamline("streamline has zero arc length");
    }
}

void validate_tract(const SubjectTract& t) {
    if (t.subject_id.empty()) {
        throw InvalidParameter("subject id must be non-empty");
    }
    if (t.streamlines.empty()) {
        throw EmptyFile("subject '" + t.subject_id + "' has no streamlines");
    }
    for (const auto& s : t.streamlines) validate_streamline(s);
}

Cohort make_cohort(std::vector<SubjectTract> subjects) {
    if (subjects.empty()) {
        throw InvalidParameter("cohort needs at least one subject");
    }
    for (const auto& t : subjects) validate_tract(t);
    std::sort(subjects.begin(), subjects.end(),
              [](const SubjectTract& a, const SubjectTract& b) { return a.subject_id < b.subject_id; });
    for (std::size_t i = 1; i < subjects.size(); ++i) {
        if (subjects[i].subject_id == subjects[i - 1].subject_id) {
            throw DuplicateSubject("duplicate subject id '" + subjects[i].subject_id + "'");
        }
    }
    Cohort cohort;
    cohort.subjects = std::move(subjects);
    cohort.total_fibers = 0;
    for (const auto& t : cohort.subjects) cohort.total_fibers += t.streamlines.size();
    return cohort;
}

}  // namespace ppa
