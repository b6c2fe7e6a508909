#pragma once

#include <stdexcept>
#include <string>

namespace ppa {

// Base class for every typed pipeline error. The CLI maps these to exit 1;
// usage errors exit 2. Anything else escaping is a bug.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// ---- tract file parsing ----
struct BadMagic : Error {
    explicit BadMagic(const std::string& msg) : Error(msg) {}
};
struct TruncatedFile : Error {
    explicit TruncatedFile(const std::string& msg) : Error(msg) {}
};
struct NonFiniteCoordinate : Error {
    explicit NonFiniteCoordinate(const std::string& msg) : Error(msg) {}
};
struct EmptyFile : Error {
    explicit EmptyFile(const std::string& msg) : Error(msg) {}
};
struct IoFailure : Error {
    explicit IoFailure(const std::string& msg) : Error(msg) {}
};
struct MalformedRow : Error {
    explicit MalformedRow(const std::string& msg) : Error(msg) {}
};
struct UnsortedPoints : Error {
    explicit UnsortedPoints(const std::string& msg) : Error(msg) {}
};
// A streamline with fewer than 2 points or zero arc length.
struct InvalidStreamline : Error {
    explicit InvalidStreamline(const std::string& msg) : Error(msg) {}
};
struct DuplicateSubject : Error {
    explicit DuplicateSubject(const std::string& msg) : Error(msg) {}
};

// ---- preprocessing ----
struct DegenerateLength : Error {
    explicit DegenerateLength(const std::string& msg) : Error(msg) {}
};
struct MismatchedPointCount : Error {
    explicit MismatchedPointCount(const std::string& msg) : Error(msg) {}
};
struct AllFibersRemoved : Error {
    explicit AllFibersRemoved(const std::string& msg) : Error(msg) {}
};

// ---- clustering ----
struct InsufficientData : Error {
    explicit InsufficientData(const std::string& msg) : Error(msg) {}
};
struct MisalignedAssignment : Error {
    explicit MisalignedAssignment(const std::string& msg) : Error(msg) {}
};

// ---- regression ----
struct KTooSmall : Error {
    explicit KTooSmall(const std::string& msg) : Error(msg) {}
};
struct NoConvergence : Error {
    explicit NoConvergence(const std::string& msg) : Error(msg) {}
};
struct AlphaZeroPath : Error {
    explicit AlphaZeroPath(const std::string& msg) : Error(msg) {}
};
struct TooFewSubjects : Error {
    explicit TooFewSubjects(const std::string& msg) : Error(msg) {}
};
struct SizeMismatch : Error {
    explicit SizeMismatch(const std::string& msg) : Error(msg) {}
};
struct NonSquare : Error {
    explicit NonSquare(const std::string& msg) : Error(msg) {}
};

// ---- atlas ----
struct LabelOutOfRange : Error {
    explicit LabelOutOfRange(const std::string& msg) : Error(msg) {}
};
struct SingularAffine : Error {
    explicit SingularAffine(const std::string& msg) : Error(msg) {}
};

// ---- synthetic cohorts ----
struct InvalidConfig : Error {
    explicit InvalidConfig(const std::string& msg) : Error(msg) {}
};
struct LengthMismatch : Error {
    explicit LengthMismatch(const std::string& msg) : Error(msg) {}
};

// Violated operation precondition (bad flag value, zero iterations, ...).
struct InvalidParameter : Error {
    explicit InvalidParameter(const std::string& msg) : Error(msg) {}
};

}  // namespace ppa
