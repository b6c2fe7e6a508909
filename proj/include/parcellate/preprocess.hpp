#pragma once

#include <cstddef>

#include "parcellate/types.hpp"

namespace ppa {

// Sum of consecutive-point Euclidean distances, in mm.
double fiber_length(const Streamline& s);

// Exactly q points, equidistant in arc length; first/last equal the
// original endpoints.
struct ResampledStreamline {
    std::vector<Vec3> points;
};

ResampledStreamline resample(const Streamline& s, std::size_t q);

// Minimum average direct-flip distance between equal-length tracks:
// min( mean_j |x_j - y_j| , mean_j |x_j - y_{Q-1-j}| ).
double mdf_distance(const ResampledStreamline& x, const ResampledStreamline& y);

// Single-pass QuickBundles-style outlier removal. Each resampled streamline
// joins the first cluster whose centroid track lies within `threshold` MDF
// (else opens a new cluster); the centroid track is the running mean of
// member tracks under the orientation chosen at assignment. Clusters smaller
// than min_cluster_fraction * m_i are dropped; survivors keep input order.
SubjectTract filter_outliers(const SubjectTract& tract, double threshold,
                             double min_cluster_fraction, std::size_t q);

// One EndpointPair per fiber, subject-major and fiber-minor.
EndpointDataset extract_endpoints(const Cohort& cohort);

}  // namespace ppa
