#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "errors.hpp"

namespace hudsim {

/// Keeps reported p-values inside (0, 1].
inline double clamp_p(double p) {
    if (std::isnan(p)) return 1.0;
    return std::clamp(p, std::numeric_limits<double>::min(), 1.0);
}

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
inline double t_two_tailed_p(double t, double df) {
    if (!(df > 0.0)) throw DomainError("t distribution needs df > 0");
    if (std::isinf(t)) return clamp_p(0.0);
    boost::math::students_t dist(df);
    return clamp_p(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

/// P(F >= f) for the F distribution.
inline double f_upper_p(double f, double df1, double df2) {
    if (!(df1 > 0.0 && df2 > 0.0)) throw DomainError("F distribution needs positive df");
    if (!(f > 0.0)) return 1.0;
    if (std::isinf(f)) return clamp_p(0.0);
    boost::math::fisher_f dist(df1, df2);
    return clamp_p(boost::math::cdf(boost::math::complement(dist, f)));
}

/// P(|Z| >= |z|) for the standard normal.
inline double normal_two_tailed_p(double z) {
    return clamp_p(std::erfc(std::abs(z) / std::sqrt(2.0)));
}

}  // namespace hudsim
