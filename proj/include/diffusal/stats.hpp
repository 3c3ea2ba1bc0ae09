#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include <boost/math/distributions/students_t.hpp>

#include "error.hpp"

namespace diffusal {

inline double mean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x)
        s += v;
    return s / static_cast<double>(x.size());
}

/// Unbiased sample variance.
inline double sample_variance(std::span<const double> x) {
    const double m = mean(x);
    double s = 0.0;
    for (double v : x)
        s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p_value = 1.0;
};

/**
 * Two-sided Welch (unequal variance) t-test.
 *
 * When both samples are constant the test is decided by the means
 * alone: p = 1 if they are equal, p = 0 otherwise.
 */
inline WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2)
        throw ConfigError("welch_t_test: each sample needs at least two values");
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double ma = mean(a), mb = mean(b);
    const double va = sample_variance(a) / na, vb = sample_variance(b) / nb;
    WelchResult r;
    auto constant = [](std::span<const double> x) {
        return std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
    };
    if (constant(a) && constant(b)) {
        const bool same = a[0] == b[0];
        r.t = same ? 0.0 : std::copysign(INFINITY, a[0] - b[0]);
        r.df = na + nb - 2.0;
        r.p_value = same ? 1.0 : 0.0;
        return r;
    }
    r.t = (ma - mb) / std::sqrt(va + vb);
    r.df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    const boost::math::students_t dist(r.df);
    r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
    return r;
}

} // namespace diffusal
