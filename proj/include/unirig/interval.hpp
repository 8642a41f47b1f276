#ifndef UNIRIG_INTERVAL_HPP
#define UNIRIG_INTERVAL_HPP

#include <algorithm>
#include <cmath>
#include <optional>

#include "unirig/errors.hpp"

namespace unirig {

enum class Orientation { forward, reversed };

// Closed nondegenerate interval [lo, hi], optionally carrying an orientation
// tag used by branch systems whose maps reverse the usual order.
struct Interval {
    double lo = -1.0;
    double hi = 1.0;
    Orientation orient = Orientation::forward;

    Interval() = default;
    Interval(double lo_, double hi_, Orientation o = Orientation::forward)
        : lo(lo_), hi(hi_), orient(o) {
        if (!(lo < hi))
            throw error("Interval: need lo < hi, got [" + std::to_string(lo_) +
                        ", " + std::to_string(hi_) + "]");
    }

    double length() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }

    bool contains(double x, double tol = 0.0) const {
        return x >= lo - tol && x <= hi + tol;
    }
    bool contains(const Interval& other, double tol = 0.0) const {
        return other.lo >= lo - tol && other.hi <= hi + tol;
    }
    bool strictly_contains(const Interval& other, double tol = 0.0) const {
        return contains(other, tol) &&
               (other.lo > lo + tol || other.hi < hi - tol);
    }
    // Open interiors share a point.
    bool interior_overlaps(const Interval& other, double tol = 0.0) const {
        return std::min(hi, other.hi) - std::max(lo, other.lo) > tol;
    }

    // Map a parameter in [-1,1] affinely onto this interval.
    double from_unit(double s) const { return mid() + 0.5 * length() * s; }
    // Inverse of from_unit.
    double to_unit(double x) const { return (2.0 * x - lo - hi) / length(); }
};

inline std::optional<Interval> intersect(const Interval& a, const Interval& b) {
    const double lo = std::max(a.lo, b.lo);
    const double hi = std::min(a.hi, b.hi);
    if (lo < hi) return Interval(lo, hi);
    return std::nullopt;
}

inline Interval hull(double a, double b) {
    return a < b ? Interval(a, b) : Interval(b, a);
}

inline const Interval& unit_interval() {
    static const Interval u(-1.0, 1.0);
    return u;
}

} // namespace unirig

#endif
