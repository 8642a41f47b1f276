#ifndef UNIRIG_PERIODIC_HPP
#define UNIRIG_PERIODIC_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "unirig/unimodal.hpp"

namespace unirig {

// A periodic cycle located through its symbolic word.  Points are listed in
// orbit order starting from the representative of the canonical word (the
// lexicographically greatest rotation, R > L).
struct PeriodicOrbit {
    std::vector<double> points;
    int period = 1;
    Itinerary itin;
    double multiplier = 0.0;
};

struct FindPeriodicOptions {
    bool include_divisors = false;
    double residual_tol = 1e-10;
    double critical_tol = 1e-9; // orbits closer than this to the critical point are dropped
};

struct FindPeriodicResult {
    std::vector<PeriodicOrbit> orbits;
    int discarded_near_critical = 0;
};

namespace detail {

inline std::string rotate_word(const std::string& w, std::size_t k) {
    return w.substr(k) + w.substr(0, k);
}

inline std::string canonical_rotation(const std::string& w) {
    std::string best = w;
    for (std::size_t k = 1; k < w.size(); ++k)
        best = std::max(best, rotate_word(w, k));
    return best;
}

inline bool is_proper_power(const std::string& w) {
    const std::size_t n = w.size();
    for (std::size_t d = 1; d < n; ++d) {
        if (n % d != 0) continue;
        bool repeats = true;
        for (std::size_t i = d; i < n && repeats; ++i)
            if (w[i] != w[i % d]) repeats = false;
        if (repeats) return true;
    }
    return false;
}

// Pullback of the word constraint set: { x : f^j(x) in lap(w[j]) for all j }.
inline std::optional<Interval> word_pullback(const UnimodalMap& f, const std::string& w) {
    const double c = f.critical_point();
    Interval K = unit_interval();
    for (std::size_t jj = w.size(); jj-- > 0;) {
        const Interval lap = w[jj] == 'L' ? f.left_lap() : f.right_lap();
        const double va = f(lap.lo), vb = f(lap.hi);
        const Interval image = hull(va, vb);
        const auto clipped = intersect(K, image);
        if (!clipped) return std::nullopt;
        if (clipped->length() < 1e-14) return std::nullopt;
        const double xa = solve_monotone(*f.chain(), lap, clipped->lo);
        const double xb = solve_monotone(*f.chain(), lap, clipped->hi);
        K = hull(xa, xb);
        if (K.length() < 1e-15) return std::nullopt;
        (void)c;
    }
    return K;
}

// One fixed point of the monotone branch of f^n over the word's pullback.
inline std::optional<double> branch_fixed_point(const UnimodalMap& f, const Interval& I,
                                                int n, double residual_tol) {
    auto fn_minus_x = [&](double x) {
        double y = x;
        for (int i = 0; i < n; ++i) y = f(y);
        return y - x;
    };
    double a = I.lo, b = I.hi;
    double ga = fn_minus_x(a), gb = fn_minus_x(b);
    if (std::abs(ga) <= residual_tol) return a;
    if (std::abs(gb) <= residual_tol) return b;
    if (ga * gb > 0.0) return std::nullopt; // word admits no fixed point
    for (int i = 0; i < 200; ++i) {
        const double m = 0.5 * (a + b);
        const double gm = fn_minus_x(m);
        if (gm == 0.0) return m;
        if (ga * gm < 0.0) {
            b = m;
            gb = gm;
        } else {
            a = m;
            ga = gm;
        }
        if (b - a < 4.0 * std::numeric_limits<double>::epsilon()) break;
    }
    const double x = 0.5 * (a + b);
    if (std::abs(fn_minus_x(x)) > residual_tol)
        throw convergence_error("periodic: fixed-point residual above tolerance");
    return x;
}

} // namespace detail

// Multiplier Df^n along the cycle by exact chain rule.
inline double multiplier(const UnimodalMap& f, const std::vector<double>& cycle,
                         double critical_tol = 1e-9) {
    double m = 1.0;
    for (const double x : cycle) {
        if (std::abs(x - f.critical_point()) < critical_tol)
            throw critical_point_error("multiplier: orbit passes through the critical point");
        m *= f.jet(x, 1).d1;
    }
    return m;
}

inline double multiplier(const UnimodalMap& f, const PeriodicOrbit& orbit) {
    return multiplier(f, orbit.points);
}

// All periodic orbits of least period n (or of any period dividing n, when
// include_divisors is set), located per canonical symbolic word by bisection
// on the monotone lap pullback.
inline FindPeriodicResult find_periodic(const UnimodalMap& f, int n,
                                        const FindPeriodicOptions& opt = {}) {
    if (n < 1) throw error("find_periodic: period must be positive");
    if (n > 20) throw error("find_periodic: periods above 20 are out of scale");
    FindPeriodicResult result;
    if (opt.include_divisors) {
        FindPeriodicOptions sub = opt;
        sub.include_divisors = false;
        for (int d = 1; d <= n; ++d) {
            if (n % d != 0) continue;
            FindPeriodicResult part = find_periodic(f, d, sub);
            result.discarded_near_critical += part.discarded_near_critical;
            for (auto& o : part.orbits) result.orbits.push_back(std::move(o));
        }
        return result;
    }

    const double c = f.critical_point();
    for (std::uint64_t mask = 0; mask < (1ull << n); ++mask) {
        std::string w(static_cast<std::size_t>(n), 'L');
        for (int j = 0; j < n; ++j)
            if (mask & (1ull << j)) w[static_cast<std::size_t>(j)] = 'R';
        if (detail::is_proper_power(w)) continue;
        if (w != detail::canonical_rotation(w)) continue;

        const auto I = detail::word_pullback(f, w);
        if (!I) continue;
        const auto root = detail::branch_fixed_point(f, *I, n, opt.residual_tol);
        if (!root) continue;

        PeriodicOrbit orbit;
        orbit.period = n;
        orbit.itin.word = w;
        orbit.points.resize(static_cast<std::size_t>(n));
        double x = *root;
        bool near_critical = false;
        for (int j = 0; j < n; ++j) {
            orbit.points[static_cast<std::size_t>(j)] = x;
            if (std::abs(x - c) < opt.critical_tol) near_critical = true;
            x = f(x);
        }
        if (near_critical) {
            ++result.discarded_near_critical;
            continue;
        }
        if (std::abs(x - *root) > 1e-9)
            throw convergence_error("periodic: orbit closure residual too large");
        orbit.multiplier = multiplier(f, orbit.points, opt.critical_tol);
        result.orbits.push_back(std::move(orbit));
    }
    std::sort(result.orbits.begin(), result.orbits.end(),
              [](const PeriodicOrbit& a, const PeriodicOrbit& b) {
                  return a.itin.word < b.itin.word;
              });
    return result;
}

// ---------------------------------------------------------------------------
// Multiplier spectra of two topologically equivalent maps, matched by
// least-period itinerary (position-free: the conjugacy is only topological).

struct OrbitMatch {
    std::string word;
    int period = 0;
    double mult_f = 0.0;
    double mult_g = 0.0;
    double rel_diff = 0.0;
};

struct SpectrumReport {
    std::vector<OrbitMatch> matched; // sorted by (period, word)
    std::vector<std::string> only_in_f;
    std::vector<std::string> only_in_g;
    double max_rel_diff = 0.0;
    int discarded_f = 0;
    int discarded_g = 0;
    int max_period = 0;

    bool word_sets_match() const { return only_in_f.empty() && only_in_g.empty(); }
};

inline SpectrumReport compare_multipliers(const UnimodalMap& f, const UnimodalMap& g,
                                          int max_period,
                                          const FindPeriodicOptions& opt = {}) {
    SpectrumReport rep;
    rep.max_period = max_period;
    for (int p = 1; p <= max_period; ++p) {
        const FindPeriodicResult rf = find_periodic(f, p, opt);
        const FindPeriodicResult rg = find_periodic(g, p, opt);
        rep.discarded_f += rf.discarded_near_critical;
        rep.discarded_g += rg.discarded_near_critical;
        std::map<std::string, const PeriodicOrbit*> by_word;
        for (const auto& o : rg.orbits) by_word[o.itin.word] = &o;
        for (const auto& of : rf.orbits) {
            const auto it = by_word.find(of.itin.word);
            if (it == by_word.end()) {
                rep.only_in_f.push_back(of.itin.word);
                continue;
            }
            OrbitMatch m;
            m.word = of.itin.word;
            m.period = p;
            m.mult_f = of.multiplier;
            m.mult_g = it->second->multiplier;
            m.rel_diff = std::abs(m.mult_f - m.mult_g) /
                         std::max(std::abs(m.mult_f), std::abs(m.mult_g));
            rep.max_rel_diff = std::max(rep.max_rel_diff, m.rel_diff);
            rep.matched.push_back(m);
            by_word.erase(it);
        }
        for (const auto& [word, orbit] : by_word) {
            (void)orbit;
            rep.only_in_g.push_back(word);
        }
    }
    return rep;
}

// Locate the periodic point carrying an exact itinerary word; its least
// period is the word length whenever the word is aperiodic.  Used to match
// window endpoints across conjugate maps.
inline std::optional<double> periodic_point_for_word(const UnimodalMap& f,
                                                     const std::string& word,
                                                     double residual_tol = 1e-10) {
    const auto I = detail::word_pullback(f, word);
    if (!I) return std::nullopt;
    return detail::branch_fixed_point(f, *I, static_cast<int>(word.size()), residual_tol);
}

// Throwing form of the structural precondition.
inline void require_equivalent(const SpectrumReport& rep) {
    if (!rep.word_sets_match())
        throw structural_mismatch_error(
            "compare_multipliers: realized word sets differ (" +
            std::to_string(rep.only_in_f.size()) + " words only in f, " +
            std::to_string(rep.only_in_g.size()) + " only in g)");
}

} // namespace unirig

#endif
