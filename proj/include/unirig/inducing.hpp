#ifndef UNIRIG_INDUCING_HPP
#define UNIRIG_INDUCING_HPP

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "unirig/markov.hpp"
#include "unirig/periodic.hpp"

namespace unirig {

// ---------------------------------------------------------------------------
// Windows U = [a,b] with periodic endpoints whose orbits avoid int(U), and
// the maximal surrounding interval V containing no other orbit point.

struct Window {
    Interval U{-1.0, 1.0};
    int period_a = 0, period_b = 0;
    std::vector<double> orbit_a, orbit_b;
    std::string word_a, word_b; // itineraries anchored at a and b
    Interval V{-1.0, 1.0};

    double a() const { return U.lo; }
    double b() const { return U.hi; }
};

namespace detail {

inline std::vector<double> orbit_points(const UnimodalMap& f, double x, int period) {
    std::vector<double> pts(static_cast<std::size_t>(period));
    for (int i = 0; i < period; ++i) {
        pts[static_cast<std::size_t>(i)] = x;
        x = f(x);
    }
    return pts;
}

inline bool orbits_avoid_interior(const std::vector<double>& pts, double a, double b) {
    for (const double p : pts)
        if (p > a + 1e-12 && p < b - 1e-12) return false;
    return true;
}

inline Interval surrounding_interval(const std::vector<double>& pts, const Interval& A,
                                     double a, double b) {
    double lo = A.lo, hi = A.hi;
    for (const double p : pts) {
        if (p < a - 1e-12) lo = std::max(lo, p);
        if (p > b + 1e-12) hi = std::min(hi, p);
    }
    return Interval(lo, hi);
}

} // namespace detail

// Search periodic points of period <= max_period around the center and pick
// the admissible pair: smallest maximal period first, then widest relative
// Koebe space |V|/|U|, then smallest |U|.
inline Window find_window(const UnimodalMap& f, double center, int max_period) {
    const Interval A = f.attractor_interval();
    if (!(center > A.lo + 1e-9 && center < A.hi - 1e-9))
        throw window_not_found_error("find_window: center outside int(A_f)");

    struct Endpoint {
        double x;
        int period;
        const PeriodicOrbit* orbit;
    };
    std::vector<FindPeriodicResult> found;
    found.reserve(static_cast<std::size_t>(max_period));
    for (int p = 1; p <= max_period; ++p) found.push_back(find_periodic(f, p));

    std::vector<Endpoint> below, above;
    for (int p = 1; p <= max_period; ++p)
        for (const auto& orbit : found[static_cast<std::size_t>(p - 1)].orbits)
            for (const double x : orbit.points) {
                if (x <= A.lo + 1e-9 || x >= A.hi - 1e-9) continue;
                if (x < center)
                    below.push_back({x, p, &orbit});
                else if (x > center)
                    above.push_back({x, p, &orbit});
            }

    const Window* best_marker = nullptr;
    (void)best_marker;
    std::optional<Window> best;
    double best_margin = 0.0;
    int best_period = max_period + 1;
    for (const auto& lo : below)
        for (const auto& hi : above) {
            const int period = std::max(lo.period, hi.period);
            if (period > best_period) continue;
            if (!detail::orbits_avoid_interior(lo.orbit->points, lo.x, hi.x)) continue;
            if (!detail::orbits_avoid_interior(hi.orbit->points, lo.x, hi.x)) continue;
            std::vector<double> all = lo.orbit->points;
            all.insert(all.end(), hi.orbit->points.begin(), hi.orbit->points.end());
            const Interval U(lo.x, hi.x);
            const Interval V = detail::surrounding_interval(all, A, lo.x, hi.x);
            const double margin = V.length() / U.length();
            const bool better =
                period < best_period ||
                (period == best_period && margin > best_margin + 1e-12) ||
                (period == best_period && std::abs(margin - best_margin) <= 1e-12 &&
                 best && U.length() < best->U.length() - 1e-12);
            if (!better) continue;
            Window w;
            w.U = U;
            w.V = V;
            w.period_a = lo.period;
            w.period_b = hi.period;
            w.orbit_a = detail::orbit_points(f, lo.x, lo.period);
            w.orbit_b = detail::orbit_points(f, hi.x, hi.period);
            w.word_a = itinerary(f, lo.x, lo.period).word;
            w.word_b = itinerary(f, hi.x, hi.period).word;
            best = std::move(w);
            best_margin = margin;
            best_period = period;
        }
    if (!best)
        throw window_not_found_error("find_window: no admissible periodic pair within period " +
                                     std::to_string(max_period));
    return *best;
}

// The window of g matched to f's window through the conjugacy: endpoints are
// located by their itinerary words (which the conjugacy preserves).
inline Window matched_window(const UnimodalMap& g, const Window& wf) {
    const auto a = periodic_point_for_word(g, wf.word_a);
    const auto b = periodic_point_for_word(g, wf.word_b);
    if (!a || !b)
        throw structural_mismatch_error("matched_window: endpoint word not realized by g");
    if (!(*a < *b))
        throw structural_mismatch_error("matched_window: matched endpoints out of order");
    Window w;
    w.U = Interval(*a, *b);
    w.period_a = wf.period_a;
    w.period_b = wf.period_b;
    w.orbit_a = detail::orbit_points(g, *a, wf.period_a);
    w.orbit_b = detail::orbit_points(g, *b, wf.period_b);
    w.word_a = wf.word_a;
    w.word_b = wf.word_b;
    if (!detail::orbits_avoid_interior(w.orbit_a, *a, *b) ||
        !detail::orbits_avoid_interior(w.orbit_b, *a, *b))
        throw structural_mismatch_error("matched_window: orbit enters the matched window");
    std::vector<double> all = w.orbit_a;
    all.insert(all.end(), w.orbit_b.begin(), w.orbit_b.end());
    w.V = detail::surrounding_interval(all, g.attractor_interval(), *a, *b);
    return w;
}

// ---------------------------------------------------------------------------
// Monotone-onto search: the smallest m with an interval M inside T mapped
// monotonically onto A_f, breadth-first over monotone pullback pieces.

struct MonotoneOnto {
    Interval M{-1.0, 1.0};
    int time = 0;
};

namespace detail {

struct Piece {
    double mlo, mhi; // subinterval of the seed
    double jlo, jhi; // f^m images of the endpoints (signed order)
    int m;
};

// Bisection for f^m(x) = target inside a monotone piece.
inline double solve_in_piece(const UnimodalMap& f, const Piece& p, double target) {
    double a = p.mlo, b = p.mhi;
    double fa = p.jlo - target;
    auto fm = [&](double x) {
        for (int i = 0; i < p.m; ++i) x = f(x);
        return x;
    };
    if (std::abs(fa) <= 1e-13) return a;
    if (std::abs(p.jhi - target) <= 1e-13) return b;
    if ((p.jlo - target) * (p.jhi - target) > 0.0)
        return std::abs(p.jlo - target) < std::abs(p.jhi - target) ? a : b;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b);
        const double g = fm(mid) - target;
        if (g == 0.0) return mid;
        if ((g > 0.0) == (fa > 0.0)) {
            a = mid;
            fa = g;
        } else {
            b = mid;
        }
        if (b - a < 8.0 * std::numeric_limits<double>::epsilon()) break;
    }
    return 0.5 * (a + b);
}

} // namespace detail

inline MonotoneOnto monotone_onto(const UnimodalMap& f, const Interval& T, int max_time) {
    const Interval A = f.attractor_interval();
    const double c = f.critical_point();
    std::deque<detail::Piece> queue;
    auto seed = [&](double lo, double hi) {
        if (hi - lo > 1e-13) queue.push_back({lo, hi, f(lo), f(hi), 1});
    };
    if (T.contains(c) && c - T.lo > 1e-13 && T.hi - c > 1e-13) {
        seed(T.lo, c);
        seed(c, T.hi);
    } else {
        seed(T.lo, T.hi);
    }
    while (!queue.empty()) {
        detail::Piece p = queue.front();
        queue.pop_front();
        const double lo = std::min(p.jlo, p.jhi), hi = std::max(p.jlo, p.jhi);
        if (lo <= A.lo + 1e-12 && hi >= A.hi - 1e-12) {
            const double xa = detail::solve_in_piece(f, p, A.lo);
            const double xb = detail::solve_in_piece(f, p, A.hi);
            return {hull(xa, xb), p.m};
        }
        if (p.m >= max_time) continue;
        if (c > lo + 1e-13 && c < hi - 1e-13) {
            const double xs = detail::solve_in_piece(f, p, c);
            if (xs - p.mlo > 1e-13)
                queue.push_back({p.mlo, xs, f(p.jlo), f(c), p.m + 1});
            if (p.mhi - xs > 1e-13)
                queue.push_back({xs, p.mhi, f(c), f(p.jhi), p.m + 1});
        } else {
            queue.push_back({p.mlo, p.mhi, f(p.jlo), f(p.jhi), p.m + 1});
        }
    }
    throw search_exhausted_error("monotone_onto: no monotone-onto interval within time " +
                                 std::to_string(max_time));
}

// ---------------------------------------------------------------------------
// Good intervals and the first generation partition of the window.

struct GoodInterval {
    Interval I{-1.0, 1.0};
    int return_time = 0;
    bool reversing = false;        // orientation of f^{n_I} on I
    Interval T{-1.0, 1.0};         // monotone extension onto A_f (when realized)
    bool has_full_extension = false;
    Interval E{-1.0, 1.0};         // monotone extension onto V
};

struct FirstGeneration {
    std::vector<GoodInterval> goods; // sorted by left endpoint
    double coverage = 0.0;
    bool reached_target = false;
    int time_used = 0;
    int discarded_without_extension = 0;
};

struct FirstGenerationOptions {
    bool keep_nested = false; // enumerate descendants of extracted intervals too
    double min_piece = 1e-13;
};

namespace detail {

// Maximal monotone branch of f^m around a point of the interval, via the
// full-lap pullback of its itinerary; empty when the pullback degenerates.
inline std::optional<Interval> maximal_monotone(const UnimodalMap& f, const Interval& I,
                                                int m) {
    for (const double frac : {0.0, -0.26, 0.26, -0.5, 0.5}) {
        const std::string w = itinerary(f, I.from_unit(frac), m).word;
        if (w.find('C') == std::string::npos) return word_pullback(f, w);
    }
    return std::nullopt;
}

} // namespace detail

inline FirstGeneration first_generation(const UnimodalMap& f, const Window& W, int max_time,
                                        double coverage_target,
                                        const FirstGenerationOptions& opt = {}) {
    const Interval A = f.attractor_interval();
    const double c = f.critical_point();
    const Interval& U = W.U;

    FirstGeneration out;
    std::deque<detail::Piece> level;     // pieces at the current time
    std::deque<detail::Piece> next;      // pieces advanced to time m+1
    auto seed = [&](double lo, double hi) {
        if (hi - lo > opt.min_piece) level.push_back({lo, hi, f(lo), f(hi), 1});
    };
    if (U.contains(c) && c - U.lo > opt.min_piece && U.hi - c > opt.min_piece) {
        seed(U.lo, c);
        seed(c, U.hi);
    } else {
        seed(U.lo, U.hi);
    }

    double covered = 0.0;
    std::vector<detail::Piece> stack;
    for (int m = 1; m <= max_time && !(covered / U.length() >= coverage_target); ++m) {
        out.time_used = m;
        while (!level.empty()) {
            stack.push_back(level.front());
            level.pop_front();
            while (!stack.empty()) {
                detail::Piece p = stack.back();
                stack.pop_back();
                const double lo = std::min(p.jlo, p.jhi), hi = std::max(p.jlo, p.jhi);
                if (lo <= U.lo + 1e-12 && hi >= U.hi - 1e-12) {
                    // This piece returns over the whole window: extract.
                    const double xa = detail::solve_in_piece(f, p, U.lo);
                    const double xb = detail::solve_in_piece(f, p, U.hi);
                    const Interval I = hull(xa, xb);
                    GoodInterval good;
                    good.I = I;
                    good.return_time = p.m;
                    good.reversing = p.jlo > p.jhi;
                    bool keep = false;
                    const auto branch = detail::maximal_monotone(f, I, p.m);
                    if (branch) {
                        detail::Piece full{branch->lo, branch->hi, 0.0, 0.0, p.m};
                        double v = branch->lo;
                        for (int i = 0; i < p.m; ++i) v = f(v);
                        full.jlo = v;
                        v = branch->hi;
                        for (int i = 0; i < p.m; ++i) v = f(v);
                        full.jhi = v;
                        const double blo = std::min(full.jlo, full.jhi);
                        const double bhi = std::max(full.jlo, full.jhi);
                        if (blo <= W.V.lo + 1e-9 && bhi >= W.V.hi - 1e-9) {
                            keep = true;
                            good.E = hull(detail::solve_in_piece(f, full, W.V.lo),
                                          detail::solve_in_piece(f, full, W.V.hi));
                            if (blo <= A.lo + 1e-9 && bhi >= A.hi - 1e-9) {
                                good.has_full_extension = true;
                                good.T = hull(detail::solve_in_piece(f, full, A.lo),
                                              detail::solve_in_piece(f, full, A.hi));
                            }
                        }
                    }
                    if (keep) {
                        covered += I.length();
                        out.goods.push_back(good);
                    } else {
                        ++out.discarded_without_extension;
                    }
                    // Remainder pieces continue at the same time.
                    const double ia = std::min(xa, xb), ib = std::max(xa, xb);
                    if (ia - p.mlo > opt.min_piece)
                        stack.push_back({p.mlo, ia, p.jlo, p.jlo < p.jhi ? U.lo : U.hi, p.m});
                    if (p.mhi - ib > opt.min_piece)
                        stack.push_back({ib, p.mhi, p.jlo < p.jhi ? U.hi : U.lo, p.jhi, p.m});
                    if (opt.keep_nested && keep)
                        stack.push_back({ia, ib, p.jlo < p.jhi ? U.lo : U.hi,
                                         p.jlo < p.jhi ? U.hi : U.lo, p.m});
                    continue;
                }
                if (c > lo + 1e-12 && c < hi - 1e-12) {
                    const double xs = detail::solve_in_piece(f, p, c);
                    if (xs - p.mlo > opt.min_piece)
                        stack.push_back({p.mlo, xs, p.jlo, c, p.m});
                    if (p.mhi - xs > opt.min_piece)
                        stack.push_back({xs, p.mhi, c, p.jhi, p.m});
                    continue;
                }
                if (p.m < max_time) next.push_back({p.mlo, p.mhi, f(p.jlo), f(p.jhi), p.m + 1});
            }
        }
        level.swap(next);
        if (level.empty()) break;
    }
    out.coverage = covered / U.length();
    out.reached_target = out.coverage >= coverage_target;
    std::sort(out.goods.begin(), out.goods.end(),
              [](const GoodInterval& x, const GoodInterval& y) { return x.I.lo < y.I.lo; });
    if (opt.keep_nested) {
        // Keep only intervals not strictly contained in another.
        std::vector<GoodInterval> first;
        for (const auto& g : out.goods) {
            bool contained = false;
            for (const auto& other : out.goods)
                if (other.I.strictly_contains(g.I, 1e-12)) {
                    contained = true;
                    break;
                }
            if (!contained) first.push_back(g);
        }
        out.goods = std::move(first);
        out.coverage = 0.0;
        for (const auto& g : out.goods) out.coverage += g.I.length();
        out.coverage /= U.length();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Assembly: rescale the window to [-1,1] and wrap the return maps f^{n_I}
// as Markov branches carrying their Koebe extensions onto V.

struct InducedMap {
    MarkovMap map;
    Window window;
    MapPtr to_unit;   // s : U -> [-1,1]
    MapPtr from_unit; // s^{-1}
    std::vector<GoodInterval> goods;
    MarkovValidation validation;
    double coverage = 0.0;
};

inline InducedMap build_induced(const UnimodalMap& f, const Window& W,
                                const std::vector<GoodInterval>& goods,
                                const ValidateOptions& vopt = {}) {
    if (goods.empty()) throw construction_error("build_induced: no branches");
    const MapPtr s = affine_onto(W.U, unit_interval());
    const MapPtr s_inv = affine_onto(unit_interval(), W.U);
    const Interval sV = hull(s->value(W.V.lo), s->value(W.V.hi));
    const double margin = std::min(-1.0 - sV.lo, sV.hi - 1.0);
    if (margin < 0.0)
        throw construction_error("build_induced: V does not strictly contain U");

    std::vector<MarkovBranch> branches;
    branches.reserve(goods.size());
    for (const auto& g : goods) {
        MarkovBranch b;
        b.domain = hull(s->value(g.I.lo), s->value(g.I.hi));
        if (g.reversing) b.domain.orient = Orientation::reversed;
        b.map = compose(s, compose(iterate(f.chain(), g.return_time), s_inv));
        b.extension = hull(s->value(g.E.lo), s->value(g.E.hi));
        b.extension_range = sV;
        b.reversing = g.reversing;
        b.return_time = g.return_time;
        branches.push_back(std::move(b));
    }
    // Measure the regularity bound before freezing the map.
    double K = 0.0;
    for (const auto& b : branches) {
        const Diffeo inv = rescale(inverse_branch(b.map, b.domain), unit_interval());
        K = std::max(K, cr_norm(inv, 2, vopt.norm_grid));
    }
    MarkovMap map(std::move(branches), margin, K, 3);
    MarkovValidation val = validate(map, vopt);
    if (!val.valid)
        throw construction_error("build_induced: assembled map failed validation (" +
                                 val.summary() + ")");
    InducedMap out{std::move(map), W, s, s_inv, goods, std::move(val), 0.0};
    out.coverage = out.map.coverage();
    return out;
}

} // namespace unirig

#endif
