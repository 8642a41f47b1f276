#ifndef UNIRIG_MAP_EXPR_HPP
#define UNIRIG_MAP_EXPR_HPP

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "unirig/errors.hpp"
#include "unirig/interval.hpp"
#include "unirig/jet.hpp"

namespace unirig {

// Closed-form composition chains over a small generator family, with exact
// chain-rule propagation of the first three derivatives.  All nodes are
// immutable; chains are shared freely across threads.

enum class MapKind { affine, bump, fold, compose, iterate, inverse, cdf };

class MapExpr;
using MapPtr = std::shared_ptr<const MapExpr>;

class MapExpr {
  public:
    virtual ~MapExpr() = default;
    virtual double value(double x) const = 0;
    // Jet up to the requested derivative order (0..3); throws
    // critical_point_error where a requested derivative is undefined.
    virtual Jet3 jet(double x, int order) const = 0;
    virtual MapKind kind() const = 0;
};

// ---------------------------------------------------------------------------

// x |-> a*x + b, a != 0.
class AffineMap final : public MapExpr {
  public:
    AffineMap(double a, double b) : a_(a), b_(b) {
        if (a == 0.0) throw singular_branch_error("affine map with zero slope");
    }
    double value(double x) const override { return a_ * x + b_; }
    Jet3 jet(double x, int) const override { return {a_ * x + b_, a_, 0.0, 0.0}; }
    MapKind kind() const override { return MapKind::affine; }
    double slope() const { return a_; }
    double offset() const { return b_; }

  private:
    double a_, b_;
};

// x |-> x + c(1 - x^2), |c| < 1/2: an orientation preserving diffeomorphism
// of [-1,1] fixing the endpoints.
class BumpMap final : public MapExpr {
  public:
    explicit BumpMap(double c) : c_(c) {
        if (!(std::abs(c) < 0.5))
            throw not_a_diffeo_error("bump parameter must satisfy |c| < 1/2");
    }
    double value(double x) const override { return x + c_ * (1.0 - x * x); }
    Jet3 jet(double x, int) const override {
        return {x + c_ * (1.0 - x * x), 1.0 - 2.0 * c_ * x, -2.0 * c_, 0.0};
    }
    MapKind kind() const override { return MapKind::bump; }
    double parameter() const { return c_; }

  private:
    double c_;
};

// Canonical folding map q_t(x) = -2t|x|^alpha + 2t - 1.
class FoldMap final : public MapExpr {
  public:
    FoldMap(double t, double alpha) : t_(t), alpha_(alpha) {
        if (!(t > 0.0 && t <= 1.0)) throw error("fold: t must lie in (0,1]");
        if (!(alpha > 1.0)) throw error("fold: alpha must exceed 1");
    }
    double value(double x) const override {
        return -2.0 * t_ * std::pow(std::abs(x), alpha_) + 2.0 * t_ - 1.0;
    }
    Jet3 jet(double x, int order) const override {
        Jet3 r;
        const double a = alpha_;
        if (even_integer_alpha()) {
            // Polynomial in x; smooth everywhere.  Exponents stay nonnegative
            // except where the coefficient already vanishes (a = 2).
            auto term = [&](double coef, double expo) {
                return coef == 0.0 ? 0.0 : coef * std::pow(x, expo);
            };
            r.v = term(-2.0 * t_, a) + 2.0 * t_ - 1.0;
            r.d1 = order >= 1 ? term(-2.0 * t_ * a, a - 1.0) : 0.0;
            r.d2 = order >= 2 ? term(-2.0 * t_ * a * (a - 1.0), a - 2.0) : 0.0;
            r.d3 = order >= 3 ? term(-2.0 * t_ * a * (a - 1.0) * (a - 2.0), a - 3.0) : 0.0;
            return r;
        }
        const double u = std::abs(x);
        const double s = x < 0.0 ? -1.0 : 1.0;
        if (u == 0.0) {
            if (order >= 1 && static_cast<double>(order) >= a)
                throw critical_point_error(
                    "derivative of order " + std::to_string(order) +
                    " undefined at the critical point for alpha = " +
                    std::to_string(a));
            r.v = 2.0 * t_ - 1.0;
            return r; // remaining requested orders are all below alpha: zero
        }
        r.v = -2.0 * t_ * std::pow(u, a) + 2.0 * t_ - 1.0;
        if (order >= 1) r.d1 = -2.0 * t_ * a * std::pow(u, a - 1.0) * s;
        if (order >= 2) r.d2 = -2.0 * t_ * a * (a - 1.0) * std::pow(u, a - 2.0);
        if (order >= 3)
            r.d3 = -2.0 * t_ * a * (a - 1.0) * (a - 2.0) * std::pow(u, a - 3.0) * s;
        return r;
    }
    MapKind kind() const override { return MapKind::fold; }
    double t() const { return t_; }
    double alpha() const { return alpha_; }

  private:
    bool even_integer_alpha() const {
        const double r = std::round(alpha_);
        return std::abs(alpha_ - r) < 1e-12 && std::fmod(r, 2.0) == 0.0;
    }
    double t_, alpha_;
};

class ComposeMap final : public MapExpr {
  public:
    ComposeMap(MapPtr outer, MapPtr inner)
        : outer_(std::move(outer)), inner_(std::move(inner)) {}
    double value(double x) const override { return outer_->value(inner_->value(x)); }
    Jet3 jet(double x, int order) const override {
        const Jet3 ji = inner_->jet(x, order);
        const Jet3 jo = outer_->jet(ji.v, order);
        return jet_compose(jo, ji);
    }
    MapKind kind() const override { return MapKind::compose; }
    const MapPtr& outer() const { return outer_; }
    const MapPtr& inner() const { return inner_; }

  private:
    MapPtr outer_, inner_;
};

// n-fold iterate f^n, evaluated by accumulating jets along the orbit.
class IterateMap final : public MapExpr {
  public:
    IterateMap(MapPtr f, int n) : f_(std::move(f)), n_(n) {
        if (n < 1) throw error("iterate: n must be positive");
    }
    double value(double x) const override {
        for (int i = 0; i < n_; ++i) x = f_->value(x);
        return x;
    }
    Jet3 jet(double x, int order) const override {
        Jet3 acc = f_->jet(x, order);
        for (int i = 1; i < n_; ++i)
            acc = jet_compose(f_->jet(acc.v, order), acc);
        return acc;
    }
    MapKind kind() const override { return MapKind::iterate; }
    const MapPtr& base() const { return f_; }
    int count() const { return n_; }

  private:
    MapPtr f_;
    int n_;
};

// ---------------------------------------------------------------------------
// Monotone solve: the workhorse behind branch inverses.  Bisection brackets
// the root, Newton refines it to residual <= 1e-13 (absolute, the ambient
// scale here is the unit interval).

struct SolveOptions {
    double residual_tol = 1e-13;
    double accept_tol = 1e-10; // throw above this
    int max_bisect = 200;
    int max_newton = 60;
};

inline double solve_monotone(const MapExpr& f, const Interval& dom, double target,
                             const SolveOptions& opt = {}) {
    double a = dom.lo, b = dom.hi;
    double fa = f.value(a) - target;
    double fb = f.value(b) - target;
    if (std::abs(fa) <= opt.residual_tol) return a;
    if (std::abs(fb) <= opt.residual_tol) return b;
    if (fa * fb > 0.0) {
        // Allow targets marginally outside the image (endpoint rounding).
        if (std::min(std::abs(fa), std::abs(fb)) <= opt.accept_tol)
            return std::abs(fa) < std::abs(fb) ? a : b;
        throw unrealized_word_error("solve_monotone: target outside branch image");
    }
    // Bisect until the bracket is small enough for safe Newton steps.
    double x = 0.5 * (a + b);
    for (int i = 0; i < 40 && b - a > 1e-6 * (dom.length()); ++i) {
        x = 0.5 * (a + b);
        const double fx = f.value(x) - target;
        if (fx == 0.0) return x;
        if (fa * fx < 0.0) {
            b = x;
            fb = fx;
        } else {
            a = x;
            fa = fx;
        }
    }
    x = 0.5 * (a + b);
    double fx = f.value(x) - target;
    for (int i = 0; i < opt.max_newton; ++i) {
        if (std::abs(fx) <= opt.residual_tol) return x;
        const Jet3 j = f.jet(x, 1);
        double step = j.d1 != 0.0 ? -fx / j.d1 : 0.0;
        double xn = x + step;
        if (!(xn > a && xn < b) || step == 0.0) xn = 0.5 * (a + b); // fall back
        const double fn = f.value(xn) - target;
        if (fa * fn < 0.0) {
            b = xn;
            fb = fn;
        } else {
            a = xn;
            fa = fn;
        }
        x = xn;
        fx = fn;
        if (b - a <= std::numeric_limits<double>::epsilon() * 4.0 *
                         std::max(1.0, std::max(std::abs(a), std::abs(b))))
            break;
    }
    if (std::abs(fx) > opt.accept_tol)
        throw convergence_error("solve_monotone: residual " + std::to_string(std::abs(fx)) +
                                " above tolerance");
    return x;
}

// Inverse of a map restricted to an interval where it is monotone with
// nonvanishing derivative.  Derivatives come from the inverse function
// theorem through the forward jet.
class InverseBranch final : public MapExpr {
  public:
    InverseBranch(MapPtr fwd, Interval dom)
        : fwd_(std::move(fwd)), dom_(dom),
          range_(hull(fwd_->value(dom.lo), fwd_->value(dom.hi))) {}
    double value(double y) const override { return solve_monotone(*fwd_, dom_, y); }
    Jet3 jet(double y, int order) const override {
        const double x = solve_monotone(*fwd_, dom_, y);
        if (order == 0) return {x, 0.0, 0.0, 0.0};
        const Jet3 jf = fwd_->jet(x, order);
        if (std::abs(jf.d1) < 1e-14)
            throw singular_branch_error("inverse branch: derivative vanishes");
        Jet3 r = jet_invert(jf, x);
        if (order < 3) r.d3 = 0.0;
        if (order < 2) r.d2 = 0.0;
        return r;
    }
    MapKind kind() const override { return MapKind::inverse; }
    const MapPtr& forward() const { return fwd_; }
    const Interval& domain() const { return dom_; }
    const Interval& range() const { return range_; }

  private:
    MapPtr fwd_;
    Interval dom_;
    Interval range_;
};

// ---------------------------------------------------------------------------
// Factory helpers.

inline MapPtr affine(double a, double b) { return std::make_shared<AffineMap>(a, b); }
inline MapPtr identity_map() { return affine(1.0, 0.0); }
inline MapPtr flip_map() { return affine(-1.0, 0.0); }
inline MapPtr bump(double c) { return std::make_shared<BumpMap>(c); }
inline MapPtr fold(double t, double alpha) { return std::make_shared<FoldMap>(t, alpha); }

// Increasing affine bijection from one interval onto another.
inline MapPtr affine_onto(const Interval& from, const Interval& to) {
    const double a = to.length() / from.length();
    return affine(a, to.lo - a * from.lo);
}

// Affine bijection respecting the recorded orientations: the oriented start
// of `from` is sent to the oriented start of `to`.
inline MapPtr affine_onto_oriented(const Interval& from, const Interval& to) {
    const bool same = from.orient == to.orient;
    const double a = (same ? 1.0 : -1.0) * to.length() / from.length();
    const double from_ref = same ? from.lo : from.hi;
    return affine(a, to.lo - a * from_ref);
}

inline MapPtr compose(MapPtr outer, MapPtr inner) {
    return std::make_shared<ComposeMap>(std::move(outer), std::move(inner));
}

inline MapPtr iterate(MapPtr f, int n) {
    return n == 1 ? f : std::make_shared<IterateMap>(std::move(f), n);
}

inline MapPtr inverse_branch(MapPtr fwd, const Interval& dom) {
    return std::make_shared<InverseBranch>(std::move(fwd), dom);
}

} // namespace unirig

#endif
