#ifndef UNIRIG_UNIMODAL_HPP
#define UNIRIG_UNIMODAL_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "unirig/diffeo.hpp"
#include "unirig/map_expr.hpp"

namespace unirig {

// Symbol coding of an orbit relative to the critical point: L left, R right,
// C within the critical tolerance band.
struct Itinerary {
    std::string word;

    bool operator==(const Itinerary& other) const { return word == other.word; }
};

inline constexpr double kCriticalSymbolTol = 1e-12;

// A map of the family phi ∘ q_t, or a diffeomorphism conjugate of one.  The
// folding parameters and the outer diffeomorphism of the canonical
// representative are kept alongside the full evaluation chain; conjugated
// maps carry their (possibly non-zero) critical point explicitly.
class UnimodalMap {
  public:
    UnimodalMap(double t, double alpha = 2.0, Diffeo phi = Diffeo::identity())
        : t_(t), alpha_(alpha), phi_(phi),
          chain_(phi.chain()->kind() == MapKind::affine &&
                         std::abs(phi(0.0)) < 1e-15 && std::abs(phi(0.5) - 0.5) < 1e-15
                     ? fold(t, alpha)
                     : compose(phi.chain(), fold(t, alpha))),
          crit_(0.0), canonical_(true) {}

    double operator()(double x) const { return chain_->value(x); }

    // k-th derivative by exact chain rule, k = 0..3.
    double eval_deriv(double x, int k) const {
        if (k < 0 || k > 3) throw error("eval_deriv: order must be 0..3");
        const Jet3 j = chain_->jet(x, k);
        switch (k) {
            case 0: return j.v;
            case 1: return j.d1;
            case 2: return j.d2;
            default: return j.d3;
        }
    }
    Jet3 jet(double x, int order = 3) const { return chain_->jet(x, order); }

    double critical_point() const { return crit_; }
    double critical_value() const { return chain_->value(crit_); }
    double t() const { return t_; }
    double alpha() const { return alpha_; }
    const Diffeo& phi() const { return phi_; }
    const MapPtr& chain() const { return chain_; }
    bool canonical() const { return canonical_; }
    // Conjugacy from the canonical representative, when built that way.
    const std::optional<Diffeo>& conjugator() const { return conjugator_; }

    // A_f = [f^2(0), f(0)] (critical point in the map's own coordinates).
    Interval attractor_interval() const {
        const double c1 = critical_value();
        const double c2 = chain_->value(c1);
        if (!(c2 < c1))
            throw degenerate_attractor_error("attractor_interval: f^2(c) >= f(c)");
        return Interval(c2, c1);
    }

    // Monotone laps [lo, crit] and [crit, hi].
    Interval left_lap() const { return Interval(-1.0, crit_); }
    Interval right_lap() const { return Interval(crit_, 1.0); }

    static UnimodalMap conjugated(const UnimodalMap& f, const Diffeo& phi) {
        UnimodalMap g = f;
        const Diffeo total = f.conjugator_ ? compose(phi, *f.conjugator_) : phi;
        g.chain_ = compose(phi.chain(), compose(f.chain_, phi.inverse().chain()));
        g.crit_ = phi(f.crit_);
        g.canonical_ = false;
        g.conjugator_ = total;
        return g;
    }

  private:
    double t_, alpha_;
    Diffeo phi_;
    MapPtr chain_;
    double crit_;
    bool canonical_;
    std::optional<Diffeo> conjugator_;
};

// g = phi ∘ f ∘ phi^{-1} with exact derivative propagation.
inline UnimodalMap conjugate_map(const UnimodalMap& f, const Diffeo& phi) {
    return UnimodalMap::conjugated(f, phi);
}

inline Itinerary itinerary(const UnimodalMap& f, double x, int n) {
    Itinerary it;
    it.word.reserve(static_cast<std::size_t>(n));
    const double c = f.critical_point();
    for (int i = 0; i < n; ++i) {
        if (std::abs(x - c) <= kCriticalSymbolTol)
            it.word.push_back('C');
        else
            it.word.push_back(x < c ? 'L' : 'R');
        x = f(x);
    }
    return it;
}

// ---------------------------------------------------------------------------
// Membership heuristics for the class U_0.  Report only; never a certificate.

struct MembershipOptions {
    int schwarzian_samples = 1024;
    int orbit_horizon = 10000;
    int max_cycle_period = 64;
    double cycle_tol = 1e-6;
};

struct MembershipReport {
    bool schwarzian_negative = true;
    double schwarzian_max = -std::numeric_limits<double>::infinity();
    int schwarzian_samples = 0;
    bool maps_into_interval = true;
    double range_excess = 0.0;
    bool attracting_cycle_found = false;
    int cycle_period = 0;
    std::vector<double> cycle;
    int horizon = 0;

    bool passed() const {
        return schwarzian_negative && maps_into_interval && !attracting_cycle_found;
    }
};

inline MembershipReport membership_check(const UnimodalMap& f,
                                         const MembershipOptions& opt = {}) {
    MembershipReport rep;
    rep.schwarzian_samples = opt.schwarzian_samples;
    rep.horizon = opt.orbit_horizon;
    const double c = f.critical_point();
    for (const double x : uniform_samples(unit_interval(), opt.schwarzian_samples)) {
        if (std::abs(x - c) < 1e-6) continue;
        double s;
        try {
            s = schwarzian(*f.chain(), x);
        } catch (const critical_point_error&) {
            continue;
        }
        rep.schwarzian_max = std::max(rep.schwarzian_max, s);
        if (s >= 0.0) rep.schwarzian_negative = false;
        const double y = f(x);
        if (y < -1.0 - 1e-9 || y > 1.0 + 1e-9) {
            rep.maps_into_interval = false;
            rep.range_excess = std::max(rep.range_excess, std::abs(y) - 1.0);
        }
    }

    // Attracting-cycle heuristic: run the critical orbit past a burn-in, then
    // look for a low-period near-cycle with contracting multiplier.
    double x = f.critical_value();
    const int burn = opt.orbit_horizon;
    for (int i = 0; i < burn; ++i) x = f(x);
    std::vector<double> tail(static_cast<std::size_t>(2 * opt.max_cycle_period));
    for (auto& v : tail) {
        v = x;
        x = f(x);
    }
    for (int p = 1; p <= opt.max_cycle_period && !rep.attracting_cycle_found; ++p) {
        bool cyclic = true;
        for (int i = 0; i + p < 2 * opt.max_cycle_period; ++i)
            if (std::abs(tail[static_cast<std::size_t>(i + p)] -
                         tail[static_cast<std::size_t>(i)]) > opt.cycle_tol) {
                cyclic = false;
                break;
            }
        if (!cyclic) continue;
        double mult = 1.0;
        bool through_critical = false;
        for (int i = 0; i < p; ++i) {
            const double pt = tail[static_cast<std::size_t>(i)];
            if (std::abs(pt - c) < 1e-9) {
                through_critical = true;
                break;
            }
            mult *= f.jet(pt, 1).d1;
        }
        if (through_critical || std::abs(mult) <= 1.0 + 1e-9) {
            rep.attracting_cycle_found = true;
            rep.cycle_period = p;
            rep.cycle.assign(tail.begin(), tail.begin() + p);
        }
    }
    return rep;
}

} // namespace unirig

#endif
