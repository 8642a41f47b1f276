#ifndef UNIRIG_DIFFEO_HPP
#define UNIRIG_DIFFEO_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "unirig/map_expr.hpp"

namespace unirig {

// Uniform sample nodes on an interval, endpoints included.
inline std::vector<double> uniform_samples(const Interval& I, int n) {
    std::vector<double> xs(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
        xs[static_cast<std::size_t>(j)] =
            I.lo + I.length() * static_cast<double>(j) / static_cast<double>(n - 1);
    xs.front() = I.lo;
    xs.back() = I.hi;
    return xs;
}

// Orientation preserving C^r diffeomorphism of [-1,1], represented by a
// composition chain.  `domain_flipped`/`range_flipped` record the
// normalization applied by rescale() to orientation reversing branches.
class Diffeo {
  public:
    explicit Diffeo(MapPtr chain, int smoothness_order = 3, bool domain_flipped = false,
                    bool range_flipped = false, bool check_endpoints = true)
        : chain_(std::move(chain)), order_(smoothness_order),
          domain_flipped_(domain_flipped), range_flipped_(range_flipped) {
        if (order_ < 2) throw error("Diffeo: smoothness order must be >= 2");
        if (check_endpoints) {
            const double lo = chain_->value(-1.0), hi = chain_->value(1.0);
            if (std::abs(lo + 1.0) > 1e-7 || std::abs(hi - 1.0) > 1e-7)
                throw not_a_diffeo_error("Diffeo: endpoints not fixed (phi(-1)=" +
                                         std::to_string(lo) + ", phi(1)=" +
                                         std::to_string(hi) + ")");
        }
    }

    static Diffeo identity() { return Diffeo(identity_map()); }
    static Diffeo bump(double c) { return Diffeo(unirig::bump(c)); }

    double operator()(double x) const { return chain_->value(x); }
    Jet3 jet(double x, int order = 3) const { return chain_->jet(x, order); }
    double deriv(double x, int k = 1) const {
        const Jet3 j = chain_->jet(x, k);
        switch (k) {
            case 0: return j.v;
            case 1: return j.d1;
            case 2: return j.d2;
            default: return j.d3;
        }
    }

    Diffeo inverse() const {
        return Diffeo(inverse_branch(chain_, unit_interval()), order_, false, false, false);
    }

    const MapPtr& chain() const { return chain_; }
    int smoothness_order() const { return order_; }
    bool domain_flipped() const { return domain_flipped_; }
    bool range_flipped() const { return range_flipped_; }

  private:
    MapPtr chain_;
    int order_;
    bool domain_flipped_;
    bool range_flipped_;
};

inline Diffeo compose(const Diffeo& outer, const Diffeo& inner) {
    return Diffeo(compose(outer.chain(), inner.chain()),
                  std::min(outer.smoothness_order(), inner.smoothness_order()),
                  false, false, false);
}

// ---------------------------------------------------------------------------
// Rescaling: the [f|T] bracket.  Domain and range are identified affinely
// with [-1,1]; a decreasing branch is pre-composed with x |-> -x so the
// result lands in Diff_+.

inline Diffeo rescale(const MapPtr& f, const Interval& T, int smoothness_order = 3) {
    const double vlo = f->value(T.lo);
    const double vhi = f->value(T.hi);
    if (std::abs(vhi - vlo) < 1e-300)
        throw singular_branch_error("rescale: branch image degenerate");
    const bool decreasing = vhi < vlo;
    // Monotonicity sanity on the interior; laps of folding maps legitimately
    // have vanishing derivative at an endpoint.
    const auto samples = uniform_samples(T, 19);
    for (std::size_t i = 1; i + 1 < samples.size(); ++i) {
        const double d = f->jet(samples[i], 1).d1;
        if (d == 0.0 || (d < 0.0) != decreasing)
            throw singular_branch_error("rescale: derivative vanishes or changes sign on T");
    }
    MapPtr dom = affine_onto(unit_interval(), T);
    if (decreasing) dom = compose(dom, flip_map());
    const MapPtr ran = affine_onto(hull(vlo, vhi), unit_interval());
    return Diffeo(compose(ran, compose(f, dom)), smoothness_order,
                  /*domain_flipped=*/decreasing, /*range_flipped=*/false,
                  /*check_endpoints=*/false);
}

// ---------------------------------------------------------------------------
// Nonlinearity eta_phi = D ln D phi and the |phi|_r norms measured on grids.

class Nonlinearity {
  public:
    explicit Nonlinearity(const Diffeo& phi) : phi_(phi) {}
    double operator()(double x) const {
        const Jet3 j = phi_.jet(x, 2);
        if (j.d1 <= 0.0)
            throw not_a_diffeo_error("nonlinearity: derivative not positive at x=" +
                                     std::to_string(x));
        return j.d2 / j.d1;
    }
    // D eta = D^3/D - (D^2/D)^2.
    double deriv(double x) const {
        const Jet3 j = phi_.jet(x, 3);
        if (j.d1 <= 0.0)
            throw not_a_diffeo_error("nonlinearity: derivative not positive at x=" +
                                     std::to_string(x));
        const double e = j.d2 / j.d1;
        return j.d3 / j.d1 - e * e;
    }

  private:
    Diffeo phi_;
};

inline Nonlinearity nonlinearity(const Diffeo& phi) { return Nonlinearity(phi); }

// |phi|_r = sum_{k <= r-2} ||D^k eta||_0, measured on a uniform grid.  The
// result is a grid-refined lower bound of the true sup.
inline double cr_norm(const Diffeo& phi, int r, int grid = 1024) {
    if (r < 2 || r > 3) throw error("cr_norm: supported r are 2 and 3");
    const Nonlinearity eta(phi);
    double sup0 = 0.0, sup1 = 0.0;
    for (const double x : uniform_samples(unit_interval(), grid)) {
        sup0 = std::max(sup0, std::abs(eta(x)));
        if (r >= 3) sup1 = std::max(sup1, std::abs(eta.deriv(x)));
    }
    return sup0 + sup1;
}

// Nonlinearity of phi∘psi through the cocycle
//   eta_{phi∘psi}(x) = eta_phi(psi(x)) Dpsi(x) + eta_psi(x).
class ComposedNonlinearity {
  public:
    ComposedNonlinearity(const Diffeo& phi, const Diffeo& psi)
        : eta_phi_(phi), eta_psi_(psi), psi_(psi) {}
    double operator()(double x) const {
        const Jet3 jp = psi_.jet(x, 1);
        return eta_phi_(jp.v) * jp.d1 + eta_psi_(x);
    }

  private:
    Nonlinearity eta_phi_, eta_psi_;
    Diffeo psi_;
};

inline ComposedNonlinearity nonlinearity_compose(const Diffeo& phi, const Diffeo& psi) {
    return ComposedNonlinearity(phi, psi);
}

// ---------------------------------------------------------------------------
// Schwarzian derivative Sf = D^3 f / Df - (3/2)(D^2 f / Df)^2.

inline double schwarzian(const MapExpr& f, double x) {
    const Jet3 j = f.jet(x, 3);
    if (j.d1 == 0.0)
        throw critical_point_error("schwarzian: Df vanishes at x=" + std::to_string(x));
    const double q = j.d2 / j.d1;
    return j.d3 / j.d1 - 1.5 * q * q;
}

inline double schwarzian(const Diffeo& phi, double x) { return schwarzian(*phi.chain(), x); }

// ---------------------------------------------------------------------------
// Measured distortion of a monotone branch over an interval, with the Koebe
// space of a supplied extension.

struct DistortionReport {
    double ratio_max = 1.0; // sup |Df(x)|/|Df(y)| over the sample set
    double koebe_space = 0.0; // tau = min(|f(L)|,|f(R)|)/|f(I)|, 0 if no extension
    int samples = 0;
};

inline DistortionReport measure_distortion(const MapExpr& f, const Interval& I,
                                           int sample_count = 64,
                                           const Interval* extension = nullptr) {
    DistortionReport rep;
    rep.samples = sample_count;
    double dmin = std::numeric_limits<double>::infinity();
    double dmax = 0.0;
    for (const double x : uniform_samples(I, sample_count)) {
        const double d = std::abs(f.jet(x, 1).d1);
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
    }
    if (dmin <= 0.0) throw singular_branch_error("measure_distortion: derivative vanishes");
    rep.ratio_max = dmax / dmin;
    if (extension != nullptr) {
        if (!extension->contains(I, 1e-12))
            throw error("measure_distortion: extension does not contain I");
        const double fI = std::abs(f.value(I.hi) - f.value(I.lo));
        const double fL = std::abs(f.value(I.lo) - f.value(extension->lo));
        const double fR = std::abs(f.value(extension->hi) - f.value(I.hi));
        rep.koebe_space = fI > 0.0 ? std::min(fL, fR) / fI : 0.0;
    }
    return rep;
}

} // namespace unirig

#endif
