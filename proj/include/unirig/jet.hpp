#ifndef UNIRIG_JET_HPP
#define UNIRIG_JET_HPP

namespace unirig {

// Value and first three derivatives of a scalar map at a point.
struct Jet3 {
    double v = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double d3 = 0.0;
};

// Jet of outer∘inner at x, from the jet of outer at inner(x) and the jet of
// inner at x (Faa di Bruno up to order 3).
inline Jet3 jet_compose(const Jet3& outer, const Jet3& inner) {
    Jet3 r;
    const double g1 = inner.d1, g2 = inner.d2, g3 = inner.d3;
    r.v = outer.v;
    r.d1 = outer.d1 * g1;
    r.d2 = outer.d2 * g1 * g1 + outer.d1 * g2;
    r.d3 = outer.d3 * g1 * g1 * g1 + 3.0 * outer.d2 * g1 * g2 + outer.d1 * g3;
    return r;
}

// Jet of f^{-1} at y = fwd.v, from the jet of f at x = f^{-1}(y).
inline Jet3 jet_invert(const Jet3& fwd, double x) {
    const double u = 1.0 / fwd.d1;
    Jet3 r;
    r.v = x;
    r.d1 = u;
    r.d2 = -fwd.d2 * u * u * u;
    r.d3 = (3.0 * fwd.d2 * fwd.d2 - fwd.d1 * fwd.d3) * u * u * u * u * u;
    return r;
}

} // namespace unirig

#endif
