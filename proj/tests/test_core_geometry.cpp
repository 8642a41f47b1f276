#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "unirig/diffeo.hpp"
#include "unirig/map_expr.hpp"

using namespace unirig;

namespace {

// Finite-difference oracle for D ln Dphi, independent of the cocycle path.
double eta_by_differences(const Diffeo& phi, double x, double h = 1e-6) {
    const double lp = std::log(phi.deriv(x + h));
    const double lm = std::log(phi.deriv(x - h));
    return (lp - lm) / (2.0 * h);
}

// Moebius map x/(2-x): zero Schwarzian, not a member of the generator family.
class MoebiusMap final : public MapExpr {
  public:
    double value(double x) const override { return x / (2.0 - x); }
    Jet3 jet(double x, int) const override {
        const double u = 2.0 - x;
        return {x / u, 2.0 / (u * u), 4.0 / (u * u * u), 12.0 / (u * u * u * u)};
    }
    MapKind kind() const override { return MapKind::compose; }
};

} // namespace

TEST_CASE("rescale of affine branches is the identity") {
    // Arbitrary affine map on an arbitrary interval.
    const auto f = affine(3.7, -0.4);
    const Diffeo r = rescale(f, Interval(-0.3, 0.9));
    for (const double x : uniform_samples(unit_interval(), 33))
        CHECK(r(x) == Catch::Approx(x).margin(1e-13));

    // Doubling-map branch.
    const Diffeo d = rescale(affine(2.0, 1.0), Interval(-1.0, 0.0));
    for (const double x : uniform_samples(unit_interval(), 33))
        CHECK(d(x) == Catch::Approx(x).margin(1e-13));
}

TEST_CASE("rescale of the left lap of q_1") {
    const Diffeo r = rescale(fold(1.0, 2.0), Interval(-1.0, 0.0));
    for (const double u : uniform_samples(unit_interval(), 65)) {
        const double expected = 1.0 - 0.5 * (u - 1.0) * (u - 1.0);
        CHECK(r(u) == Catch::Approx(expected).margin(1e-12));
    }
    CHECK_FALSE(r.domain_flipped());
}

TEST_CASE("rescale normalizes orientation reversing branches") {
    // Right lap of q_1 is decreasing; the flip flag must be recorded and the
    // result must be an increasing diffeomorphism fixing +-1.
    const Diffeo r = rescale(fold(1.0, 2.0), Interval(0.0, 1.0));
    CHECK(r.domain_flipped());
    CHECK(r(-1.0) == Catch::Approx(-1.0).margin(1e-12));
    CHECK(r(1.0) == Catch::Approx(1.0).margin(1e-12));
    CHECK(r.deriv(0.0) > 0.0);
}

TEST_CASE("rescale is idempotent") {
    const Diffeo once = rescale(fold(1.0, 2.0), Interval(-1.0, 0.0));
    const Diffeo twice = rescale(once.chain(), unit_interval());
    for (const double x : uniform_samples(unit_interval(), 101))
        CHECK(std::abs(twice(x) - once(x)) <= 1e-12);
}

TEST_CASE("rescale rejects branches with vanishing derivative") {
    CHECK_THROWS_AS(rescale(fold(1.0, 2.0), Interval(-0.5, 0.5)), singular_branch_error);
}

TEST_CASE("nonlinearity closed forms") {
    CHECK(nonlinearity(Diffeo::identity())(0.3) == 0.0);

    const Diffeo phi = Diffeo::bump(0.1);
    const auto eta = nonlinearity(phi);
    CHECK(eta(0.0) == Catch::Approx(-0.2).margin(1e-14));
    for (const double x : uniform_samples(unit_interval(), 21))
        CHECK(eta(x) == Catch::Approx(-0.2 / (1.0 - 0.2 * x)).margin(1e-13));

    // u -> 1-(u-1)^2/2 has eta(u) = -1/(1-u) away from u=1.
    const Diffeo lap = rescale(fold(1.0, 2.0), Interval(-1.0, 0.0));
    const auto eta_lap = nonlinearity(lap);
    for (const double u : uniform_samples(Interval(-1.0, 0.5), 21))
        CHECK(eta_lap(u) == Catch::Approx(-1.0 / (1.0 - u)).margin(1e-11));
}

TEST_CASE("cr_norm on the bump family") {
    CHECK(cr_norm(Diffeo::identity(), 3) == 0.0);
    const Diffeo phi = Diffeo::bump(0.1);
    CHECK(cr_norm(phi, 2) == Catch::Approx(0.25).margin(1e-9));
    CHECK(cr_norm(phi, 3) == Catch::Approx(0.3125).margin(1e-9));
    CHECK_THROWS_AS(cr_norm(phi, 4), error);
}

TEST_CASE("nonlinearity cocycle equals composed nonlinearity") {
    const Diffeo phi = Diffeo::bump(0.1);
    const Diffeo psi = Diffeo::bump(0.2);
    const auto cocycle = nonlinearity_compose(phi, psi);
    const auto direct = nonlinearity(compose(phi, psi));
    std::mt19937 rng(12345);
    std::uniform_real_distribution<double> unit(-0.999, 0.999);
    for (int i = 0; i < 100; ++i) {
        const double x = unit(rng);
        CHECK(cocycle(x) == Catch::Approx(direct(x)).margin(1e-12));
    }
}

TEST_CASE("cocycle matches the finite-difference oracle") {
    const Diffeo phi = Diffeo::bump(0.1);
    const Diffeo psi = Diffeo::bump(0.2);
    const Diffeo comp = compose(phi, psi);
    const auto cocycle = nonlinearity_compose(phi, psi);
    std::mt19937 rng(777);
    std::uniform_real_distribution<double> unit(-0.99, 0.99);
    for (int i = 0; i < 100; ++i) {
        const double x = unit(rng);
        CHECK(cocycle(x) == Catch::Approx(eta_by_differences(comp, x)).margin(1e-6));
    }
}

TEST_CASE("cocycle property on random bump pairs") {
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> par(-0.45, 0.45);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Diffeo phi = Diffeo::bump(par(rng));
        const Diffeo psi = Diffeo::bump(par(rng));
        const auto lhs = nonlinearity(compose(phi, psi));
        const auto rhs = nonlinearity_compose(phi, psi);
        for (int i = 0; i < 16; ++i) {
            const double x = unit(rng);
            CHECK(lhs(x) == Catch::Approx(rhs(x)).margin(1e-8));
        }
    }
}

TEST_CASE("composition of affine maps has zero nonlinearity") {
    const Diffeo a(affine(1.0, 0.0));
    const auto eta = nonlinearity_compose(a, a);
    for (const double x : uniform_samples(unit_interval(), 11)) CHECK(eta(x) == 0.0);
}

TEST_CASE("schwarzian closed forms") {
    CHECK(schwarzian(*affine(2.5, 1.0), 0.2) == 0.0);
    // q_t with alpha=2: S(x) = -(3/2) x^{-2}, independent of t.
    CHECK(schwarzian(*fold(1.0, 2.0), 0.5) == Catch::Approx(-6.0).margin(1e-12));
    CHECK(schwarzian(*fold(0.7, 2.0), 0.5) == Catch::Approx(-6.0).margin(1e-12));
    CHECK_THROWS_AS(schwarzian(*fold(1.0, 2.0), 0.0), critical_point_error);

    const MoebiusMap moebius;
    for (const double x : uniform_samples(Interval(-0.9, 0.9), 17))
        CHECK(schwarzian(moebius, x) == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("schwarzian composition law keeps the negative sign") {
    // S(phi∘psi) = (S phi ∘ psi)(Dpsi)^2 + S psi; with both factors <= 0 and
    // one strictly negative the composition is strictly negative.
    const MapPtr f = fold(1.0, 2.0);
    const MapPtr comps[] = {
        compose(bump(0.1), f), compose(f, bump(-0.2)),
        compose(compose(bump(0.3), f), bump(0.1))};
    for (const auto& c : comps)
        for (const double x : uniform_samples(Interval(-0.95, 0.95), 41)) {
            if (std::abs(x) < 1e-6) continue; // critical point of the fold factor
            CHECK(schwarzian(*c, x) < 0.0);
        }
}

TEST_CASE("measure_distortion") {
    const DistortionReport flat = measure_distortion(*affine(2.0, 1.0), Interval(-0.7, 0.2));
    CHECK(flat.ratio_max == 1.0);

    // |Dq_1| = 4|x| is monotone on [-0.6,-0.4]: endpoint ratio 1.5.
    const DistortionReport rep =
        measure_distortion(*fold(1.0, 2.0), Interval(-0.6, -0.4), 64);
    CHECK(rep.ratio_max == Catch::Approx(1.5).margin(1e-12));

    // Koebe space of the extension [-0.9,-0.1] around [-0.6,-0.4].
    const Interval ext(-0.9, -0.1);
    const DistortionReport with_ext =
        measure_distortion(*fold(1.0, 2.0), Interval(-0.6, -0.4), 64, &ext);
    CHECK(with_ext.koebe_space > 0.0);
}

TEST_CASE("distortion is monotone under interval nesting") {
    const MapPtr f = fold(1.0, 2.0);
    const Interval outer(-0.8, -0.2);
    const Interval inner(-0.6, -0.4);
    const double r_outer = measure_distortion(*f, outer, 128).ratio_max;
    const double r_inner = measure_distortion(*f, inner, 128).ratio_max;
    CHECK(r_inner <= r_outer + 1e-12);
}

TEST_CASE("branch inverse solves to tight residual") {
    const MapPtr f = fold(1.0, 2.0);
    const MapPtr inv = inverse_branch(f, Interval(-1.0, 0.0));
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        const double y = unit(rng);
        const double x = inv->value(y);
        CHECK(std::abs(f->value(x) - y) <= 1e-12);
        // Inverse-function-theorem derivatives against finite differences.
        const Jet3 j = inv->jet(y, 1);
        CHECK(j.d1 == Catch::Approx(1.0 / f->jet(x, 1).d1).margin(1e-10));
    }
}

TEST_CASE("fold derivative queries at the critical point") {
    // alpha = 2 is polynomial: all derivatives defined at 0.
    CHECK(fold(1.0, 2.0)->jet(0.0, 3).d2 == Catch::Approx(-4.0));
    // alpha = 1.5: first derivative at 0 vanishes is undefined at order >= 2.
    CHECK(fold(1.0, 1.5)->jet(0.0, 1).d1 == 0.0);
    CHECK_THROWS_AS(fold(1.0, 1.5)->jet(0.0, 2), critical_point_error);
    // alpha = 2.5: orders below alpha fine, order 3 undefined.
    CHECK(fold(1.0, 2.5)->jet(0.0, 2).d2 == 0.0);
    CHECK_THROWS_AS(fold(1.0, 2.5)->jet(0.0, 3), critical_point_error);
}
