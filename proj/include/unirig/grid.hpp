#ifndef UNIRIG_GRID_HPP
#define UNIRIG_GRID_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "unirig/map_expr.hpp"

namespace unirig {

// A sampled probability density on [-1,1]: nonnegative values at uniform
// nodes, endpoints included.
class DensityGrid {
  public:
    explicit DensityGrid(std::vector<double> values) : v_(std::move(values)) {
        if (v_.size() < 8) throw error("DensityGrid: need at least 8 nodes");
    }
    static DensityGrid uniform(int nodes) {
        return DensityGrid(std::vector<double>(static_cast<std::size_t>(nodes), 0.5));
    }

    int nodes() const { return static_cast<int>(v_.size()); }
    double spacing() const { return 2.0 / (static_cast<double>(v_.size()) - 1.0); }
    double node(int j) const {
        return -1.0 + 2.0 * static_cast<double>(j) / (static_cast<double>(v_.size()) - 1.0);
    }
    double value(int j) const { return v_[static_cast<std::size_t>(j)]; }
    std::vector<double>& values() { return v_; }
    const std::vector<double>& values() const { return v_; }

    // Linear interpolation, clamped to the grid.
    double operator()(double x) const {
        const double s = (x + 1.0) / spacing();
        if (s <= 0.0) return v_.front();
        const auto last = static_cast<double>(v_.size() - 1);
        if (s >= last) return v_.back();
        const auto j = static_cast<std::size_t>(s);
        const double frac = s - static_cast<double>(j);
        return v_[j] + frac * (v_[j + 1] - v_[j]);
    }

    double integral() const {
        double sum = 0.0;
        for (std::size_t j = 0; j + 1 < v_.size(); ++j) sum += v_[j] + v_[j + 1];
        return 0.5 * sum * spacing();
    }

    void normalize() {
        const double m = integral();
        if (!(m > 0.0)) throw error("DensityGrid: cannot normalize zero mass");
        for (auto& x : v_) x /= m;
    }

    double sup_distance(const DensityGrid& other, int skip_boundary_nodes = 0) const {
        if (other.nodes() != nodes()) throw error("DensityGrid: node counts differ");
        double d = 0.0;
        for (int j = skip_boundary_nodes; j < nodes() - skip_boundary_nodes; ++j)
            d = std::max(d, std::abs(value(j) - other.value(j)));
        return d;
    }

  private:
    std::vector<double> v_;
};

// Replace flagged node values by linear extrapolation from the nearest two
// regular nodes.
inline void fill_flagged_nodes(std::vector<double>& v, const std::vector<bool>& flagged) {
    const int n = static_cast<int>(v.size());
    for (int j = 0; j < n; ++j) {
        if (!flagged[static_cast<std::size_t>(j)]) continue;
        int a = -1, b = -1;
        for (int k = 1; k < n && b < 0; ++k) {
            const int lo = j - k, hi = j + k;
            if (lo >= 0 && !flagged[static_cast<std::size_t>(lo)]) {
                if (a < 0)
                    a = lo;
                else
                    b = lo;
            }
            if (b < 0 && hi < n && !flagged[static_cast<std::size_t>(hi)]) {
                if (a < 0)
                    a = hi;
                else
                    b = hi;
            }
        }
        if (a < 0) throw error("fill_flagged_nodes: all nodes flagged");
        if (b < 0) {
            v[static_cast<std::size_t>(j)] = v[static_cast<std::size_t>(a)];
        } else {
            const double t = static_cast<double>(j - a) / static_cast<double>(b - a);
            v[static_cast<std::size_t>(j)] = std::max(
                0.0, v[static_cast<std::size_t>(a)] +
                         t * (v[static_cast<std::size_t>(b)] - v[static_cast<std::size_t>(a)]));
        }
    }
}

// ---------------------------------------------------------------------------
// Quadrature and point evaluation over a density grid, aware of the
// inverse-square-root boundary layers the invariant densities here develop.
// Near an edge where a singular profile is detected, the density is
// represented as w(u)/sqrt(u) with u the distance to the edge and w
// interpolated linearly between node values w_j = rho_j sqrt(u_j); w is
// smooth there, so values and integrals keep O(h^2) accuracy.  Away from
// edges (and everywhere when no singularity is detected) this is the plain
// trapezoid/linear-interpolation scheme.

class Quadrature {
  public:
    explicit Quadrature(const DensityGrid& rho)
        : rho_(&rho), n_(rho.nodes()), h_(rho.spacing()) {
        detect_edges();
        cell_mass_.resize(static_cast<std::size_t>(n_ - 1));
        for (int j = 0; j + 1 < n_; ++j)
            cell_mass_[static_cast<std::size_t>(j)] = compute_cell_mass(j);
        total_ = std::accumulate(cell_mass_.begin(), cell_mass_.end(), 0.0);
    }

    double total() const { return total_; }
    double cell_mass(int j) const { return cell_mass_[static_cast<std::size_t>(j)]; }
    bool left_singular() const { return left_active_; }
    bool right_singular() const { return right_active_; }

    // Integral of the density over [-1, x].
    double integral_to(double x) const {
        if (x <= -1.0) return 0.0;
        if (x >= 1.0) return total_;
        int j = std::clamp(static_cast<int>((x + 1.0) / h_), 0, n_ - 2);
        double sum = 0.0;
        for (int k = 0; k < j; ++k) sum += cell_mass_[static_cast<std::size_t>(k)];
        return sum + partial(j, x);
    }

    double integral_on(const Interval& I) const {
        return integral_to(I.hi) - integral_to(I.lo);
    }

    // Integral over [node(j), x] for x inside cell j.
    double partial(int j, double x) const {
        if (left_active_ && j < band_) {
            return band_integral_left(x) - band_integral_left(rho_->node(j));
        }
        if (right_active_ && j >= n_ - 1 - band_) {
            return band_integral_right(rho_->node(j)) - band_integral_right(x);
        }
        const double ra = rho_->value(j);
        const double slope = (rho_->value(j + 1) - ra) / h_;
        const double d = x - rho_->node(j);
        return ra * d + 0.5 * slope * d * d;
    }

    // Pointwise density consistent with the quadrature model.
    double density_at(double x) const {
        if (left_active_ && x < -1.0 + band_ * h_) {
            const double u = std::max(x + 1.0, 0.0);
            return w_left(u) / std::sqrt(std::max(u, 1e-28));
        }
        if (right_active_ && x > 1.0 - band_ * h_) {
            const double u = std::max(1.0 - x, 0.0);
            return w_right(u) / std::sqrt(std::max(u, 1e-28));
        }
        return (*rho_)(x);
    }

    double density_slope_at(double x) const {
        if (left_active_ && x < -1.0 + band_ * h_) {
            const double u = std::max(x + 1.0, 1e-14);
            const double su = std::sqrt(u);
            return w_left_slope(u) / su - 0.5 * w_left(u) / (u * su);
        }
        if (right_active_ && x > 1.0 - band_ * h_) {
            const double u = std::max(1.0 - x, 1e-14);
            const double su = std::sqrt(u);
            return -(w_right_slope(u) / su - 0.5 * w_right(u) / (u * su));
        }
        const int j = std::clamp(static_cast<int>((x + 1.0) / h_), 0, n_ - 2);
        return (rho_->value(j + 1) - rho_->value(j)) / h_;
    }

  private:
    void detect_edges() {
        band_ = std::min(32, n_ / 8);
        // Fit A/sqrt(u)+B through the two interior nodes nearest each edge;
        // the edge is treated as singular when the fitted singular part
        // dominates the node value.
        const double c = 1.0 - 1.0 / std::sqrt(2.0);
        const double sh = std::sqrt(h_);
        const double al = (rho_->value(1) - rho_->value(2)) * sh / c;
        left_active_ = al > 0.0 && al / sh >= 0.5 * rho_->value(1);
        w0_left_ = left_active_ ? al : 0.0;
        const double ar = (rho_->value(n_ - 2) - rho_->value(n_ - 3)) * sh / c;
        right_active_ = ar > 0.0 && ar / sh >= 0.5 * rho_->value(n_ - 2);
        w0_right_ = right_active_ ? ar : 0.0;
    }

    // w values at distance u from the left edge (u_j = j h).
    double w_node_left(int j) const {
        return j == 0 ? w0_left_ : rho_->value(j) * std::sqrt(j * h_);
    }
    double w_node_right(int j) const {
        return j == 0 ? w0_right_ : rho_->value(n_ - 1 - j) * std::sqrt(j * h_);
    }
    double w_left(double u) const {
        const int j = std::clamp(static_cast<int>(u / h_), 0, band_ - 1);
        const double t = u / h_ - j;
        return w_node_left(j) + t * (w_node_left(j + 1) - w_node_left(j));
    }
    double w_left_slope(double u) const {
        const int j = std::clamp(static_cast<int>(u / h_), 0, band_ - 1);
        return (w_node_left(j + 1) - w_node_left(j)) / h_;
    }
    double w_right(double u) const {
        const int j = std::clamp(static_cast<int>(u / h_), 0, band_ - 1);
        const double t = u / h_ - j;
        return w_node_right(j) + t * (w_node_right(j + 1) - w_node_right(j));
    }
    double w_right_slope(double u) const {
        const int j = std::clamp(static_cast<int>(u / h_), 0, band_ - 1);
        return (w_node_right(j + 1) - w_node_right(j)) / h_;
    }

    // integral_0^u of w(t)/sqrt(t) dt with w piecewise linear on the band.
    double band_antiderivative(double u, bool right) const {
        double acc = 0.0;
        const int jmax = std::clamp(static_cast<int>(u / h_), 0, band_ - 1);
        for (int j = 0; j <= jmax; ++j) {
            const double ua = j * h_;
            const double ub = std::min(u, (j + 1) * h_);
            if (ub <= ua) break;
            const double wa = right ? w_node_right(j) : w_node_left(j);
            const double wb = right ? w_node_right(j + 1) : w_node_left(j + 1);
            const double s = (wb - wa) / h_;
            const double ra = std::sqrt(ua), rb = std::sqrt(ub);
            // int (wa + s(t-ua)) / sqrt(t) dt
            acc += (wa - s * ua) * 2.0 * (rb - ra) +
                   s * (2.0 / 3.0) * (ub * rb - ua * ra);
        }
        return acc;
    }
    double band_integral_left(double x) const { return band_antiderivative(x + 1.0, false); }
    // integral from x to 1 (tail) on the right band.
    double band_integral_right(double x) const { return band_antiderivative(1.0 - x, true); }

    double compute_cell_mass(int j) const {
        if (left_active_ && j < band_)
            return band_integral_left(rho_->node(j + 1)) - band_integral_left(rho_->node(j));
        if (right_active_ && j >= n_ - 1 - band_)
            return band_integral_right(rho_->node(j)) - band_integral_right(rho_->node(j + 1));
        return 0.5 * h_ * (rho_->value(j) + rho_->value(j + 1));
    }

    const DensityGrid* rho_;
    int n_;
    double h_;
    int band_ = 0;
    bool left_active_ = false, right_active_ = false;
    double w0_left_ = 0.0, w0_right_ = 0.0;
    std::vector<double> cell_mass_;
    double total_ = 0.0;
};

// Density lookups consistent with the Quadrature model (thin alias kept for
// call sites that only evaluate pointwise).
class EdgeAwareDensity {
  public:
    explicit EdgeAwareDensity(const DensityGrid& rho) : quad_(rho) {}
    double operator()(double x) const { return quad_.density_at(x); }
    const Quadrature& quadrature() const { return quad_; }

  private:
    Quadrature quad_;
};

// ---------------------------------------------------------------------------
// Distribution-function conjugator: H(x) = -1 + 2 mu([-1,x]) / mu([-1,1]),
// an increasing map of [-1,1] onto itself with H' proportional to the
// density.  Evaluates as a MapExpr so it can participate in conjugated
// branch chains.

struct CdfData {
    explicit CdfData(const DensityGrid& rho) : grid(rho), quad(grid) {
        const int n = grid.nodes();
        cum.resize(static_cast<std::size_t>(n));
        cum[0] = 0.0;
        for (int j = 1; j < n; ++j)
            cum[static_cast<std::size_t>(j)] =
                cum[static_cast<std::size_t>(j - 1)] + quad.cell_mass(j - 1);
        scale = 2.0 / quad.total();
    }

    double eval(double x) const {
        if (x <= -1.0) return -1.0;
        if (x >= 1.0) return 1.0;
        const int j = std::clamp(static_cast<int>((x + 1.0) / grid.spacing()), 0,
                                 grid.nodes() - 2);
        return -1.0 + scale * (cum[static_cast<std::size_t>(j)] + quad.partial(j, x));
    }

    double density_at(double x) const { return quad.density_at(x); }
    double density_slope_at(double x) const { return quad.density_slope_at(x); }

    // Monotone inverse by cell bisection plus safeguarded Newton.
    double inverse(double y) const {
        if (y <= -1.0) return -1.0;
        if (y >= 1.0) return 1.0;
        const double target = (y + 1.0) / scale;
        int lo = 0, hi = grid.nodes() - 1;
        while (hi - lo > 1) {
            const int mid = (lo + hi) / 2;
            if (cum[static_cast<std::size_t>(mid)] <= target)
                lo = mid;
            else
                hi = mid;
        }
        double a = grid.node(lo), b = grid.node(lo + 1);
        const double want = target - cum[static_cast<std::size_t>(lo)];
        double x = 0.5 * (a + b);
        for (int it = 0; it < 100; ++it) {
            const double g = quad.partial(lo, x) - want;
            if (std::abs(g) <= 1e-16 * std::max(1.0, want)) break;
            if (g > 0.0)
                b = x;
            else
                a = x;
            const double d = density_at(x);
            double xn = d > 0.0 ? x - g / d : 0.5 * (a + b);
            if (!(xn > a && xn < b)) xn = 0.5 * (a + b);
            if (std::abs(xn - x) < 1e-17) {
                x = xn;
                break;
            }
            x = xn;
        }
        return x;
    }

    DensityGrid grid;
    Quadrature quad;
    std::vector<double> cum;
    double scale = 1.0;
};

class CdfMap final : public MapExpr {
  public:
    CdfMap(std::shared_ptr<const CdfData> data, bool inverse)
        : data_(std::move(data)), inverse_(inverse) {}

    double value(double x) const override {
        return inverse_ ? data_->inverse(x) : data_->eval(x);
    }
    Jet3 jet(double x, int order) const override {
        if (!inverse_) return forward_jet(x, order);
        const double u = data_->inverse(x);
        if (order == 0) return {u, 0.0, 0.0, 0.0};
        const Jet3 fj = forward_jet(u, order);
        if (std::abs(fj.d1) < 1e-300)
            throw singular_branch_error("cdf inverse: density vanishes");
        return jet_invert(fj, u);
    }
    MapKind kind() const override { return MapKind::cdf; }
    const std::shared_ptr<const CdfData>& data() const { return data_; }
    bool is_inverse() const { return inverse_; }

  private:
    Jet3 forward_jet(double x, int order) const {
        Jet3 j;
        j.v = data_->eval(x);
        if (order >= 1) j.d1 = data_->scale * data_->density_at(x);
        if (order >= 2) j.d2 = data_->scale * data_->density_slope_at(x);
        return j;
    }
    std::shared_ptr<const CdfData> data_;
    bool inverse_;
};

inline MapPtr distribution_map(std::shared_ptr<const CdfData> data, bool inverse = false) {
    return std::make_shared<CdfMap>(std::move(data), inverse);
}

} // namespace unirig

#endif
