#ifndef UNIRIG_MARKOV_HPP
#define UNIRIG_MARKOV_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include "unirig/diffeo.hpp"
#include "unirig/grid.hpp"
#include "unirig/parallel.hpp"
#include "unirig/unimodal.hpp"

namespace unirig {

// ---------------------------------------------------------------------------
// Markov maps: finitely truncated countable branch systems F : U M_i -> [-1,1],
// each branch a monotone diffeomorphism onto the whole interval with an
// extension of definite extra range (the Koebe space).

struct MarkovBranch {
    Interval domain;    // M_i
    MapPtr map;         // monotone on domain, image [-1,1]
    Interval extension; // T_i, contains domain; equals domain when margin is 0
    Interval extension_range{-1.0, 1.0}; // image of the extension
    bool reversing = false;
    int return_time = 1; // n_I for induced branches
};

class MarkovMap {
  public:
    MarkovMap(std::vector<MarkovBranch> branches, double margin_a, double bound_K,
              int smoothness_r = 3)
        : branches_(std::move(branches)), margin_(margin_a), bound_(bound_K),
          r_(smoothness_r) {
        if (branches_.empty()) throw construction_error("MarkovMap: no branches");
        std::sort(branches_.begin(), branches_.end(),
                  [](const MarkovBranch& a, const MarkovBranch& b) {
                      return a.domain.lo < b.domain.lo;
                  });
        double covered = 0.0;
        for (const auto& b : branches_) covered += b.domain.length();
        coverage_ = covered / 2.0;
    }

    int size() const { return static_cast<int>(branches_.size()); }
    const MarkovBranch& branch(int i) const { return branches_[static_cast<std::size_t>(i)]; }
    const std::vector<MarkovBranch>& branches() const { return branches_; }
    double coverage() const { return coverage_; }
    double margin() const { return margin_; }
    double regularity_bound() const { return bound_; }
    int smoothness() const { return r_; }

    double branch_value(int i, double x) const { return branch(i).map->value(x); }
    Jet3 branch_jet(int i, double x, int order) const {
        return branch(i).map->jet(x, order);
    }
    // (F|M_i)^{-1}(y) for y in [-1,1].
    double branch_preimage(int i, double y) const {
        return solve_monotone(*branch(i).map, branch(i).domain, y);
    }

    // F^n along a word: x in the cylinder of w is mapped applying branch
    // w(n) first and branch w(1) last.
    double word_value(const std::vector<int>& w, double x) const {
        for (std::size_t k = w.size(); k-- > 0;) x = branch_value(w[k], x);
        return x;
    }
    Jet3 word_jet(const std::vector<int>& w, double x, int order) const {
        if (w.empty()) return {x, 1.0, 0.0, 0.0};
        Jet3 acc = branch_jet(w.back(), x, order);
        for (std::size_t k = w.size() - 1; k-- > 0;)
            acc = jet_compose(branch_jet(w[k], acc.v, order), acc);
        return acc;
    }

  private:
    std::vector<MarkovBranch> branches_;
    double margin_;
    double bound_;
    int r_;
    double coverage_ = 0.0;
};

// ---------------------------------------------------------------------------
// Reference systems used throughout the tests.

// Affine doubling map: x -> 2x+1 on [-1,0], x -> 2x-1 on [0,1].
inline MarkovMap doubling_map() {
    std::vector<MarkovBranch> br;
    br.push_back({Interval(-1.0, 0.0), affine(2.0, 1.0), Interval(-1.0, 0.0)});
    br.push_back({Interval(0.0, 1.0), affine(2.0, -1.0), Interval(0.0, 1.0)});
    return MarkovMap(std::move(br), 0.0, 1.0, 3);
}

// Full two-branch affine map with break at c: slopes 2/(1+c) and 2/(1-c).
inline MarkovMap affine_two_branch(double c) {
    if (!(c > -1.0 && c < 1.0)) throw error("affine_two_branch: break must be interior");
    std::vector<MarkovBranch> br;
    const double sl = 2.0 / (1.0 + c), sr = 2.0 / (1.0 - c);
    br.push_back({Interval(-1.0, c), affine(sl, 1.0 - sl * c), Interval(-1.0, c)});
    br.push_back({Interval(c, 1.0), affine(sr, -1.0 - sr * c), Interval(c, 1.0)});
    return MarkovMap(std::move(br), 0.0, 1.0, 3);
}

// The two monotone laps of a unimodal map as a (margin-zero) full branch
// system; for q_1 this is the classical Chebyshev presentation.
inline MarkovMap two_branch_presentation(const UnimodalMap& f) {
    const double c = f.critical_point();
    const double vc = f.critical_value();
    if (std::abs(f(-1.0) + 1.0) > 1e-9 || std::abs(f(1.0) + 1.0) > 1e-9 ||
        std::abs(vc - 1.0) > 1e-9)
        throw construction_error("two_branch_presentation: laps are not onto [-1,1]");
    std::vector<MarkovBranch> br;
    br.push_back({Interval(-1.0, c), f.chain(), Interval(-1.0, c)});
    br.push_back({Interval(c, 1.0), f.chain(), Interval(c, 1.0),
                  Interval(-1.0, 1.0), true});
    return MarkovMap(std::move(br), 0.0, 1.0, 3);
}

// ---------------------------------------------------------------------------
// Validation against the Markov-map conditions: onto-ness, monotonicity,
// sampled Schwarzian sign on extensions, measured inverse-branch norms,
// coverage of the truncation.

struct BranchValidation {
    int index = 0;
    double onto_residual = 0.0;
    bool monotone = true;
    double inverse_norm_r2 = 0.0;
    double inverse_norm_r3 = 0.0;
    bool norm_unbounded = false;
    double schwarzian_max = -std::numeric_limits<double>::infinity();
    bool extension_ok = true;
};

struct MarkovValidation {
    bool valid = true;
    std::vector<BranchValidation> per_branch;
    double measured_K = 0.0; // max of the finite r=2 inverse norms
    bool any_norm_unbounded = false;
    double coverage = 0.0;
    double uncovered = 0.0;
    bool bound_respected = true;

    std::string summary() const {
        return std::string(valid ? "valid" : "INVALID") +
               ", coverage=" + std::to_string(coverage) +
               ", measured K=" + std::to_string(measured_K);
    }
};

struct ValidateOptions {
    double onto_tol = 1e-9;
    int norm_grid = 256;
    int schwarzian_samples = 33;
};

inline MarkovValidation validate(const MarkovMap& F, const ValidateOptions& opt = {}) {
    MarkovValidation rep;
    rep.coverage = F.coverage();
    rep.uncovered = std::max(0.0, 2.0 * (1.0 - F.coverage()));
    for (int i = 0; i < F.size(); ++i) {
        const MarkovBranch& b = F.branch(i);
        BranchValidation bv;
        bv.index = i;
        const double vlo = b.map->value(b.domain.lo);
        const double vhi = b.map->value(b.domain.hi);
        const double lo = b.reversing ? vhi : vlo;
        const double hi = b.reversing ? vlo : vhi;
        bv.onto_residual = std::max(std::abs(lo + 1.0), std::abs(hi - 1.0));
        if (bv.onto_residual > opt.onto_tol) rep.valid = false;
        try {
            const Diffeo inv = rescale(inverse_branch(b.map, b.domain), unit_interval());
            try {
                bv.inverse_norm_r2 = cr_norm(inv, 2, opt.norm_grid);
                bv.inverse_norm_r3 = cr_norm(inv, 3, opt.norm_grid);
            } catch (const error&) {
                // Margin-zero systems can have genuinely unbounded inverse
                // norms at the lap endpoints; report, do not invalidate.
                bv.norm_unbounded = true;
                bv.inverse_norm_r2 = std::numeric_limits<double>::infinity();
                bv.inverse_norm_r3 = std::numeric_limits<double>::infinity();
            }
        } catch (const error&) {
            bv.monotone = false;
            rep.valid = false;
        }
        // Negative Schwarzian on the extension (interior samples).
        const auto xs = uniform_samples(b.extension, opt.schwarzian_samples);
        for (std::size_t k = 1; k + 1 < xs.size(); ++k) {
            try {
                bv.schwarzian_max = std::max(bv.schwarzian_max, schwarzian(*b.map, xs[k]));
            } catch (const critical_point_error&) {
                bv.monotone = false;
                rep.valid = false;
            }
        }
        // Extension must reach the extended range when a margin is declared.
        if (F.margin() > 0.0) {
            const double elo = b.map->value(b.extension.lo);
            const double ehi = b.map->value(b.extension.hi);
            const double span_lo = std::min(elo, ehi), span_hi = std::max(elo, ehi);
            bv.extension_ok = span_lo <= -1.0 - F.margin() + 1e-7 &&
                              span_hi >= 1.0 + F.margin() - 1e-7;
        }
        if (!bv.norm_unbounded)
            rep.measured_K = std::max(rep.measured_K, bv.inverse_norm_r2);
        else
            rep.any_norm_unbounded = true;
        rep.per_branch.push_back(bv);
    }
    rep.bound_respected = rep.measured_K <= F.regularity_bound() + 1e-9;
    return rep;
}

// ---------------------------------------------------------------------------
// Words, cylinders and rescaled inverse branch compositions.

struct Word {
    std::vector<int> symbols;

    Word() = default;
    explicit Word(std::vector<int> s) : symbols(std::move(s)) {}
    int length() const { return static_cast<int>(symbols.size()); }
    Word prefix(int n) const {
        return Word(std::vector<int>(symbols.begin(), symbols.begin() + n));
    }
    Word extended(int symbol) const {
        Word w = *this;
        w.symbols.push_back(symbol);
        return w;
    }
    std::string text() const {
        std::string s;
        for (std::size_t k = 0; k < symbols.size(); ++k) {
            if (k) s.push_back('.');
            s += std::to_string(symbols[k]);
        }
        return s;
    }
    bool operator<(const Word& other) const { return symbols < other.symbols; }
};

inline void check_word(const MarkovMap& F, const Word& w) {
    for (const int s : w.symbols)
        if (s < 0 || s >= F.size())
            throw unrealized_word_error("word symbol " + std::to_string(s) +
                                        " outside the branch range");
}

// I_w^n by nested inverse-branch pullback: each appended symbol is one more
// preimage step, I_{w i} = (F|M_i)^{-1}(I_w).  The returned interval carries
// the orientation of the branch of F^n over it.
inline Interval cylinder_interval(const MarkovMap& F, const Word& w) {
    check_word(F, w);
    Interval I = unit_interval();
    bool reversed = false;
    for (const int s : w.symbols) {
        const double a = F.branch_preimage(s, I.lo);
        const double b = F.branch_preimage(s, I.hi);
        if (std::abs(a - b) < 1e-15)
            throw unrealized_word_error("cylinder degenerates for word " + w.text());
        I = hull(a, b);
        reversed ^= F.branch(s).reversing;
    }
    I.orient = reversed ? Orientation::reversed : Orientation::forward;
    return I;
}

// The branch of F^n with the combinatorics w: its cylinder, the rescaled
// inverse psi_w, and the last refinement step [(F|I_w^n)^{-1}].
struct BranchComposition {
    Word word;
    Interval cylinder{-1.0, 1.0};
    Diffeo psi;  // [(F^n|I_w^n)^{-1}]
    Diffeo step; // [(F|I_w^n)^{-1}] as a map from the parent cylinder
    bool reversing = false;

    BranchComposition() : psi(Diffeo::identity()), step(Diffeo::identity()) {}
};

inline MapPtr inverse_chain(const MarkovMap& F, const Word& w) {
    MapPtr chain;
    for (const int s : w.symbols) {
        MapPtr inv = inverse_branch(F.branch(s).map, F.branch(s).domain);
        chain = chain ? compose(std::move(inv), std::move(chain)) : std::move(inv);
    }
    return chain ? chain : identity_map();
}

// The affine identifications below respect cylinder orientations, which is
// what makes the recursion psi_{w,n+1} = phi_{w,n} ∘ psi_{w,n} hold exactly
// through orientation reversing branches.
inline BranchComposition branch_composition(const MarkovMap& F, const Word& w) {
    check_word(F, w);
    BranchComposition bc;
    bc.word = w;
    bc.cylinder = cylinder_interval(F, w);
    bc.reversing = bc.cylinder.orient == Orientation::reversed;
    if (w.length() == 0) return bc;
    const MapPtr chain = inverse_chain(F, w);
    bc.psi = Diffeo(compose(affine_onto_oriented(bc.cylinder, unit_interval()), chain), 3,
                    false, false, false);
    const Interval parent = w.length() == 1
                                ? unit_interval()
                                : cylinder_interval(F, w.prefix(w.length() - 1));
    const MapPtr step_inv = inverse_branch(F.branch(w.symbols.back()).map, bc.cylinder);
    bc.step = Diffeo(compose(affine_onto_oriented(bc.cylinder, unit_interval()),
                             compose(step_inv, affine_onto_oriented(unit_interval(), parent))),
                     3, false, false, false);
    return bc;
}

// ---------------------------------------------------------------------------
// Cauchy property of the rescaled inverses (the nonlinearity-norm route):
//   |psi_{w,n+1} - psi_{w,n}|_2 = sup |eta_{phi_{w,n}}(psi_{w,n}(x)) Dpsi_{w,n}(x)|.

struct CauchyStep {
    int n = 0;
    double diff_norm = 0.0; // |psi_{n+1} - psi_n|_2
    double phi_norm = 0.0;  // |phi_{w,n}|_2
    double sup_dpsi = 0.0;  // sup |D psi_{w,n}|
};

inline std::vector<CauchyStep> cauchy_decay(const MarkovMap& F, const Word& w, int depth,
                                            int grid = 64) {
    if (w.length() < depth + 1)
        throw error("cauchy_decay: word must be at least depth+1 symbols long");
    std::vector<CauchyStep> steps;
    // Cell midpoints: margin-zero presentations are singular exactly at the
    // endpoints, and the sup estimate stays a grid-refined lower bound.
    std::vector<double> xs(static_cast<std::size_t>(grid));
    for (int k = 0; k < grid; ++k)
        xs[static_cast<std::size_t>(k)] = -1.0 + (k + 0.5) * 2.0 / grid;
    for (int n = 1; n <= depth; ++n) {
        const BranchComposition psi_n = branch_composition(F, w.prefix(n));
        const BranchComposition next = branch_composition(F, w.prefix(n + 1));
        const Nonlinearity eta_phi(next.step);
        CauchyStep st;
        st.n = n;
        for (const double x : xs) {
            const Jet3 jp = psi_n.psi.jet(x, 1);
            st.diff_norm = std::max(st.diff_norm, std::abs(eta_phi(jp.v) * jp.d1));
            st.phi_norm = std::max(st.phi_norm, std::abs(eta_phi(x)));
            st.sup_dpsi = std::max(st.sup_dpsi, std::abs(jp.d1));
        }
        steps.push_back(st);
    }
    return steps;
}

// ---------------------------------------------------------------------------
// Perron-Frobenius operator with a cached preimage table: the preimages
// y_i = (F|M_i)^{-1}(x_j) and weights 1/|DF(y_i)| are fixed per (map, grid).

class TransferOperator {
  public:
    TransferOperator(const MarkovMap& F, int nodes) : n_(nodes) {
        const int m = F.size();
        ys_.resize(static_cast<std::size_t>(n_) * static_cast<std::size_t>(m));
        ws_.resize(ys_.size());
        singular_.assign(static_cast<std::size_t>(n_), false);
        const DensityGrid ref = DensityGrid::uniform(n_);
        parallel_for(static_cast<std::size_t>(n_), [&](std::size_t j) {
            const double x = ref.node(static_cast<int>(j));
            for (int i = 0; i < m; ++i) {
                const double y = F.branch_preimage(i, x);
                const double d = std::abs(F.branch_jet(i, y, 1).d1);
                ys_[j * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)] = y;
                if (d < 1e-10) {
                    singular_[j] = true;
                    ws_[j * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)] = 0.0;
                } else {
                    ws_[j * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)] =
                        1.0 / d;
                }
            }
        });
        branches_ = m;
    }

    int nodes() const { return n_; }

    // Raw pushforward values at the nodes; no renormalization.  Density
    // lookups inside the two boundary cells go through the edge model, which
    // keeps inverse-square-root boundary layers self-consistent; nodes whose
    // preimage hits a vanishing derivative are filled by extrapolation.
    std::vector<double> apply_raw(const DensityGrid& rho) const {
        if (rho.nodes() != n_) throw error("TransferOperator: grid size mismatch");
        const EdgeAwareDensity lookup(rho);
        std::vector<double> out(static_cast<std::size_t>(n_), 0.0);
        parallel_for(static_cast<std::size_t>(n_), [&](std::size_t j) {
            if (singular_[j]) return;
            double sum = 0.0;
            for (int i = 0; i < branches_; ++i) {
                const std::size_t k =
                    j * static_cast<std::size_t>(branches_) + static_cast<std::size_t>(i);
                sum += lookup(ys_[k]) * ws_[k];
            }
            out[j] = sum;
        });
        fill_flagged_nodes(out, singular_);
        return out;
    }

    struct Applied {
        DensityGrid density;
        double mass_before = 0.0;
    };

    // Normalization measures mass with the edge-corrected quadrature.
    Applied apply(const DensityGrid& rho) const {
        DensityGrid next(apply_raw(rho));
        const double mass = Quadrature(next).total();
        if (!(mass > 0.0)) throw error("TransferOperator: pushforward lost all mass");
        for (auto& v : next.values()) v /= mass;
        return {std::move(next), mass};
    }

  private:
    int n_;
    int branches_ = 0;
    std::vector<double> ys_, ws_;
    std::vector<bool> singular_;
};

inline std::vector<double> pf_apply_raw(const MarkovMap& F, const DensityGrid& rho) {
    return TransferOperator(F, rho.nodes()).apply_raw(rho);
}

struct PfResult {
    DensityGrid density;
    double mass_before = 0.0;
};

inline PfResult pf_apply(const MarkovMap& F, const DensityGrid& rho) {
    auto a = TransferOperator(F, rho.nodes()).apply(rho);
    return {std::move(a.density), a.mass_before};
}

// ---------------------------------------------------------------------------
// Invariant density: plain Perron-Frobenius iteration with a Cesaro-averaged
// fallback mirroring the (1/n) sum of pushforwards.

struct InvariantDensity {
    DensityGrid density;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
    double mass_defect = 0.0; // 1 - pre-normalization mass of the last step
    bool cesaro_used = false;
};

inline double pf_residual(const TransferOperator& op, const DensityGrid& rho) {
    const auto applied = op.apply(rho);
    return applied.density.sup_distance(rho, 1);
}

inline InvariantDensity invariant_density(const MarkovMap& F, int nodes, int max_iters,
                                          double tol) {
    const TransferOperator op(F, nodes);
    DensityGrid rho = DensityGrid::uniform(nodes);
    double mass = 1.0;
    int used = 0;
    double res = std::numeric_limits<double>::infinity();
    double best = res;
    int since_improvement = 0;
    for (; used < max_iters; ++used) {
        auto applied = op.apply(rho);
        res = applied.density.sup_distance(rho, 1);
        mass = applied.mass_before;
        rho = std::move(applied.density);
        if (res <= tol) {
            return {std::move(rho), res, used + 1, true, 1.0 - mass, false};
        }
        if (res < 0.999 * best) {
            best = res;
            since_improvement = 0;
        } else if (++since_improvement > 40) {
            break; // plain iteration stopped contracting
        }
    }
    // Cesaro phase: average further iterates.
    std::vector<double> acc = rho.values();
    DensityGrid avg = rho;
    int terms = 1;
    for (; used < max_iters; ++used) {
        rho = op.apply(rho).density;
        ++terms;
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += rho.values()[k];
        if (terms % 5 == 0 || used + 1 == max_iters) {
            std::vector<double> mean(acc);
            for (auto& v : mean) v /= static_cast<double>(terms);
            avg = DensityGrid(std::move(mean));
            avg.normalize();
            auto applied = op.apply(avg);
            res = applied.density.sup_distance(avg, 1);
            mass = applied.mass_before;
            if (res <= tol)
                return {std::move(avg), res, used + 1, true, 1.0 - mass, true};
        }
    }
    return {std::move(avg), res, used, false, 1.0 - mass, true};
}

// ---------------------------------------------------------------------------
// Cylinder measure nu([w]_n) = mu(I_w^n).

class CylinderMeasure {
  public:
    CylinderMeasure(const MarkovMap& F, DensityGrid mu)
        : F_(&F), mu_(std::move(mu)), quad_(mu_) {}

    double operator()(const Word& w) const {
        try {
            return quad_.integral_on(cylinder_interval(*F_, w));
        } catch (const unrealized_word_error&) {
            return 0.0;
        }
    }

    const DensityGrid& density() const { return mu_; }
    const Quadrature& quadrature() const { return quad_; }

  private:
    const MarkovMap* F_;
    DensityGrid mu_;
    Quadrature quad_;
};

inline double cylinder_measure(const MarkovMap& F, const DensityGrid& mu, const Word& w) {
    return CylinderMeasure(F, DensityGrid(mu.values()))(w);
}

// ---------------------------------------------------------------------------
// Density through the branch formula rho(x) = sum |D psi_w(x)| nu([w]), over
// a mass-adaptive antichain of cylinders expanded to the requested depth.

struct BranchDensityOptions {
    int max_leaves = 4096;
    double expand_below = 1e-7; // cylinders lighter than this stay leaves
};

struct BranchDensityResult {
    DensityGrid density;
    double retained_mass = 0.0;
    int leaves = 0;
    int deepest = 0;
};

namespace detail {

// Marching evaluation of |D (F^n|I_w)^{-1}| on the grid nodes.  Nodes whose
// preimage derivative degenerates (critical-value images of margin-zero
// systems) are flagged instead of accumulated.
inline void accumulate_branch_density(const MarkovMap& F, const std::vector<int>& word,
                                      const Interval& cyl, double nu,
                                      std::vector<double>& out, std::vector<bool>& flagged,
                                      const DensityGrid& ref) {
    const int n = ref.nodes();
    const double weight = 2.0 / cyl.length() * nu;
    for (int j = 0; j < n; ++j) {
        const double x = ref.node(j);
        // Safeguarded Newton on F^n_w(y) = x within the cylinder.
        double a = cyl.lo, b = cyl.hi;
        double y = 0.5 * (a + b);
        double fy = F.word_value(word, y) - x;
        const bool increasing = F.word_value(word, cyl.hi) > F.word_value(word, cyl.lo);
        for (int it = 0; it < 60; ++it) {
            if (std::abs(fy) <= 1e-12) break;
            if ((fy > 0.0) == increasing)
                b = y;
            else
                a = y;
            const Jet3 jy = F.word_jet(word, y, 1);
            double yn = jy.d1 != 0.0 ? y - fy / jy.d1 : 0.5 * (a + b);
            if (!(yn > a && yn < b)) yn = 0.5 * (a + b);
            if (yn == y) break;
            y = yn;
            fy = F.word_value(word, y) - x;
        }
        const double d = std::abs(F.word_jet(word, y, 1).d1);
        if (d < 1e-8)
            flagged[static_cast<std::size_t>(j)] = true;
        else
            out[static_cast<std::size_t>(j)] += weight / d;
    }
}

} // namespace detail

inline BranchDensityResult density_via_branches(const MarkovMap& F, const DensityGrid& mu,
                                                int depth,
                                                const BranchDensityOptions& opt = {}) {
    if (depth < 1) throw error("density_via_branches: depth must be positive");
    const Quadrature quad(mu);

    struct Node {
        Word word;
        Interval cyl;
        double nu;
    };
    auto heavier = [](const Node& a, const Node& b) { return a.nu < b.nu; };
    std::priority_queue<Node, std::vector<Node>, decltype(heavier)> frontier(heavier);
    std::vector<Node> leaves;
    for (int i = 0; i < F.size(); ++i) {
        const Word w(std::vector<int>{i});
        const Interval cyl = F.branch(i).domain;
        frontier.push({w, cyl, quad.integral_on(cyl)});
    }
    int budget = opt.max_leaves;
    while (!frontier.empty()) {
        Node nd = frontier.top();
        frontier.pop();
        const bool can_expand = nd.word.length() < depth && nd.nu > opt.expand_below &&
                                static_cast<int>(leaves.size()) +
                                        static_cast<int>(frontier.size()) + F.size() <=
                                    budget;
        if (!can_expand) {
            leaves.push_back(std::move(nd));
            continue;
        }
        for (int i = 0; i < F.size(); ++i) {
            Node child;
            child.word = nd.word.extended(i);
            const double a = F.branch_preimage(i, nd.cyl.lo);
            const double b = F.branch_preimage(i, nd.cyl.hi);
            child.cyl = hull(a, b);
            child.nu = quad.integral_on(child.cyl);
            frontier.push(std::move(child));
        }
    }
    // Deterministic order for the reduction.
    std::sort(leaves.begin(), leaves.end(),
              [](const Node& a, const Node& b) { return a.word < b.word; });

    BranchDensityResult result{DensityGrid::uniform(mu.nodes()), 0.0,
                               static_cast<int>(leaves.size()), 0};
    std::vector<std::vector<double>> partial(leaves.size());
    std::vector<std::vector<bool>> flags(leaves.size());
    parallel_for(leaves.size(), [&](std::size_t k) {
        std::vector<double> buf(static_cast<std::size_t>(mu.nodes()), 0.0);
        std::vector<bool> flag(static_cast<std::size_t>(mu.nodes()), false);
        detail::accumulate_branch_density(F, leaves[k].word.symbols, leaves[k].cyl,
                                          leaves[k].nu, buf, flag, mu);
        partial[k] = std::move(buf);
        flags[k] = std::move(flag);
    });
    std::vector<double> sum(static_cast<std::size_t>(mu.nodes()), 0.0);
    std::vector<bool> flagged(sum.size(), false);
    for (std::size_t k = 0; k < partial.size(); ++k)
        for (std::size_t j = 0; j < sum.size(); ++j) {
            sum[j] += partial[k][j];
            if (flags[k][j]) flagged[j] = true;
        }
    fill_flagged_nodes(sum, flagged);
    for (const auto& nd : leaves) {
        result.retained_mass += nd.nu;
        result.deepest = std::max(result.deepest, nd.word.length());
    }
    DensityGrid out(std::move(sum));
    const double mass = Quadrature(out).total();
    if (!(mass > 0.0)) throw error("density_via_branches: zero mass");
    for (auto& v : out.values()) v /= mass;
    result.density = std::move(out);
    return result;
}

} // namespace unirig

#endif
