#pragma once

// Continuous-time chains: contraction semigroups T(t) = exp(tG) and the
// entangled Cesaro integrals (1/T) int_0^T T_a(t) A_{a-1} ... A_0 T_0(t) f dt,
// approximated by the composite trapezoid rule on a uniform grid.

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "ergolab/core.hpp"
#include "ergolab/csv.hpp"
#include "ergolab/entangle.hpp"
#include "ergolab/errors.hpp"
#include "ergolab/operators.hpp"
#include "ergolab/series.hpp"

namespace ergolab {

inline constexpr double generator_real_tol = 1e-12;
inline constexpr double contraction_tol = 1e-6;

class GeneratorSpec {
public:
    enum class Kind { Diagonal, Dense };

    /// Per-mode rates g_m with Re g_m <= 0.
    static GeneratorSpec diagonal(int cutoff, std::vector<cplx> g) {
        const Basis b = Basis::spectral(cutoff);
        if (g.size() != b.dim()) throw DimensionError("generator: expected 2M+1 rates");
        for (const auto& x : g) {
            if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) throw DomainError("generator: non-finite rate");
            if (x.real() > generator_real_tol)
                throw DomainError("generator: Re g = " + csv::format(x.real()) + " > 0 does not generate a contraction");
        }
        GeneratorSpec s(b, Kind::Diagonal);
        s.rates_ = std::move(g);
        return s;
    }

    static GeneratorSpec dense(const Basis& b, Matrix m) {
        if (m.rows() != static_cast<Eigen::Index>(b.dim()) || m.cols() != m.rows())
            throw DimensionError("generator: matrix does not match the basis");
        if (!m.allFinite()) throw DomainError("generator: non-finite entry");
        GeneratorSpec s(b, Kind::Dense);
        s.matrix_ = std::move(m);
        return s;
    }

    static GeneratorSpec zero(const Basis& b) {
        if (b.is_spectral()) return diagonal(b.cutoff(), std::vector<cplx>(b.dim()));
        return dense(b, Matrix::Zero(static_cast<Eigen::Index>(b.dim()), static_cast<Eigen::Index>(b.dim())));
    }

    /// g_m = 2 pi i m alpha: the flow x -> x + alpha t.
    static GeneratorSpec rotation_flow(int cutoff, double alpha) {
        const Basis b = Basis::spectral(cutoff);
        std::vector<cplx> g(b.dim());
        for (int m = -cutoff; m <= cutoff; ++m) g[b.slot(m)] = cplx(0.0, two_pi * m * alpha);
        return diagonal(cutoff, std::move(g));
    }

    /// P - I with (Pf)(g) = f(perm(g)); the jump process along the permutation.
    static GeneratorSpec permutation_laplacian(const std::vector<std::size_t>& perm) {
        const Operator P = Operator::permutation(perm);
        const auto d = static_cast<Eigen::Index>(perm.size());
        return dense(P.basis(), P.raw_matrix() - Matrix::Identity(d, d));
    }

    Kind kind() const { return kind_; }
    const Basis& basis() const { return basis_; }
    const std::vector<cplx>& rates() const { return rates_; }
    const Matrix& matrix() const { return matrix_; }

    Matrix full_matrix() const {
        if (kind_ == Kind::Dense) return matrix_;
        const auto d = static_cast<Eigen::Index>(basis_.dim());
        Matrix m = Matrix::Zero(d, d);
        for (Eigen::Index i = 0; i < d; ++i) m(i, i) = rates_[static_cast<std::size_t>(i)];
        return m;
    }

private:
    GeneratorSpec(Basis b, Kind k) : basis_(b), kind_(k) {}
    Basis basis_;
    Kind kind_;
    std::vector<cplx> rates_;
    Matrix matrix_;
};

/// exp(tG) as an operator. Dense generators use scaling and squaring.
inline Operator semigroup_operator(const GeneratorSpec& G, double t) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("semigroup: t must be a finite value >= 0");
    const Basis& b = G.basis();
    if (G.kind() == GeneratorSpec::Kind::Diagonal) {
        std::vector<cplx> mu(b.dim());
        for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = std::exp(t * G.rates()[i]);
        return Operator::diagonal(b.cutoff(), std::move(mu));
    }
    const Matrix E = (t * G.matrix()).exp();
    Eigen::JacobiSVD<Matrix> svd(E);
    const double nrm = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
    if (nrm > 1.0 + contraction_tol)
        throw InstabilityError("semigroup: ||exp(tG)||_2 = " + csv::format(nrm) + " exceeds 1 at t = " + csv::format(t));
    return Operator::dense(b, E);
}

inline FunctionVector semigroup_apply(const GeneratorSpec& G, double t, const FunctionVector& f) {
    require_same_basis(G.basis(), f.basis(), "semigroup_apply");
    if (G.kind() == GeneratorSpec::Kind::Diagonal) {
        if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("semigroup: t must be a finite value >= 0");
        std::vector<cplx> c(f.dim());
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::exp(t * G.rates()[i]) * f[i];
        return FunctionVector(f.basis(), std::move(c));
    }
    return apply(semigroup_operator(G, t), f);
}

/// True iff ker G is spanned by the constants.
inline bool kernel_is_constants(const GeneratorSpec& G, double tol = 1e-9) {
    const Basis& b = G.basis();
    if (G.kind() == GeneratorSpec::Kind::Diagonal) {
        for (int m = -b.cutoff(); m <= b.cutoff(); ++m)
            if ((std::abs(G.rates()[b.slot(m)]) < tol) != (m == 0)) return false;
        return true;
    }
    Eigen::JacobiSVD<Matrix> svd(G.matrix(), Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    Eigen::Index null_dim = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) < tol) ++null_dim;
    if (null_dim != 1) return false;
    const Vector v = svd.matrixV().col(s.size() - 1);
    const FunctionVector fv = detail::from_eigen(b, v);
    // Constants: a single nonzero e_0 coefficient, or a flat grid vector.
    const FunctionVector c = FunctionVector::constant(b, b.is_spectral() ? v(static_cast<Eigen::Index>(b.slot(0)))
                                                                         : v.mean());
    return fv.max_abs_diff(c) < std::sqrt(tol) * v.norm();
}

struct SemigroupChain {
    std::vector<GeneratorSpec> generators;
    std::vector<Operator> A;
    double horizon = 1.0;
    /// Quadrature step; 0 means horizon / 10^4.
    double h = 0.0;

    double step() const { return h > 0.0 ? h : horizon / 1e4; }
    std::size_t length() const { return A.size(); }

    void validate() const {
        if (generators.empty()) throw DimensionError("SemigroupChain: need at least one generator");
        if (A.size() + 1 != generators.size()) throw DimensionError("SemigroupChain: need a+1 generators for a intertwiners");
        const Basis b = generators.front().basis();
        for (const auto& g : generators) require_same_basis(b, g.basis(), "SemigroupChain");
        for (const auto& a : A) require_same_basis(b, a.basis(), "SemigroupChain");
        if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("SemigroupChain: horizon must be > 0");
        if (h < 0.0 || step() > horizon) throw DomainError("SemigroupChain: need 0 < h <= horizon");
    }
};

namespace detail {

inline std::size_t steps_for(double t, double h, const char* what) {
    const double q = t / h;
    const double r = std::round(q);
    if (r < 1.0 || std::abs(q - r) > 1e-9 * std::max(1.0, r))
        throw DomainError(std::string(what) + " = " + csv::format(t) + " is not a positive multiple of h = " +
                          csv::format(h));
    return static_cast<std::size_t>(r);
}

/// Node evaluator: T_a(kh) A_{a-1} ... A_0 T_0(kh) f.
class NodeChain {
public:
    NodeChain(const SemigroupChain& c, std::size_t max_steps) : chain_(c), h_(c.step()) {
        for (const auto& g : c.generators) {
            if (g.kind() == GeneratorSpec::Kind::Dense)
                step_ops_.push_back(semigroup_operator(g, h_).with_power_plan(max_steps));
            else
                step_ops_.push_back(std::nullopt);
        }
    }

    FunctionVector at(std::size_t k, const FunctionVector& f) const {
        FunctionVector g = flow(0, k, f);
        for (std::size_t j = 0; j < chain_.A.size(); ++j) g = flow(j + 1, k, apply(chain_.A[j], g));
        return g;
    }

private:
    FunctionVector flow(std::size_t j, std::size_t k, const FunctionVector& f) const {
        if (step_ops_[j]) return power_apply(*step_ops_[j], k, f);
        return semigroup_apply(chain_.generators[j], static_cast<double>(k) * h_, f);
    }

    const SemigroupChain& chain_;
    double h_;
    std::vector<std::optional<Operator>> step_ops_;
};

/// Trapezoid means at each checkpoint step count K': (S - F_0/2 - F_K'/2) / K'
/// with S the plain sum of F_0..F_K'.
template <class NodeFn>
std::vector<std::vector<double>> trapezoid_means(const std::vector<std::size_t>& steps, std::size_t width,
                                                 NodeFn&& node, const EngineOptions& opt) {
    std::vector<std::size_t> cps;
    for (auto s : steps) cps.push_back(s + 1);
    const auto sums = cesaro_sums(cps, width, [&](std::size_t n, std::span<double> out) { node(n - 1, out); }, opt);
    std::vector<double> f0(width), fk(width);
    node(0, std::span<double>(f0));
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        node(steps[i], std::span<double>(fk));
        std::vector<double> v(width);
        const double K = static_cast<double>(steps[i]);
        for (std::size_t c = 0; c < width; ++c) v[c] = (sums[i][c] - 0.5 * f0[c] - 0.5 * fk[c]) / K;
        out.push_back(std::move(v));
    }
    return out;
}

inline std::vector<std::size_t> integral_steps(const SemigroupChain& chain, const std::vector<double>& checkpoints) {
    chain.validate();
    const double h = chain.step();
    const std::size_t K = steps_for(chain.horizon, h, "horizon");
    if (checkpoints.empty()) return geometric_checkpoints(K);
    std::vector<std::size_t> steps;
    for (double t : checkpoints) {
        if (!(t > 0.0) || t > chain.horizon * (1.0 + 1e-12))
            throw DomainError("cesaro_integral: checkpoint " + csv::format(t) + " outside (0, horizon]");
        steps.push_back(steps_for(t, h, "checkpoint"));
    }
    return resolve_checkpoints(K, steps);
}

} // namespace detail

/// Normalized trapezoid integrals (1/T') int_0^T' ... dt at each checkpoint T'
/// (multiples of h; default geometric in steps up to the horizon).
inline CesaroSeries<FunctionVector, double> cesaro_integral(const SemigroupChain& chain, const FunctionVector& f,
                                                            const std::vector<double>& checkpoints = {},
                                                            const EngineOptions& opt = {}) {
    const auto steps = detail::integral_steps(chain, checkpoints);
    require_same_basis(chain.generators.front().basis(), f.basis(), "cesaro_integral");
    const detail::NodeChain nodes(chain, steps.back());
    const auto means = detail::trapezoid_means(
        steps, 2 * f.dim(), [&](std::size_t k, std::span<double> out) { detail::write_interleaved(nodes.at(k, f), out); },
        opt);
    CesaroSeries<FunctionVector, double> s;
    for (std::size_t i = 0; i < steps.size(); ++i)
        s.push(static_cast<double>(steps[i]) * chain.step(), detail::read_interleaved(f.basis(), means[i]));
    return s;
}

/// Pointwise-modulus variant on a grid (spectral integrands sampled at G_eval).
inline CesaroSeries<FunctionVector, double> cesaro_abs_integral(const SemigroupChain& chain, const FunctionVector& f,
                                                                const std::vector<double>& checkpoints = {},
                                                                std::size_t G_eval = 0,
                                                                const EngineOptions& opt = {}) {
    const auto steps = detail::integral_steps(chain, checkpoints);
    require_same_basis(chain.generators.front().basis(), f.basis(), "cesaro_abs_integral");
    const Basis grid = detail::abs_grid(f.basis(), G_eval);
    const bool spectral = f.basis().is_spectral();
    const detail::NodeChain nodes(chain, steps.back());
    const auto means = detail::trapezoid_means(
        steps, grid.dim(),
        [&](std::size_t k, std::span<double> out) {
            const FunctionVector t = nodes.at(k, f);
            const FunctionVector s = spectral ? to_spatial(t, grid.points()) : t;
            for (std::size_t i = 0; i < s.dim(); ++i) out[i] = std::abs(s[i]);
        },
        opt);
    CesaroSeries<FunctionVector, double> s;
    for (std::size_t i = 0; i < steps.size(); ++i)
        s.push(static_cast<double>(steps[i]) * chain.step(), detail::read_real(grid, means[i]));
    return s;
}

/// checkpoint,index,re,im for a time-indexed series.
inline void write_series_csv(std::ostream& os, const CesaroSeries<FunctionVector, double>& s) {
    csv::Writer w(os);
    w.header({"checkpoint", "index", "re", "im"});
    for (std::size_t k = 0; k < s.size(); ++k) {
        const FunctionVector& v = s.values[k];
        const Basis& b = v.basis();
        for (std::size_t i = 0; i < v.dim(); ++i) {
            const long long idx = b.is_spectral() ? b.mode_at(i) : static_cast<long long>(i);
            w.row(s.checkpoints[k], idx, v[i].real(), v[i].imag());
        }
    }
}

inline void write_series_summary_csv(std::ostream& os, const CesaroSeries<FunctionVector, double>& s) {
    csv::Writer w(os);
    w.header({"checkpoint", "sup_value", "l2_value"});
    for (std::size_t k = 0; k < s.size(); ++k) w.row(s.checkpoints[k], sup_bound(s.values[k]), norm(s.values[k], Norm::L2));
}

} // namespace ergolab
