#pragma once

// Entangled Cesaro averages
//   (1/N) sum_{n=1}^{N} T_a^n A_{a-1} T_{a-1}^n ... A_0 T_0^n f,
// their pointwise absolute versions, weighted averages with Bohr weights, and
// the coefficient sequences lambda_{j,n} = <A T^n f, phi_j>.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ergolab/angle.hpp"
#include "ergolab/core.hpp"
#include "ergolab/csv.hpp"
#include "ergolab/errors.hpp"
#include "ergolab/operators.hpp"
#include "ergolab/series.hpp"

namespace ergolab {

enum class Strictness { Strict, Warn, Off };

struct ChainOptions {
    Strictness strictness = Strictness::Strict;
    std::size_t ds_trials = 32;
    double ds_tol = 1e-10;
    std::uint64_t ds_seed = 0x5eedULL;
};

/// The data (T_0..T_a; A_0..A_{a-1}) of one entangled average.
class EntangledChain {
public:
    EntangledChain(std::vector<Operator> T, std::vector<Operator> A, const ChainOptions& opt = {})
        : T_(std::move(T)), A_(std::move(A)) {
        if (T_.empty()) throw DimensionError("EntangledChain: need at least T_0");
        if (A_.size() + 1 != T_.size())
            throw DimensionError("EntangledChain: " + std::to_string(T_.size()) + " powers need " +
                                 std::to_string(T_.size() - 1) + " intertwiners, got " + std::to_string(A_.size()));
        const Basis b = T_.front().basis();
        for (const auto& t : T_) require_same_basis(b, t.basis(), "EntangledChain");
        for (const auto& a : A_) require_same_basis(b, a.basis(), "EntangledChain");
        if (opt.strictness == Strictness::Off) return;
        for (std::size_t j = 0; j < T_.size(); ++j) {
            const auto r = validate_dunford_schwartz(T_[j], opt.ds_trials, opt.ds_tol, opt.ds_seed + j);
            if (r.passed) continue;
            const std::string msg = "T_" + std::to_string(j) + " is not Dunford-Schwartz (worst L1 ratio " +
                                    csv::format(r.worst_l1_ratio) + ", worst Linf ratio " +
                                    csv::format(r.worst_linf_ratio) + ")";
            if (opt.strictness == Strictness::Strict) throw ValidationError("EntangledChain: " + msg);
            warnings_.push_back(msg);
        }
    }

    /// Chain length a.
    std::size_t length() const { return A_.size(); }
    Basis basis() const { return T_.front().basis(); }
    const std::vector<Operator>& T() const { return T_; }
    const std::vector<Operator>& A() const { return A_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    /// Copy with power plans attached to the dense T_j, for repeated powers up to N.
    EntangledChain planned(std::uint64_t N) const {
        EntangledChain c = *this;
        for (auto& t : c.T_) t = t.with_power_plan(N);
        return c;
    }

private:
    std::vector<Operator> T_;
    std::vector<Operator> A_;
    std::vector<std::string> warnings_;
};

/// T_a^n A_{a-1} ... A_0 T_0^n f, evaluated right to left.
inline FunctionVector entangled_term(const EntangledChain& chain, std::uint64_t n, const FunctionVector& f) {
    if (n < 1) throw DomainError("entangled_term: n must be >= 1");
    require_same_basis(chain.basis(), f.basis(), "entangled_term");
    FunctionVector g = power_apply(chain.T()[0], n, f);
    for (std::size_t j = 0; j < chain.length(); ++j) g = power_apply(chain.T()[j + 1], n, apply(chain.A()[j], g));
    return g;
}

namespace detail {

inline void write_interleaved(const FunctionVector& v, std::span<double> out) {
    for (std::size_t i = 0; i < v.dim(); ++i) {
        out[2 * i] = v[i].real();
        out[2 * i + 1] = v[i].imag();
    }
}

inline FunctionVector read_interleaved(const Basis& b, const std::vector<double>& x) {
    std::vector<cplx> c(b.dim());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = {x[2 * i], x[2 * i + 1]};
    return FunctionVector(b, std::move(c));
}

inline FunctionVector read_real(const Basis& b, const std::vector<double>& x) {
    std::vector<cplx> c(x.begin(), x.end());
    return FunctionVector(b, std::move(c));
}

/// Grid on which absolute values of terms are taken.
inline Basis abs_grid(const Basis& b, std::size_t G_eval) {
    if (b.is_grid()) {
        if (G_eval != 0 && G_eval != b.points())
            throw DimensionError("abs average: grid vectors are evaluated on their own grid");
        return b;
    }
    const std::size_t G = G_eval == 0 ? oversampled_grid(b.cutoff()) : G_eval;
    if (G < 2 * static_cast<std::size_t>(b.cutoff()) + 1)
        throw AliasingError("abs average: G_eval = " + std::to_string(G) + " cannot resolve modes up to " +
                            std::to_string(b.cutoff()));
    return Basis::grid(G);
}

} // namespace detail

/// Running means (1/N') sum_{n <= N'} entangled_term(n) at each checkpoint.
inline CesaroSeries<FunctionVector> cesaro_average(const EntangledChain& chain, const FunctionVector& f, std::size_t N,
                                                   std::vector<std::size_t> checkpoints = {},
                                                   const EngineOptions& opt = {}) {
    require_same_basis(chain.basis(), f.basis(), "cesaro_average");
    const auto cps = resolve_checkpoints(N, std::move(checkpoints));
    const EntangledChain c = chain.planned(cps.back());
    const auto means = cesaro_means(
        cps, 2 * f.dim(),
        [&](std::size_t n, std::span<double> out) { detail::write_interleaved(entangled_term(c, n, f), out); }, opt);
    CesaroSeries<FunctionVector> s;
    for (std::size_t i = 0; i < cps.size(); ++i) s.push(cps[i], detail::read_interleaved(f.basis(), means[i]));
    return s;
}

/// Running means of the pointwise modulus |entangled_term(n)(x)| on a grid.
/// Spectral terms are sampled at G_eval points (default 4(2M+1)).
inline CesaroSeries<FunctionVector> cesaro_abs_average(const EntangledChain& chain, const FunctionVector& f,
                                                       std::size_t N, std::vector<std::size_t> checkpoints = {},
                                                       std::size_t G_eval = 0, const EngineOptions& opt = {}) {
    require_same_basis(chain.basis(), f.basis(), "cesaro_abs_average");
    const Basis grid = detail::abs_grid(f.basis(), G_eval);
    const auto cps = resolve_checkpoints(N, std::move(checkpoints));
    const EntangledChain c = chain.planned(cps.back());
    const bool spectral = f.basis().is_spectral();
    const auto means = cesaro_means(
        cps, grid.dim(),
        [&](std::size_t n, std::span<double> out) {
            const FunctionVector t = entangled_term(c, n, f);
            const FunctionVector s = spectral ? to_spatial(t, grid.points()) : t;
            for (std::size_t i = 0; i < s.dim(); ++i) out[i] = std::abs(s[i]);
        },
        opt);
    CesaroSeries<FunctionVector> s;
    for (std::size_t i = 0; i < cps.size(); ++i) s.push(cps[i], detail::read_real(grid, means[i]));
    return s;
}

/// A scalar weight sequence a_1..a_N.
struct WeightSequence {
    enum class Kind { Bohr, Extracted };
    Kind kind = Kind::Extracted;
    /// Bohr frequencies gamma_k = exp(2 pi i theta_k) and amplitudes q_k.
    std::vector<Angle> frequencies;
    std::vector<cplx> amplitudes;
    /// values[n - 1] = a_n.
    std::vector<cplx> values;

    std::size_t horizon() const { return values.size(); }
    cplx at(std::size_t n) const { return values.at(n - 1); }
};

inline constexpr double unimodular_tol = 1e-12;

/// a_n = sum_k q_k gamma_k^n from exact angles.
inline WeightSequence bohr_weight(const std::vector<Angle>& thetas, const std::vector<cplx>& qs, std::size_t N) {
    if (thetas.size() != qs.size()) throw DimensionError("bohr_weight: gammas and qs differ in length");
    WeightSequence w;
    w.kind = WeightSequence::Kind::Bohr;
    w.frequencies = thetas;
    w.amplitudes = qs;
    w.values.resize(N);
    for (std::size_t n = 1; n <= N; ++n) {
        cplx s = 0.0;
        for (std::size_t k = 0; k < thetas.size(); ++k) s += qs[k] * thetas[k].unit_power(static_cast<std::int64_t>(n));
        w.values[n - 1] = s;
    }
    return w;
}

/// Angle of a unimodular complex number, in turns.
inline Angle angle_of(cplx gamma) {
    if (std::abs(std::abs(gamma) - 1.0) > unimodular_tol)
        throw NonUnimodularGamma("bohr_weight: |gamma| = " + csv::format(std::abs(gamma)) + " is not 1");
    if (gamma == cplx(1.0, 0.0)) return Angle::rational(0, 1);
    if (gamma == cplx(-1.0, 0.0)) return Angle::rational(1, 2);
    return Angle::from_turns(static_cast<long double>(std::arg(gamma)) / (2.0L * std::numbers::pi_v<long double>));
}

inline WeightSequence bohr_weight(const std::vector<cplx>& gammas, const std::vector<cplx>& qs, std::size_t N) {
    std::vector<Angle> thetas;
    thetas.reserve(gammas.size());
    for (const auto& g : gammas) thetas.push_back(angle_of(g));
    return bohr_weight(thetas, qs, N);
}

/// Running means (1/N') sum_{n <= N'} a_n T^n f.
inline CesaroSeries<FunctionVector> weighted_average(const Operator& T, const FunctionVector& f,
                                                     const WeightSequence& w, std::size_t N,
                                                     std::vector<std::size_t> checkpoints = {},
                                                     const EngineOptions& opt = {}) {
    detail::require_basis(T, f, "weighted_average");
    if (w.horizon() < N) throw DomainError("weighted_average: weight sequence shorter than N");
    const auto cps = resolve_checkpoints(N, std::move(checkpoints));
    const Operator P = T.with_power_plan(cps.back());
    const auto means = cesaro_means(
        cps, 2 * f.dim(),
        [&](std::size_t n, std::span<double> out) {
            detail::write_interleaved(w.at(n) * power_apply(P, n, f), out);
        },
        opt);
    CesaroSeries<FunctionVector> s;
    for (std::size_t i = 0; i < cps.size(); ++i) s.push(cps[i], detail::read_interleaved(f.basis(), means[i]));
    return s;
}

struct LambdaExtraction {
    std::vector<WeightSequence> sequences;
    double max_modulus = 0.0;
    /// ||f||_2 * ||A||_2 * max_j ||phi_j||_2.
    double bound = 0.0;
    bool within_bound = true;
};

/// lambda_{j,n} = <A T^n f, phi_j> for n = 1..N. For T contractive on L2 every
/// value is bounded by ||f|| ||A|| ||phi_j||.
inline LambdaExtraction extract_lambda_sequence(const Operator& A, const Operator& T, const FunctionVector& f,
                                                const std::vector<FunctionVector>& functionals, std::size_t N) {
    detail::require_basis(T, f, "extract_lambda_sequence");
    detail::require_basis(A, f, "extract_lambda_sequence");
    for (const auto& phi : functionals) require_same_basis(f.basis(), phi.basis(), "extract_lambda_sequence");
    LambdaExtraction r;
    double phi_max = 0.0;
    for (const auto& phi : functionals) phi_max = std::max(phi_max, norm(phi, Norm::L2));
    r.bound = norm(f, Norm::L2) * operator_norm_l2(A) * phi_max;
    r.sequences.resize(functionals.size());
    for (auto& s : r.sequences) s.values.reserve(N);
    const Operator P = T.with_power_plan(N);
    for (std::size_t n = 1; n <= N; ++n) {
        const FunctionVector g = apply(A, power_apply(P, n, f));
        for (std::size_t j = 0; j < functionals.size(); ++j) {
            const cplx v = inner(g, functionals[j]);
            r.sequences[j].values.push_back(v);
            r.max_modulus = std::max(r.max_modulus, std::abs(v));
        }
    }
    r.within_bound = r.max_modulus <= r.bound + 1e-12;
    return r;
}

/// checkpoint,index,re,im with index = m (spectral) or g (grid).
inline void write_series_csv(std::ostream& os, const CesaroSeries<FunctionVector>& s) {
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

/// checkpoint,sup_value,l2_value.
inline void write_series_summary_csv(std::ostream& os, const CesaroSeries<FunctionVector>& s) {
    csv::Writer w(os);
    w.header({"checkpoint", "sup_value", "l2_value"});
    for (std::size_t k = 0; k < s.size(); ++k) w.row(s.checkpoints[k], sup_bound(s.values[k]), norm(s.values[k], Norm::L2));
}

} // namespace ergolab
