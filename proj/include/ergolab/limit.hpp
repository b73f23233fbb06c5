#pragma once

// Predicted limits of entangled averages on the reversible part:
//   sum over (lambda_0, ..., lambda_a) with lambda_0 ... lambda_a = 1 of
//   P^(a)_{lambda_a} A_{a-1} ... A_0 P^(0)_{lambda_0} f,
// where P^(j)_lambda is the spectral projector of T_j onto its lambda-eigenspace.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "ergolab/angle.hpp"
#include "ergolab/core.hpp"
#include "ergolab/csv.hpp"
#include "ergolab/entangle.hpp"
#include "ergolab/errors.hpp"
#include "ergolab/jdlg.hpp"
#include "ergolab/operators.hpp"
#include "ergolab/series.hpp"

namespace ergolab {

/// lambda = exp(2 pi i (r + m beta)) for a rational r and a shared irrational
/// base beta (m = 0 when no base is involved).
struct LatticeTag {
    Angle rational_part;
    std::int64_t multiple = 0;
};

struct SpectralEntry {
    cplx lambda;
    Operator projector;
    std::size_t rank;
    std::optional<LatticeTag> tag;
};

struct PointSpectrum {
    std::vector<SpectralEntry> entries;
    /// Irrational base angle of the lattice tags, when one is involved.
    std::optional<Angle> base;
    /// True when every entry carries a lattice tag.
    bool lattice = false;

    std::size_t size() const { return entries.size(); }
};

inline constexpr double default_tol_sep = 1e-6;

namespace detail {

inline bool tag_less(const LatticeTag& a, const LatticeTag& b) {
    return std::make_tuple(a.rational_part.denominator(), a.rational_part.numerator(), a.multiple) <
           std::make_tuple(b.rational_part.denominator(), b.rational_part.numerator(), b.multiple);
}

inline bool tag_equal(const LatticeTag& a, const LatticeTag& b) {
    return a.rational_part == b.rational_part && a.multiple == b.multiple;
}

/// Applies the operator's phase to structural lattice tags. Returns false when
/// the combination leaves the single-base lattice.
inline bool apply_phase(const Angle& phase, std::vector<LatticeTag>& tags, std::optional<Angle>& base) {
    if (phase.is_zero()) return true;
    if (phase.is_rational()) {
        for (auto& t : tags) t.rational_part = t.rational_part + phase;
        return true;
    }
    if (base && !(*base == phase)) return false;
    base = phase;
    for (auto& t : tags) t.multiple += 1;
    return true;
}

inline Matrix orthogonal_projector(const std::vector<const FunctionVector*>& vs, Eigen::Index d) {
    Matrix P = Matrix::Zero(d, d);
    for (const auto* v : vs) {
        const Vector x = to_eigen(*v);
        P += x * x.adjoint() / x.squaredNorm();
    }
    return P;
}

inline void check_separation(const std::vector<cplx>& lambdas, double tol_sep) {
    for (std::size_t i = 0; i < lambdas.size(); ++i)
        for (std::size_t j = i + 1; j < lambdas.size(); ++j) {
            const double d = std::abs(lambdas[i] - lambdas[j]);
            if (d >= tol_sep && d < 10.0 * tol_sep)
                throw ClusterAmbiguity("point_spectrum: eigenvalues " + csv::format(std::arg(lambdas[i])) + " and " +
                                       csv::format(std::arg(lambdas[j])) + " (arg) are " + csv::format(d) +
                                       " apart, between tol_sep and 10 tol_sep");
        }
}

} // namespace detail

/// Groups the reversible eigenpairs of T by eigenvalue and builds the
/// spectral projector of each group.
inline PointSpectrum point_spectrum(const Operator& T, const JdlgDecomposition& D, double tol_sep = default_tol_sep) {
    const Basis b = T.basis();
    const auto d = static_cast<Eigen::Index>(b.dim());
    PointSpectrum S;

    if (const auto* diag = T.as_diagonal()) {
        // Unimodular modes; group exactly for rotations, numerically otherwise.
        std::vector<int> modes;
        for (int m = -diag->cutoff; m <= diag->cutoff; ++m)
            if (std::abs(std::abs(diag->mu[b.slot(m)]) - 1.0) < D.tol_unimodular) modes.push_back(m);
        const cplx phase = T.phase().value();
        if (diag->rotation) {
            std::optional<Angle> base;
            std::vector<LatticeTag> tags;
            const Angle& alpha = *diag->rotation;
            if (!alpha.is_rational()) base = alpha;
            for (int m : modes)
                tags.push_back(alpha.is_rational() ? LatticeTag{alpha.times(m), 0} : LatticeTag{Angle::rational(0, 1), m});
            if (detail::apply_phase(T.phase(), tags, base)) {
                std::vector<std::size_t> order(modes.size());
                for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                std::stable_sort(order.begin(), order.end(),
                                 [&](std::size_t x, std::size_t y) { return detail::tag_less(tags[x], tags[y]); });
                for (std::size_t i = 0; i < order.size();) {
                    std::size_t j = i;
                    std::vector<int> group;
                    while (j < order.size() && detail::tag_equal(tags[order[i]], tags[order[j]]))
                        group.push_back(modes[order[j++]]);
                    const int m0 = group.front();
                    S.entries.push_back({phase * diag->mu[b.slot(m0)], Operator::mode_projector(diag->cutoff, group),
                                         group.size(), tags[order[i]]});
                    i = j;
                }
                S.base = base;
                S.lattice = true;
                return S;
            }
        }
        std::vector<cplx> lambdas;
        for (int m : modes) lambdas.push_back(phase * diag->mu[b.slot(m)]);
        detail::check_separation(lambdas, tol_sep);
        std::vector<bool> used(modes.size(), false);
        for (std::size_t i = 0; i < modes.size(); ++i) {
            if (used[i]) continue;
            std::vector<int> group{modes[i]};
            for (std::size_t j = i + 1; j < modes.size(); ++j)
                if (!used[j] && std::abs(lambdas[j] - lambdas[i]) < tol_sep) {
                    used[j] = true;
                    group.push_back(modes[j]);
                }
            S.entries.push_back({lambdas[i], Operator::mode_projector(diag->cutoff, group), group.size(), std::nullopt});
        }
        return S;
    }

    if (const auto* p = T.as_permutation()) {
        // Eigenvalue exp(2 pi i k/L) on each L-cycle; reduced k/L is an exact tag.
        std::vector<LatticeTag> tags;
        std::vector<const FunctionVector*> vecs;
        std::size_t idx = 0;
        for (const auto& cyc : p->cycles->cycles) {
            const auto L = static_cast<std::int64_t>(cyc.size());
            for (std::int64_t k = 0; k < L; ++k, ++idx) {
                tags.push_back({Angle::rational(k, L), 0});
                vecs.push_back(&D.reversible_pairs.at(idx).vector);
            }
        }
        std::optional<Angle> base;
        const bool lattice = detail::apply_phase(T.phase(), tags, base);
        std::vector<std::size_t> order(tags.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        if (lattice)
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t x, std::size_t y) { return detail::tag_less(tags[x], tags[y]); });
        for (std::size_t i = 0; i < order.size();) {
            std::size_t j = i;
            std::vector<const FunctionVector*> group;
            while (j < order.size() && (lattice ? detail::tag_equal(tags[order[i]], tags[order[j]])
                                                : std::abs(D.reversible_pairs[order[j]].lambda -
                                                           D.reversible_pairs[order[i]].lambda) < tol_sep))
                group.push_back(vecs[order[j++]]);
            S.entries.push_back({D.reversible_pairs[order[i]].lambda,
                                 Operator::dense(b, detail::orthogonal_projector(group, d)), group.size(),
                                 lattice ? std::optional<LatticeTag>(tags[order[i]]) : std::nullopt});
            i = j;
        }
        S.base = base;
        S.lattice = lattice;
        return S;
    }

    // Dense: P_lambda = R_S W_S with W = R^+ P_r the dual rows of the reversible basis.
    const auto k = static_cast<Eigen::Index>(D.reversible_pairs.size());
    if (k == 0) return S;
    Matrix R(d, k);
    for (Eigen::Index j = 0; j < k; ++j) R.col(j) = detail::to_eigen(D.reversible_pairs[static_cast<std::size_t>(j)].vector);
    const Matrix W = R.completeOrthogonalDecomposition().pseudoInverse() * D.reversible_projector.matrix();
    std::vector<cplx> lambdas;
    for (const auto& pr : D.reversible_pairs) lambdas.push_back(pr.lambda);
    detail::check_separation(lambdas, tol_sep);
    std::vector<bool> used(lambdas.size(), false);
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (used[i]) continue;
        Matrix P = Matrix::Zero(d, d);
        std::size_t rank = 0;
        for (std::size_t j = i; j < lambdas.size(); ++j)
            if (!used[j] && std::abs(lambdas[j] - lambdas[i]) < tol_sep) {
                used[j] = true;
                const auto jj = static_cast<Eigen::Index>(j);
                P += R.col(jj) * W.row(jj);
                ++rank;
            }
        S.entries.push_back({lambdas[i], Operator::dense(b, std::move(P)), rank, std::nullopt});
    }
    return S;
}

inline PointSpectrum point_spectrum(const Operator& T, double tol_sep = default_tol_sep) {
    return point_spectrum(T, decompose(T), tol_sep);
}

/// max |(1/N) sum_{n<=N} (conj(lambda) T)^n f - P_lambda f| over the entries,
/// for a given probe f (the averaging definition of the projectors).
inline double averaging_discrepancy(const Operator& T, const PointSpectrum& S, const FunctionVector& f,
                                    std::size_t N = 10'000) {
    const Operator planned = T.with_power_plan(N);
    double worst = 0.0;
    for (const auto& e : S.entries) {
        CompensatedVector acc(2 * f.dim());
        std::vector<double> buf(2 * f.dim());
        const cplx lc = std::conj(e.lambda);
        for (std::size_t n = 1; n <= N; ++n) {
            const cplx w = std::pow(lc, static_cast<double>(n));
            detail::write_interleaved(w * power_apply(planned, n, f), buf);
            acc.add(buf);
        }
        const auto avg = detail::read_interleaved(f.basis(), acc.divided_value(static_cast<double>(N)));
        worst = std::max(worst, avg.max_abs_diff(apply(e.projector, f)));
    }
    return worst;
}

enum class MatchMode { ExactLattice, Numeric };

struct ResonanceSet {
    /// Each tuple holds one entry index per spectrum.
    std::vector<std::vector<std::size_t>> tuples;
    MatchMode mode = MatchMode::Numeric;
    double tol_match = 1e-9;
};

inline constexpr double default_tol_match = 1e-9;
inline constexpr std::size_t max_candidate_tuples = 10'000'000;

namespace detail {

struct Partial {
    std::vector<std::size_t> idx;
    cplx product;
    Angle rational_sum;
    std::int64_t multiple_sum = 0;
};

inline std::vector<Partial> enumerate_half(const std::vector<PointSpectrum>& spectra, std::size_t from, std::size_t to) {
    std::size_t count = 1;
    for (std::size_t j = from; j < to; ++j) {
        const std::size_t s = spectra[j].size();
        if (s != 0 && count > max_candidate_tuples / s)
            throw SizeError("resonant_tuples: more than " + std::to_string(max_candidate_tuples) +
                            " candidate partial tuples");
        count *= s;
    }
    std::vector<Partial> out{Partial{{}, 1.0, Angle::rational(0, 1), 0}};
    for (std::size_t j = from; j < to; ++j) {
        std::vector<Partial> next;
        next.reserve(out.size() * spectra[j].size());
        for (const auto& p : out)
            for (std::size_t e = 0; e < spectra[j].size(); ++e) {
                const auto& entry = spectra[j].entries[e];
                Partial q = p;
                q.idx.push_back(e);
                q.product *= entry.lambda;
                if (entry.tag) {
                    q.rational_sum = q.rational_sum + entry.tag->rational_part;
                    q.multiple_sum += entry.tag->multiple;
                }
                next.push_back(std::move(q));
            }
        out = std::move(next);
    }
    return out;
}

inline bool exact_mode_available(const std::vector<PointSpectrum>& spectra) {
    std::optional<Angle> base;
    for (const auto& s : spectra) {
        if (!s.lattice) return false;
        if (s.base) {
            if (base && !(*base == *s.base)) return false;
            base = s.base;
        }
    }
    return true;
}

inline double turns_of(cplx z) {
    double t = std::arg(z) / two_pi;
    if (t < 0.0) t += 1.0;
    if (t >= 1.0) t -= 1.0;
    return t;
}

} // namespace detail

/// All tuples (one eigenvalue per spectrum) whose product is 1. Exact lattice
/// arithmetic is used whenever every spectrum is tagged over rationals and at
/// most one shared irrational base; otherwise products are matched
/// numerically (meet in the middle on the product angle).
inline ResonanceSet resonant_tuples(const std::vector<PointSpectrum>& spectra, double tol_match = default_tol_match) {
    if (spectra.empty()) throw DomainError("resonant_tuples: need at least one spectrum");
    ResonanceSet R;
    R.tol_match = tol_match;
    const std::size_t h = spectra.size() / 2;
    const auto left = detail::enumerate_half(spectra, 0, h);
    const auto right = detail::enumerate_half(spectra, h, spectra.size());
    auto emit = [&](const detail::Partial& l, const detail::Partial& r) {
        if (R.tuples.size() >= max_candidate_tuples)
            throw SizeError("resonant_tuples: more than " + std::to_string(max_candidate_tuples) + " tuples");
        std::vector<std::size_t> t = l.idx;
        t.insert(t.end(), r.idx.begin(), r.idx.end());
        R.tuples.push_back(std::move(t));
    };

    if (detail::exact_mode_available(spectra)) {
        R.mode = MatchMode::ExactLattice;
        // Key: (rational numerator, denominator, multiple) of the right half;
        // a left partial matches when the sums cancel exactly.
        std::map<std::tuple<u128, u128, std::int64_t>, std::vector<std::size_t>> index;
        for (std::size_t i = 0; i < right.size(); ++i) {
            const auto& r = right[i];
            index[{r.rational_sum.numerator(), r.rational_sum.denominator(), r.multiple_sum}].push_back(i);
        }
        for (const auto& l : left) {
            const Angle need = -l.rational_sum;
            const auto it = index.find({need.numerator(), need.denominator(), -l.multiple_sum});
            if (it == index.end()) continue;
            for (std::size_t i : it->second) emit(l, right[i]);
        }
    } else {
        R.mode = MatchMode::Numeric;
        // |prod - 1| ~ 2 pi |angle|, so search the right half by angle.
        std::vector<std::pair<double, std::size_t>> sorted;
        sorted.reserve(right.size());
        for (std::size_t i = 0; i < right.size(); ++i) sorted.push_back({detail::turns_of(right[i].product), i});
        std::sort(sorted.begin(), sorted.end());
        const double window = 20.0 * tol_match / two_pi + 1e-15;
        for (const auto& l : left) {
            double target = 1.0 - detail::turns_of(l.product);
            if (target >= 1.0) target -= 1.0;
            for (double shift : {-1.0, 0.0, 1.0}) {
                const double lo = target + shift - window, hi = target + shift + window;
                auto it = std::lower_bound(sorted.begin(), sorted.end(), std::make_pair(lo, std::size_t{0}));
                for (; it != sorted.end() && it->first <= hi; ++it) {
                    const auto& r = right[it->second];
                    const double miss = std::abs(l.product * r.product - 1.0);
                    if (miss < tol_match)
                        emit(l, r);
                    else if (miss < 10.0 * tol_match)
                        throw ToleranceOverlap("resonant_tuples: a product misses 1 by " + csv::format(miss) +
                                               ", within a factor 10 of tol_match");
                }
            }
        }
        std::sort(R.tuples.begin(), R.tuples.end());
        R.tuples.erase(std::unique(R.tuples.begin(), R.tuples.end()), R.tuples.end());
    }
    std::sort(R.tuples.begin(), R.tuples.end());
    return R;
}

/// Smallest |prod - 1| over non-resonant tuples (infinity if all resonate).
inline double resonance_gap(const std::vector<PointSpectrum>& spectra, const ResonanceSet& R) {
    const auto all = detail::enumerate_half(spectra, 0, spectra.size());
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& p : all) {
        if (std::binary_search(R.tuples.begin(), R.tuples.end(), p.idx)) continue;
        gap = std::min(gap, std::abs(p.product - 1.0));
    }
    return gap;
}

enum class LimitForm {
    /// Sum over (lambda_0..lambda_a), product 1, of P_a A_{a-1} ... A_0 P_0 f.
    WithT0,
    /// Literal printed form: sum over (lambda_1..lambda_a), product 1, of
    /// P_a A_{a-1} ... A_1 P_1 f (no A_0, no T_0 projection).
    AsPrinted,
};

struct LimitPrediction {
    FunctionVector value;
    /// True when f had a component outside the reversible part of T_0; that
    /// component was dropped before prediction.
    bool projected = false;
    double stable_component_l2 = 0.0;
    std::size_t tuple_count = 0;
    /// L2 norm of each tuple's contribution, aligned with the resonance set.
    std::vector<double> contributions;
};

/// Evaluates the limit formula. `spectra` holds one PointSpectrum per T_j
/// (T_0..T_a) and R must come from resonant_tuples over the spectra in use
/// (all of them for WithT0, spectra 1..a for AsPrinted).
inline LimitPrediction predict_limit(const EntangledChain& chain, const FunctionVector& f,
                                     const std::vector<PointSpectrum>& spectra, const ResonanceSet& R,
                                     LimitForm form = LimitForm::WithT0) {
    require_same_basis(chain.basis(), f.basis(), "predict_limit");
    const std::size_t a = chain.length();
    if (spectra.size() != a + 1) throw DimensionError("predict_limit: need one spectrum per T_j");
    const std::size_t first = form == LimitForm::WithT0 ? 0 : 1;
    const std::size_t width = a + 1 - first;

    // Reversible part of f with respect to T_0.
    FunctionVector rev = FunctionVector::zero(f.basis());
    for (const auto& e : spectra[0].entries) rev = rev + apply(e.projector, f);
    const double stable = norm(f - rev, Norm::L2);
    LimitPrediction out{FunctionVector::zero(f.basis()), stable > 1e-12, stable, R.tuples.size(), {}};
    const FunctionVector input = out.projected ? rev : f;

    if (form == LimitForm::AsPrinted && a == 0) {
        out.value = input;
        return out;
    }
    // Depth-first over the sorted tuples, reusing shared prefixes.
    std::vector<FunctionVector> stack;
    std::vector<std::size_t> prev;
    for (const auto& t : R.tuples) {
        if (t.size() != width) throw DimensionError("predict_limit: resonance tuples do not match the limit form");
        std::size_t common = 0;
        while (common < prev.size() && common < stack.size() && prev[common] == t[common]) ++common;
        while (stack.size() > common) stack.pop_back();
        for (std::size_t level = common; level < width; ++level) {
            const std::size_t j = first + level; // operator index
            FunctionVector g = level == 0 ? input : apply(chain.A()[j - 1], stack.back());
            g = apply(spectra[j].entries.at(t[level]).projector, g);
            stack.push_back(std::move(g));
        }
        out.contributions.push_back(norm(stack.back(), Norm::L2));
        out.value = out.value + stack.back();
        prev = t;
    }
    return out;
}

/// Convenience: spectra of every T_j, the resonance set for the chosen form,
/// and the prediction.
struct ChainPrediction {
    std::vector<PointSpectrum> spectra;
    ResonanceSet resonances;
    LimitPrediction prediction;
};

inline ChainPrediction predict_chain_limit(const EntangledChain& chain, const FunctionVector& f,
                                           LimitForm form = LimitForm::WithT0, double tol_sep = default_tol_sep,
                                           double tol_match = default_tol_match) {
    std::vector<PointSpectrum> spectra;
    for (const auto& T : chain.T()) spectra.push_back(point_spectrum(T, tol_sep));
    ResonanceSet R;
    if (form == LimitForm::WithT0)
        R = resonant_tuples(spectra, tol_match);
    else if (chain.length() > 0)
        R = resonant_tuples(std::vector<PointSpectrum>(spectra.begin() + 1, spectra.end()), tol_match);
    LimitPrediction p = predict_limit(chain, f, spectra, R, form);
    return ChainPrediction{std::move(spectra), std::move(R), std::move(p)};
}

/// Limit of (1/N) sum a_n T^n f for a Bohr weight a_n = sum_k q_k gamma_k^n:
/// sum_k q_k P_{conj(gamma_k)} f.
inline FunctionVector predict_weighted_limit(const PointSpectrum& S, const WeightSequence& w, const FunctionVector& f,
                                             double tol_match = default_tol_match) {
    if (w.kind != WeightSequence::Kind::Bohr) throw Unsupported("predict_weighted_limit: Bohr weights only");
    FunctionVector out = FunctionVector::zero(f.basis());
    for (std::size_t k = 0; k < w.frequencies.size(); ++k) {
        const cplx target = std::conj(w.frequencies[k].value());
        for (const auto& e : S.entries)
            if (std::abs(e.lambda - target) < tol_match) out = out + w.amplitudes[k] * apply(e.projector, f);
    }
    return out;
}

struct LimitComparison {
    std::vector<std::size_t> checkpoints;
    std::vector<double> sup_err;
    std::vector<double> l2_err;
    /// Least-squares slope of log(sup_err) against log(N) over checkpoints
    /// with nonzero error; NaN when fewer than two such points exist.
    double decay_exponent = std::numeric_limits<double>::quiet_NaN();
};

inline LimitComparison compare_limit(const FunctionVector& predicted, const CesaroSeries<FunctionVector>& series) {
    LimitComparison c;
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < series.size(); ++k) {
        const FunctionVector diff = series.values[k] - predicted;
        const double s = sup_bound(diff);
        c.checkpoints.push_back(series.checkpoints[k]);
        c.sup_err.push_back(s);
        c.l2_err.push_back(norm(diff, Norm::L2));
        if (s > 0.0) {
            xs.push_back(std::log(static_cast<double>(series.checkpoints[k])));
            ys.push_back(std::log(s));
        }
    }
    if (xs.size() >= 2) {
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            mx += xs[i];
            my += ys[i];
        }
        mx /= static_cast<double>(xs.size());
        my /= static_cast<double>(xs.size());
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxy += (xs[i] - mx) * (ys[i] - my);
            sxx += (xs[i] - mx) * (xs[i] - mx);
        }
        if (sxx > 0.0) c.decay_exponent = sxy / sxx;
    }
    return c;
}

inline void write_comparison_csv(std::ostream& os, const LimitComparison& c) {
    csv::Writer w(os);
    w.header({"checkpoint", "sup_err", "l2_err"});
    for (std::size_t k = 0; k < c.checkpoints.size(); ++k) w.row(c.checkpoints[k], c.sup_err[k], c.l2_err[k]);
}

/// One row per tuple: the eigenvalue angles (turns, '|'-separated), the exact
/// lattice form when available, and the L2 norm of the tuple's contribution.
inline void write_resonances_csv(std::ostream& os, const std::vector<PointSpectrum>& spectra, const ResonanceSet& R,
                                 const std::vector<double>& contributions) {
    csv::Writer w(os);
    w.header({"tuple", "angles", "lattice", "contribution_l2"});
    for (std::size_t i = 0; i < R.tuples.size(); ++i) {
        std::string angles, lattice;
        for (std::size_t j = 0; j < R.tuples[i].size(); ++j) {
            const auto& e = spectra[j].entries[R.tuples[i][j]];
            if (j > 0) {
                angles += '|';
                lattice += '|';
            }
            angles += csv::format(detail::turns_of(e.lambda));
            if (e.tag)
                lattice += e.tag->rational_part.to_string() + (e.tag->multiple != 0 ? "+" + std::to_string(e.tag->multiple) + "b" : "");
        }
        w.row(i, angles, lattice, i < contributions.size() ? contributions[i] : 0.0);
    }
}

} // namespace ergolab
