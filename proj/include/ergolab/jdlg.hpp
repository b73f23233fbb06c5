#pragma once

// Reversible / stable splitting of a power-bounded operator (Jacobs-deLeeuw-
// Glicksberg) in finite dimension, plus the empirical class-N diagnostics
// that characterise the stable part.
//
// In finite dimension the reversible part is the span of eigenvectors with
// unimodular eigenvalues and the stable part is its spectral complement. The
// weak characterisation of the stable part, (1/N) sum |<T^n f, phi>| -> 0, is
// checked empirically by stability_curve.

#include <algorithm>
#include <limits>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "ergolab/core.hpp"
#include "ergolab/csv.hpp"
#include "ergolab/operators.hpp"
#include "ergolab/series.hpp"

namespace ergolab {

struct EigenPair {
    cplx lambda;
    FunctionVector vector;
};

struct JdlgDecomposition {
    Basis basis;
    std::vector<EigenPair> reversible_pairs;
    Operator reversible_projector;
    Operator stable_projector;
    double tol_unimodular;
    /// Condition number of the full eigenvector matrix (dense kinds), 1 for
    /// structured kinds.
    double eigenbasis_condition = 1.0;

    std::size_t reversible_dimension() const { return reversible_pairs.size(); }
    std::size_t stable_dimension() const { return basis.dim() - reversible_pairs.size(); }
};

inline constexpr double default_tol_unimodular = 1e-9;
/// Eigenvalues closer than this are treated as one eigenvalue of higher multiplicity.
inline constexpr double eigen_cluster_radius = 1e-7;
inline constexpr double max_eigenbasis_condition = 1e8;

namespace detail {

inline double condition_number(const Matrix& m) {
    if (m.size() == 0) return 1.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    const double smin = s(s.size() - 1);
    return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

/// Orthonormal basis of the k-dimensional (numerical) null space of A,
/// taken from the k smallest right singular vectors.
inline Matrix null_space(const Matrix& A, Eigen::Index k, double threshold, Eigen::Index& found) {
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    const Eigen::Index n = s.size();
    found = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (s(i) <= threshold) ++found;
    return svd.matrixV().rightCols(k);
}

struct Cluster {
    cplx lambda;
    Eigen::Index multiplicity;
};

inline std::vector<Cluster> cluster_eigenvalues(std::vector<cplx> values, double radius) {
    std::sort(values.begin(), values.end(), [](cplx a, cplx b) {
        return std::arg(a) < std::arg(b) || (std::arg(a) == std::arg(b) && std::abs(a) < std::abs(b));
    });
    std::vector<Cluster> out;
    std::vector<bool> used(values.size(), false);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (used[i]) continue;
        cplx sum = values[i];
        Eigen::Index count = 1;
        used[i] = true;
        for (std::size_t j = i + 1; j < values.size(); ++j) {
            if (!used[j] && std::abs(values[j] - values[i]) < radius) {
                used[j] = true;
                sum += values[j];
                ++count;
            }
        }
        out.push_back({sum / static_cast<double>(count), count});
    }
    return out;
}

inline JdlgDecomposition decompose_dense(const Operator& T, double tol) {
    const Basis b = T.basis();
    const Matrix A = T.matrix();
    const auto d = A.rows();
    Eigen::ComplexEigenSolver<Matrix> es(A, true);
    if (es.info() != Eigen::Success) throw IllConditionedEigenbasis("decompose: eigensolver did not converge");
    const Vector ev = es.eigenvalues();
    std::vector<cplx> unimodular;
    for (Eigen::Index i = 0; i < d; ++i) {
        const double r = std::abs(ev(i));
        if (r > 1.0 + tol)
            throw NotPowerBounded("decompose: eigenvalue of modulus " + csv::format(r) + " exceeds 1");
        if (std::abs(r - 1.0) < tol) unimodular.push_back(ev(i));
    }
    const double cond = condition_number(es.eigenvectors());

    const double scale = std::max(1.0, A.cwiseAbs().rowwise().sum().maxCoeff());
    const double null_threshold = 1e-8 * scale;
    const auto clusters = cluster_eigenvalues(unimodular, eigen_cluster_radius);

    Eigen::Index k_total = 0;
    for (const auto& c : clusters) k_total += c.multiplicity;
    Matrix right(d, k_total), left(d, k_total);
    std::vector<EigenPair> pairs;
    Eigen::Index col = 0;
    const Matrix I = Matrix::Identity(d, d);
    for (const auto& c : clusters) {
        Eigen::Index found_r = 0, found_l = 0;
        const Matrix R = null_space(A - c.lambda * I, c.multiplicity, null_threshold, found_r);
        const Matrix L = null_space(A.adjoint() - std::conj(c.lambda) * I, c.multiplicity, null_threshold, found_l);
        if (found_r < c.multiplicity || found_l < c.multiplicity)
            throw NotPowerBounded("decompose: Jordan block at unimodular eigenvalue " + csv::format(c.lambda.real()) +
                                  (c.lambda.imag() < 0 ? "" : "+") + csv::format(c.lambda.imag()) + "i");
        right.middleCols(col, c.multiplicity) = R;
        left.middleCols(col, c.multiplicity) = L;
        for (Eigen::Index j = 0; j < c.multiplicity; ++j) pairs.push_back({c.lambda, from_eigen(b, R.col(j))});
        col += c.multiplicity;
    }

    Matrix Pr = Matrix::Zero(d, d);
    if (k_total > 0) {
        const Matrix gram = left.adjoint() * right;
        if (condition_number(gram) > max_eigenbasis_condition)
            throw IllConditionedEigenbasis("decompose: unimodular eigenvectors are nearly dependent");
        Pr = right * gram.partialPivLu().solve(left.adjoint());
    }
    // A fully ill-conditioned eigenbasis is only fatal when the unimodular
    // part itself is ill-conditioned (checked above); defective stable blocks
    // are fine because the stable projector is I - P_r.
    Matrix Ps = I - Pr;
    JdlgDecomposition D{b, std::move(pairs), Operator::dense(b, std::move(Pr)), Operator::dense(b, std::move(Ps)), tol};
    D.eigenbasis_condition = cond;
    return D;
}

} // namespace detail

/// Splits the space of T into the reversible part (span of unimodular
/// eigenvectors) and the stable part (spectral complement).
inline JdlgDecomposition decompose(const Operator& T, double tol_unimodular = default_tol_unimodular) {
    const Basis b = T.basis();
    const cplx phase = T.phase().value();
    if (const auto* p = T.as_permutation()) {
        std::vector<EigenPair> pairs;
        for (const auto& cyc : p->cycles->cycles) {
            const auto L = static_cast<std::int64_t>(cyc.size());
            for (std::int64_t k = 0; k < L; ++k) {
                const Angle w = Angle::rational(k, L);
                std::vector<cplx> v(b.dim());
                for (std::size_t j = 0; j < cyc.size(); ++j) v[cyc[j]] = w.unit_power(static_cast<std::int64_t>(j));
                pairs.push_back({phase * w.value(), FunctionVector(b, std::move(v))});
            }
        }
        return {b, std::move(pairs), Operator::identity(b), Operator::zero(b), tol_unimodular};
    }
    if (const auto* d = T.as_diagonal()) {
        std::vector<EigenPair> pairs;
        std::vector<int> rev, st;
        for (int m = -d->cutoff; m <= d->cutoff; ++m) {
            const double r = std::abs(d->mu[b.slot(m)]);
            if (r > 1.0 + tol_unimodular) throw NotPowerBounded("decompose: multiplier exceeds 1 in modulus");
            if (std::abs(r - 1.0) < tol_unimodular) {
                rev.push_back(m);
                pairs.push_back({phase * d->mu[b.slot(m)], FunctionVector::mode(d->cutoff, m)});
            } else {
                st.push_back(m);
            }
        }
        return {b, std::move(pairs), Operator::mode_projector(d->cutoff, rev), Operator::mode_projector(d->cutoff, st),
                tol_unimodular};
    }
    return detail::decompose_dense(T, tol_unimodular);
}

inline FunctionVector project_reversible(const JdlgDecomposition& D, const FunctionVector& f) {
    return apply(D.reversible_projector, f);
}

inline FunctionVector project_stable(const JdlgDecomposition& D, const FunctionVector& f) {
    return apply(D.stable_projector, f);
}

/// Walks the orbit T f, T^2 f, ... Dense kinds step incrementally; structured
/// kinds jump straight to T^n f.
class OrbitCursor {
public:
    OrbitCursor(const Operator& T, FunctionVector f) : T_(T), f_(f), current_(std::move(f)) {}

    const FunctionVector& next() {
        ++n_;
        current_ = T_.is_dense() ? apply(T_, current_) : power_apply(T_, n_, f_);
        return current_;
    }

    std::uint64_t index() const { return n_; }

private:
    const Operator& T_;
    FunctionVector f_;
    FunctionVector current_;
    std::uint64_t n_ = 0;
};

/// a_n = <T^n f, phi>, n = 1..N.
inline std::vector<cplx> orbit_functional(const Operator& T, const FunctionVector& f, const FunctionVector& phi,
                                          std::size_t N) {
    detail::require_basis(T, f, "orbit_functional");
    require_same_basis(f.basis(), phi.basis(), "orbit_functional");
    std::vector<cplx> a;
    a.reserve(N);
    OrbitCursor orbit(T, f);
    for (std::size_t n = 1; n <= N; ++n) a.push_back(inner(orbit.next(), phi));
    return a;
}

/// Running means (1/N') sum_{n <= N'} |<T^n f, phi>| at each checkpoint.
inline CesaroSeries<double> stability_curve(const Operator& T, const FunctionVector& f, const FunctionVector& phi,
                                            std::size_t N, std::vector<std::size_t> checkpoints = {}) {
    const auto cps = resolve_checkpoints(N, std::move(checkpoints));
    const auto a = orbit_functional(T, f, phi, cps.back());
    CesaroSeries<double> series;
    CompensatedScalar acc;
    std::size_t next = 0;
    for (std::size_t n = 1; n <= cps.back(); ++n) {
        acc.add(std::abs(a[n - 1]));
        if (n == cps[next]) {
            series.push(n, acc.value() / static_cast<double>(n));
            ++next;
        }
    }
    return series;
}

/// Fraction of n <= N with |a_n| > delta.
inline double density_one_fraction(std::span<const double> magnitudes, double delta, std::size_t N) {
    N = std::min(N, magnitudes.size());
    if (N == 0) return 0.0;
    std::size_t above = 0;
    for (std::size_t n = 0; n < N; ++n)
        if (magnitudes[n] > delta) ++above;
    return static_cast<double>(above) / static_cast<double>(N);
}

inline double density_one_fraction(std::span<const cplx> values, double delta, std::size_t N) {
    std::vector<double> mags(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) mags[i] = std::abs(values[i]);
    return density_one_fraction(std::span<const double>(mags), delta, N);
}

/// CSV summary: one row per distinct reversible eigenvalue (re, im,
/// multiplicity) followed by a row carrying the stable dimension.
inline void write_decomposition_csv(std::ostream& os, const JdlgDecomposition& D) {
    csv::Writer w(os);
    w.header({"kind", "re", "im", "multiplicity"});
    std::vector<std::pair<cplx, std::size_t>> groups;
    for (const auto& p : D.reversible_pairs) {
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const auto& g) { return std::abs(g.first - p.lambda) < eigen_cluster_radius; });
        if (it == groups.end())
            groups.push_back({p.lambda, 1});
        else
            ++it->second;
    }
    for (const auto& [lambda, mult] : groups) w.row("reversible", lambda.real(), lambda.imag(), mult);
    w.row("stable", "", "", D.stable_dimension());
}

} // namespace ergolab
