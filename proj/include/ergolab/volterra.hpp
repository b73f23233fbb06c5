#pragma once

// The Volterra operator (Vf)(x) = int_0^x f(t) dt on the truncated Fourier
// basis, split as V = V1 + V2 + V3 with
//   V1 f = c_0 * J            (J(x) = x, truncated to modes -M..M)
//   V2 f = -(1/2 pi i) sum_{m != 0} (c_m / m) e_0
//   V3 f =  (1/2 pi i) sum_{m != 0} (c_m / m) e_m
// together with the L-infinity certificates for the twisted compactness and
// joint boundedness hypotheses.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <ostream>
#include <vector>

#include "ergolab/core.hpp"
#include "ergolab/csv.hpp"
#include "ergolab/errors.hpp"
#include "ergolab/operators.hpp"
#include "ergolab/random.hpp"
#include "ergolab/summation.hpp"

namespace ergolab {

inline constexpr int max_volterra_power = 4;

struct VolterraParts {
    int cutoff;
    int power;
    Operator v1;
    Operator v2;
    /// V3^k: diagonal with (2 pi i m)^(-k) off mode 0.
    Operator v3;
    /// Every word of length k in {V1, V2, V3} except V3^k; each has rank <= 1.
    std::vector<Operator> cross_terms;
    /// ||J - J_M||_2 = (sum_{|m| > M} 1/(2 pi m)^2)^(1/2).
    double sawtooth_residual_l2;

    /// V^k restricted to the truncated space: sum of cross terms plus V3^k.
    Operator full() const {
        Matrix m = v3.matrix();
        for (const auto& t : cross_terms) m += t.matrix();
        return Operator::dense_spectral(cutoff, std::move(m));
    }
};

/// sum_{m >= M} 1/m^2 via the Euler-Maclaurin expansion; accurate to double
/// precision for M >= 10^4.
inline double inverse_square_tail_asymptotic(double M) {
    return 1.0 / M + 0.5 / (M * M) + 1.0 / (6.0 * M * M * M) - 1.0 / (30.0 * M * M * M * M * M);
}

/// Cut-off for the direct part of tail summations.
inline constexpr std::int64_t tail_direct_limit = 10'000'000;

/// One-sided tail sum_{m >= M} 1/m^2: direct summation up to 10^7 plus the
/// asymptotic remainder.
inline double inverse_square_tail(std::int64_t M) {
    if (M < 1) throw DomainError("inverse_square_tail: M must be >= 1");
    if (M >= tail_direct_limit) return inverse_square_tail_asymptotic(static_cast<double>(M));
    CompensatedScalar s;
    s.add(inverse_square_tail_asymptotic(static_cast<double>(tail_direct_limit)));
    for (std::int64_t m = tail_direct_limit - 1; m >= M; --m) {
        const double x = static_cast<double>(m);
        s.add(1.0 / (x * x));
    }
    return s.value();
}

inline VolterraParts build_volterra(int cutoff, int power) {
    if (cutoff < 1) throw DomainError("build_volterra: cutoff must be >= 1");
    if (power < 1 || power > max_volterra_power)
        throw DomainError("build_volterra: power must be in 1.." + std::to_string(max_volterra_power) +
                          " (cross-term count grows as 3^k)");
    const Basis b = Basis::spectral(cutoff);
    const auto d = static_cast<Eigen::Index>(b.dim());
    const auto zero = static_cast<Eigen::Index>(b.slot(0));
    const cplx two_pi_i(0.0, two_pi);

    Matrix m1 = Matrix::Zero(d, d);
    const auto saw = sawtooth_coefficients(cutoff);
    for (Eigen::Index i = 0; i < d; ++i) m1(i, zero) = saw[static_cast<std::size_t>(i)];

    Matrix m2 = Matrix::Zero(d, d);
    std::vector<cplx> mu3(b.dim());
    for (int m = -cutoff; m <= cutoff; ++m) {
        if (m == 0) continue;
        const auto s = static_cast<Eigen::Index>(b.slot(m));
        m2(zero, s) = -1.0 / (two_pi_i * static_cast<double>(m));
        mu3[b.slot(m)] = std::pow(two_pi_i * static_cast<double>(m), -power);
    }
    Operator v1 = Operator::dense_spectral(cutoff, m1);
    Operator v2 = Operator::dense_spectral(cutoff, m2);
    std::vector<cplx> mu_base(b.dim());
    for (int m = -cutoff; m <= cutoff; ++m)
        if (m != 0) mu_base[b.slot(m)] = 1.0 / (two_pi_i * static_cast<double>(m));
    const Matrix m3 = Operator::diagonal(cutoff, mu_base).matrix();

    // Words w_1 ... w_k read as the product W_{w_1} ... W_{w_k}.
    const Matrix* letters[3] = {&m1, &m2, &m3};
    std::vector<Operator> cross;
    std::size_t words = 1;
    for (int i = 0; i < power; ++i) words *= 3;
    for (std::size_t w = 0; w + 1 < words; ++w) {
        // The all-V3 word is index words-1 (every base-3 digit equal to 2).
        std::size_t code = w;
        Matrix prod = Matrix::Identity(d, d);
        for (int i = 0; i < power; ++i) {
            prod = prod * (*letters[code % 3]);
            code /= 3;
        }
        cross.push_back(Operator::dense_spectral(cutoff, std::move(prod)));
    }

    const double residual = std::sqrt(2.0 * inverse_square_tail(cutoff + 1)) / two_pi;
    return VolterraParts{cutoff, power, std::move(v1), std::move(v2), Operator::diagonal(cutoff, std::move(mu3)),
                         std::move(cross), residual};
}

struct A2Report {
    std::size_t trials = 0;
    /// max sup_bound(V2 f) / (||f||_2 / (2 sqrt 3)).
    double worst_ratio_l2 = 0.0;
    /// max sup_bound(V2 f) / (||f||_inf / (2 sqrt 3)), ||f||_inf sampled on the grid.
    double worst_ratio_linf = 0.0;
    /// max sup_bound(V2 f) over the (unit L2 norm) trial functions.
    double max_sup = 0.0;
    bool passed = false;
};

inline double a2_constant() { return 1.0 / (2.0 * std::sqrt(3.0)); }

/// Joint L-infinity boundedness of V2 over random unit-norm f.
inline A2Report a2_bound_check(const VolterraParts& parts, std::size_t trials, std::uint64_t seed = 0xa2ULL) {
    A2Report r;
    r.trials = trials;
    r.passed = true;
    Rng rng(seed, "a2_bound_check");
    const Basis b = Basis::spectral(parts.cutoff);
    const double c = a2_constant();
    for (std::size_t t = 0; t < trials; ++t) {
        auto f = FunctionVector::random(b, rng);
        f = (1.0 / norm(f, Norm::L2)) * f;
        const double l2 = norm(f, Norm::L2);
        const double linf = norm(to_spatial(f, oversampled_grid(parts.cutoff)), Norm::Linf);
        const double s = sup_bound(apply(parts.v2, f));
        r.max_sup = std::max(r.max_sup, s);
        r.worst_ratio_l2 = std::max(r.worst_ratio_l2, s / (l2 * c));
        r.worst_ratio_linf = std::max(r.worst_ratio_linf, s / (linf * c));
        if (s > l2 * c + 1e-12 || s > linf * c + 1e-12) r.passed = false;
    }
    return r;
}

struct CompactnessCertificate {
    double epsilon;
    std::int64_t m_min;
    /// sum_{|m| >= m_min} 1/m^2 (two-sided).
    double tail_sum;
    /// Two-sided tail at m_min - 1; NaN when m_min == 1.
    double tail_previous;
    /// (1/2 pi) sqrt(tail_sum): bound on ||P_R V3 f||_inf for ||f||_2 <= 1.
    double certified_bound;
};

/// Least M with sum_{|m| >= M} 1/m^2 < 4 pi^2 eps^2. The splitting
/// U = span{e_m : |m| < M}, R = span{e_m : |m| >= M} then keeps
/// ||P_R V3 f||_inf < eps for ||f||_2 <= 1.
inline CompactnessCertificate twisted_compactness_certificate(double epsilon, std::int64_t m_cap) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw DomainError("certificate: epsilon must be > 0");
    if (m_cap < 1) throw DomainError("certificate: M cap must be >= 1");
    const double threshold = 4.0 * std::numbers::pi * std::numbers::pi * epsilon * epsilon;
    auto two_sided = [](double one_sided) { return 2.0 * one_sided; };

    std::int64_t m_min = 0;
    double tail_at = 0.0, tail_before = std::numeric_limits<double>::quiet_NaN();
    if (two_sided(inverse_square_tail_asymptotic(static_cast<double>(tail_direct_limit))) >= threshold) {
        // Minimal M lies beyond the direct range: bisection on the asymptotic form.
        if (m_cap <= tail_direct_limit ||
            two_sided(inverse_square_tail_asymptotic(static_cast<double>(m_cap))) >= threshold)
            throw CapExceeded("certificate: minimal M exceeds the cap " + std::to_string(m_cap));
        std::int64_t lo = tail_direct_limit, hi = m_cap; // tail(lo) >= thr, tail(hi) < thr
        while (hi - lo > 1) {
            const std::int64_t mid = lo + (hi - lo) / 2;
            if (two_sided(inverse_square_tail_asymptotic(static_cast<double>(mid))) < threshold)
                hi = mid;
            else
                lo = mid;
        }
        m_min = hi;
        tail_at = two_sided(inverse_square_tail_asymptotic(static_cast<double>(hi)));
        tail_before = two_sided(inverse_square_tail_asymptotic(static_cast<double>(lo)));
    } else {
        // Sweep downward; the tail grows as m decreases, and the first m where
        // it reaches the threshold is m_min - 1.
        CompensatedScalar s;
        s.add(inverse_square_tail_asymptotic(static_cast<double>(tail_direct_limit)));
        m_min = 1;
        double previous = two_sided(s.value());
        for (std::int64_t m = tail_direct_limit - 1; m >= 1; --m) {
            const double x = static_cast<double>(m);
            s.add(1.0 / (x * x));
            const double t = two_sided(s.value());
            if (t >= threshold) {
                m_min = m + 1;
                tail_at = previous;
                tail_before = t;
                break;
            }
            previous = t;
        }
        if (m_min == 1) tail_at = previous;
        if (m_min > m_cap)
            throw CapExceeded("certificate: minimal M = " + std::to_string(m_min) + " exceeds the cap " +
                              std::to_string(m_cap));
    }
    return {epsilon, m_min, tail_at, tail_before, std::sqrt(tail_at) / two_pi};
}

/// P_R: drops the modes |m| < m_min.
inline FunctionVector project_remainder(const FunctionVector& f, std::int64_t m_min) {
    if (!f.basis().is_spectral()) throw DimensionError("project_remainder: spectral vector required");
    std::vector<cplx> c(f.data());
    const Basis& b = f.basis();
    for (int m = -b.cutoff(); m <= b.cutoff(); ++m)
        if (std::abs(static_cast<std::int64_t>(m)) < m_min) c[b.slot(m)] = 0.0;
    return FunctionVector(b, std::move(c));
}

struct CertificateCheck {
    std::size_t trials = 0;
    std::size_t violations = 0;
    /// max sup_bound(P_R V3^k T0^n f) / epsilon.
    double worst_ratio = 0.0;
    bool passed = false;
};

/// Randomised check of the certificate: f with ||f||_2 <= 1, n <= 1000, and a
/// random unitary-kind T0 (rotation or unimodular diagonal).
inline CertificateCheck verify_certificate(const CompactnessCertificate& cert, const VolterraParts& parts,
                                           std::size_t trials, std::uint64_t seed = 0xce47ULL) {
    CertificateCheck r;
    r.trials = trials;
    Rng rng(seed, "verify_certificate");
    const Basis b = Basis::spectral(parts.cutoff);
    for (std::size_t t = 0; t < trials; ++t) {
        auto f = FunctionVector::random(b, rng);
        const double radius = 1.0 - rng.uniform();
        f = (radius / norm(f, Norm::L2)) * f;
        const auto n = static_cast<std::uint64_t>(rng.integer(1, 1000));
        Operator T0 = Operator::identity(b);
        if (t % 2 == 0) {
            T0 = Operator::rotation(parts.cutoff, Angle::from_turns(rng.uniform()));
        } else {
            std::vector<cplx> mu(b.dim());
            for (auto& x : mu) x = rng.unimodular();
            T0 = Operator::diagonal(parts.cutoff, std::move(mu));
        }
        const auto g = project_remainder(apply(parts.v3, power_apply(T0, n, f)), cert.m_min);
        const double s = sup_bound(g);
        r.worst_ratio = std::max(r.worst_ratio, s / cert.epsilon);
        if (!(s < cert.epsilon)) ++r.violations;
    }
    r.passed = r.violations == 0;
    return r;
}

inline void write_certificate_csv(std::ostream& os, const CompactnessCertificate& c) {
    csv::Writer w(os);
    w.header({"epsilon", "M_min", "tail_sum", "certified_bound"});
    w.row(c.epsilon, c.m_min, c.tail_sum, c.certified_bound);
}

} // namespace ergolab
