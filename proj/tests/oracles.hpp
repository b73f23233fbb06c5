#pragma once

// Independent reference computations used by the test suite. Nothing here
// calls into the library's numerical kernels.

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using cplx = std::complex<double>;

/// Naive O(G^2) forward transform: c_m = (1/G) sum_g v_g exp(-2 pi i m g / G).
inline std::vector<cplx> naive_dft(const std::vector<cplx>& values, int cutoff) {
    const auto G = static_cast<long double>(values.size());
    std::vector<cplx> c;
    for (int m = -cutoff; m <= cutoff; ++m) {
        std::complex<long double> s = 0;
        for (std::size_t g = 0; g < values.size(); ++g) {
            const long double t = -2.0L * std::numbers::pi_v<long double> * m * static_cast<long double>(g) / G;
            s += std::complex<long double>(values[g].real(), values[g].imag()) *
                 std::complex<long double>(std::cos(t), std::sin(t));
        }
        c.emplace_back(static_cast<double>(s.real() / G), static_cast<double>(s.imag() / G));
    }
    return c;
}

/// Direct synthesis sum_m c_m exp(2 pi i m x).
inline cplx synthesize(const std::vector<cplx>& c, int cutoff, double x) {
    std::complex<long double> s = 0;
    for (int m = -cutoff; m <= cutoff; ++m) {
        const long double t = 2.0L * std::numbers::pi_v<long double> * m * x;
        const cplx& a = c[static_cast<std::size_t>(m + cutoff)];
        s += std::complex<long double>(a.real(), a.imag()) * std::complex<long double>(std::cos(t), std::sin(t));
    }
    return {static_cast<double>(s.real()), static_cast<double>(s.imag())};
}

/// Composite Simpson rule on [a, b] with n (even) panels.
inline cplx simpson(const std::function<cplx(double)>& fn, double a, double b, int n) {
    if (n % 2) ++n;
    const double h = (b - a) / n;
    cplx s = fn(a) + fn(b);
    for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * fn(a + k * h);
    return s * (h / 3.0);
}

/// Composite trapezoid rule on [a, b] with n panels.
inline cplx trapezoid(const std::function<cplx(double)>& fn, double a, double b, int n) {
    const double h = (b - a) / n;
    cplx s = 0.5 * (fn(a) + fn(b));
    for (int k = 1; k < n; ++k) s += fn(a + k * h);
    return s * h;
}

/// Fourier coefficient int_0^1 u(x) exp(-2 pi i m x) dx by Simpson quadrature.
inline cplx fourier_coefficient(const std::function<cplx(double)>& u, int m, int panels = 20000) {
    return simpson(
        [&](double x) { return u(x) * std::exp(cplx(0.0, -2.0 * std::numbers::pi * m * x)); }, 0.0, 1.0, panels);
}

/// sum_{|m| >= M} 1/m^2 = 2 (zeta(2) - sum_{m < M} 1/m^2), extended precision.
inline long double two_sided_tail(std::int64_t M) {
    long double head = 0.0L;
    for (std::int64_t m = M - 1; m >= 1; --m) head += 1.0L / (static_cast<long double>(m) * static_cast<long double>(m));
    return 2.0L * (std::numbers::pi_v<long double> * std::numbers::pi_v<long double> / 6.0L - head);
}

/// Least M >= 1 with two_sided_tail(M) < 4 pi^2 eps^2, by upward scan.
inline std::int64_t minimal_cutoff(double eps, std::int64_t limit = 10'000'000) {
    const long double pi = std::numbers::pi_v<long double>;
    const long double threshold = 4.0L * pi * pi * static_cast<long double>(eps) * static_cast<long double>(eps);
    long double tail = 2.0L * pi * pi / 6.0L;
    for (std::int64_t M = 1; M <= limit; ++M) {
        if (tail < threshold) return M;
        tail -= 2.0L / (static_cast<long double>(M) * static_cast<long double>(M));
    }
    return -1;
}

/// A^n v by n repeated multiplications.
inline Eigen::VectorXcd repeated_apply(const Eigen::MatrixXcd& A, std::uint64_t n, Eigen::VectorXcd v) {
    for (std::uint64_t k = 0; k < n; ++k) v = A * v;
    return v;
}

/// Eigenvalues of A by an unsymmetric solver, independent of the library path.
inline std::vector<cplx> eigenvalues(const Eigen::MatrixXcd& A) {
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(A, false);
    std::vector<cplx> out(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    return out;
}

/// Dimension of ker(A - lambda I) by SVD rank deficiency.
inline int eigenspace_dimension(const Eigen::MatrixXcd& A, cplx lambda, double tol = 1e-9) {
    const Eigen::MatrixXcd B = A - lambda * Eigen::MatrixXcd::Identity(A.rows(), A.cols());
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(B);
    int k = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) < tol) ++k;
    return k;
}

/// Permutation matrix with (Pf)(g) = f(perm(g)).
inline Eigen::MatrixXcd permutation_matrix(const std::vector<std::size_t>& perm) {
    const auto G = static_cast<Eigen::Index>(perm.size());
    Eigen::MatrixXcd P = Eigen::MatrixXcd::Zero(G, G);
    for (Eigen::Index g = 0; g < G; ++g) P(g, static_cast<Eigen::Index>(perm[static_cast<std::size_t>(g)])) = 1.0;
    return P;
}

/// Fractional part of n * (sqrt(2) - 1), 20 significant digits.
inline constexpr long double frac_million_sqrt2_minus_1 = 0.56237309504880168872L;

} // namespace oracle
