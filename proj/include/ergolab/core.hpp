#pragma once

// Function-space substrate: coefficient vectors over a truncated Fourier basis
// on [0, 1) or over a uniform grid, and the conversions between them.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "ergolab/csv.hpp"
#include "ergolab/errors.hpp"
#include "ergolab/random.hpp"

namespace ergolab {

using cplx = std::complex<double>;

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Oversampling factor used when a spectral vector's L1 / L-infinity norm is
/// estimated on a grid.
inline constexpr std::size_t norm_oversampling = 4;

enum class BasisKind { SpectralFourier, SpatialGrid };

/// Either modes e_m(x) = exp(2 pi i m x), m = -M..M, or grid points x_g = g/G.
class Basis {
public:
    static Basis spectral(int cutoff) {
        if (cutoff < 0) throw DomainError("spectral basis: cutoff must be >= 0");
        return Basis(BasisKind::SpectralFourier, static_cast<std::size_t>(cutoff));
    }
    static Basis grid(std::size_t points) {
        if (points == 0) throw DomainError("grid basis: size must be >= 1");
        return Basis(BasisKind::SpatialGrid, points);
    }

    BasisKind kind() const { return kind_; }
    bool is_spectral() const { return kind_ == BasisKind::SpectralFourier; }
    bool is_grid() const { return kind_ == BasisKind::SpatialGrid; }

    /// Mode cutoff M; only meaningful for spectral bases.
    int cutoff() const { return static_cast<int>(param_); }
    /// Grid size G; only meaningful for grid bases.
    std::size_t points() const { return param_; }
    /// M for spectral, G for grid.
    std::size_t param() const { return param_; }

    std::size_t dim() const { return is_spectral() ? 2 * param_ + 1 : param_; }

    /// Storage index of mode m (spectral only).
    std::size_t slot(int m) const { return static_cast<std::size_t>(m + cutoff()); }
    int mode_at(std::size_t slot) const { return static_cast<int>(slot) - cutoff(); }

    std::string describe() const {
        return is_spectral() ? "spectral M=" + std::to_string(param_) : "grid G=" + std::to_string(param_);
    }

    friend bool operator==(const Basis&, const Basis&) = default;

private:
    Basis(BasisKind k, std::size_t p) : kind_(k), param_(p) {}
    BasisKind kind_;
    std::size_t param_;
};

inline void require_same_basis(const Basis& a, const Basis& b, const char* where) {
    if (!(a == b))
        throw DimensionError(std::string(where) + ": basis mismatch (" + a.describe() + " vs " + b.describe() + ")");
}

/// A function on [0, 1) given by its coefficients in a declared basis.
/// Immutable once built; all entries are finite.
class FunctionVector {
public:
    FunctionVector(Basis basis, std::vector<cplx> coeffs) : basis_(basis), coeffs_(std::move(coeffs)) {
        if (coeffs_.size() != basis_.dim())
            throw DimensionError("FunctionVector: " + std::to_string(coeffs_.size()) +
                                 " coefficients for " + basis_.describe());
        for (const auto& c : coeffs_)
            if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
                throw DomainError("FunctionVector: non-finite coefficient");
    }

    static FunctionVector zero(Basis b) { return FunctionVector(b, std::vector<cplx>(b.dim())); }

    /// The constant function 1.
    static FunctionVector constant(Basis b, cplx value = 1.0) {
        std::vector<cplx> c(b.dim());
        if (b.is_spectral())
            c[b.slot(0)] = value;
        else
            std::fill(c.begin(), c.end(), value);
        return FunctionVector(b, std::move(c));
    }

    /// The Fourier mode e_m, |m| <= M.
    static FunctionVector mode(int cutoff, int m) {
        if (std::abs(m) > cutoff) throw DomainError("mode: |m| exceeds cutoff");
        auto b = Basis::spectral(cutoff);
        std::vector<cplx> c(b.dim());
        c[b.slot(m)] = 1.0;
        return FunctionVector(b, std::move(c));
    }

    /// Indicator of one grid point.
    static FunctionVector indicator(std::size_t points, std::size_t g) {
        if (g >= points) throw DomainError("indicator: grid index out of range");
        std::vector<cplx> c(points);
        c[g] = 1.0;
        return FunctionVector(Basis::grid(points), std::move(c));
    }

    /// Real and imaginary parts of each coefficient uniform on [-1, 1).
    static FunctionVector random(Basis b, Rng& rng) {
        std::vector<cplx> c(b.dim());
        for (auto& x : c) x = rng.complex_box();
        return FunctionVector(b, std::move(c));
    }

    const Basis& basis() const { return basis_; }
    std::size_t dim() const { return coeffs_.size(); }
    std::span<const cplx> coeffs() const { return coeffs_; }
    const std::vector<cplx>& data() const { return coeffs_; }
    cplx operator[](std::size_t i) const { return coeffs_[i]; }

    /// Coefficient of mode m (spectral only); zero outside the cutoff.
    cplx coeff(int m) const {
        if (!basis_.is_spectral()) throw DimensionError("coeff(m): not a spectral vector");
        if (std::abs(m) > basis_.cutoff()) return 0.0;
        return coeffs_[basis_.slot(m)];
    }

    FunctionVector operator+(const FunctionVector& o) const {
        require_same_basis(basis_, o.basis_, "operator+");
        std::vector<cplx> c(coeffs_);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] += o.coeffs_[i];
        return FunctionVector(basis_, std::move(c));
    }

    FunctionVector operator-(const FunctionVector& o) const {
        require_same_basis(basis_, o.basis_, "operator-");
        std::vector<cplx> c(coeffs_);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] -= o.coeffs_[i];
        return FunctionVector(basis_, std::move(c));
    }

    friend FunctionVector operator*(cplx s, const FunctionVector& f) {
        std::vector<cplx> c(f.coeffs_);
        for (auto& x : c) x *= s;
        return FunctionVector(f.basis_, std::move(c));
    }

    /// Max |difference| over coefficients.
    double max_abs_diff(const FunctionVector& o) const {
        require_same_basis(basis_, o.basis_, "max_abs_diff");
        double d = 0.0;
        for (std::size_t i = 0; i < coeffs_.size(); ++i) d = std::max(d, std::abs(coeffs_[i] - o.coeffs_[i]));
        return d;
    }

private:
    Basis basis_;
    std::vector<cplx> coeffs_;
};

/// Value of f at x in [0, 1). Grid vectors only accept grid points.
inline cplx evaluate(const FunctionVector& f, double x) {
    if (!(x >= 0.0 && x < 1.0)) throw DomainError("evaluate: x must lie in [0, 1)");
    const Basis& b = f.basis();
    if (b.is_spectral()) {
        cplx sum = 0.0;
        for (int m = -b.cutoff(); m <= b.cutoff(); ++m) {
            // Reduce m*x mod 1 before the trig call.
            const double t = std::fmod(static_cast<double>(m) * x, 1.0);
            sum += f.coeff(m) * std::polar(1.0, two_pi * t);
        }
        return sum;
    }
    const double scaled = x * static_cast<double>(b.points());
    const double nearest = std::round(scaled);
    if (std::abs(scaled - nearest) > 1e-9)
        throw OffGridError("evaluate: x = " + csv::format(x) + " is not a point of the grid of size " +
                           std::to_string(b.points()));
    return f[static_cast<std::size_t>(nearest) % b.points()];
}

/// Grid samples f(g/G), g = 0..G-1. Exact for every G (modes fold mod G).
inline FunctionVector to_spatial(const FunctionVector& f, std::size_t points) {
    if (!f.basis().is_spectral()) throw DimensionError("to_spatial: input is not spectral");
    if (points == 0) throw DomainError("to_spatial: grid size must be >= 1");
    const int cutoff = f.basis().cutoff();
    const auto G = static_cast<std::int64_t>(points);
    std::vector<cplx> folded(points);
    for (int m = -cutoff; m <= cutoff; ++m) {
        const auto k = static_cast<std::size_t>(((m % G) + G) % G);
        folded[k] += f.coeff(m);
    }
    if (points == 1) return FunctionVector(Basis::grid(1), std::move(folded));
    std::vector<cplx> values(points);
    thread_local Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::Unscaled);
    fft.inv(values, folded);
    return FunctionVector(Basis::grid(points), std::move(values));
}

/// Discrete Fourier coefficients c_m = (1/G) sum_g v_g exp(-2 pi i m g / G),
/// m = -M..M, with no check that G resolves the modes.
inline FunctionVector to_spectral_lossy(const FunctionVector& g, int cutoff) {
    if (!g.basis().is_grid()) throw DimensionError("to_spectral: input is not a grid vector");
    if (cutoff < 0) throw DomainError("to_spectral: cutoff must be >= 0");
    const std::size_t points = g.basis().points();
    std::vector<cplx> spectrum(points);
    if (points == 1) {
        spectrum[0] = g[0];
    } else {
        thread_local Eigen::FFT<double> fft;
        fft.fwd(spectrum, g.data());
    }
    const auto G = static_cast<std::int64_t>(points);
    auto b = Basis::spectral(cutoff);
    std::vector<cplx> c(b.dim());
    const double inv = 1.0 / static_cast<double>(points);
    for (int m = -cutoff; m <= cutoff; ++m) {
        const auto k = static_cast<std::size_t>(((m % G) + G) % G);
        c[b.slot(m)] = spectrum[k] * inv;
    }
    return FunctionVector(b, std::move(c));
}

/// Inverse of to_spatial; requires G >= 2M+1 so the round trip is lossless.
inline FunctionVector to_spectral(const FunctionVector& g, int cutoff) {
    if (g.basis().is_grid() && g.basis().points() < 2 * static_cast<std::size_t>(std::max(cutoff, 0)) + 1)
        throw AliasingError("to_spectral: grid of size " + std::to_string(g.basis().points()) +
                            " cannot resolve modes up to " + std::to_string(cutoff) +
                            " (use to_spectral_lossy)");
    return to_spectral_lossy(g, cutoff);
}

/// Default evaluation grid for a spectral cutoff M: oversampling * (2M+1).
inline std::size_t oversampled_grid(int cutoff) {
    return norm_oversampling * (2 * static_cast<std::size_t>(cutoff) + 1);
}

enum class Norm { L1, L2, Linf };

/// L^p norm with respect to Lebesgue measure on [0, 1). For spectral vectors
/// L2 is exact (Parseval); L1 and Linf are estimated on the oversampled grid.
inline double norm(const FunctionVector& f, Norm p) {
    if (f.basis().is_spectral()) {
        if (p == Norm::L2) {
            double s = 0.0;
            for (const auto& c : f.coeffs()) s += std::norm(c);
            return std::sqrt(s);
        }
        return norm(to_spatial(f, oversampled_grid(f.basis().cutoff())), p);
    }
    const auto v = f.coeffs();
    const double inv = 1.0 / static_cast<double>(v.size());
    switch (p) {
    case Norm::L1: {
        double s = 0.0;
        for (const auto& c : v) s += std::abs(c);
        return s * inv;
    }
    case Norm::L2: {
        double s = 0.0;
        for (const auto& c : v) s += std::norm(c);
        return std::sqrt(s * inv);
    }
    case Norm::Linf: {
        double s = 0.0;
        for (const auto& c : v) s = std::max(s, std::abs(c));
        return s;
    }
    }
    return 0.0;
}

/// Certified upper bound on the sup norm: sum |c_m| for spectral vectors,
/// the exact max for grid vectors.
inline double sup_bound(const FunctionVector& f) {
    if (f.basis().is_grid()) return norm(f, Norm::Linf);
    double s = 0.0;
    for (const auto& c : f.coeffs()) s += std::abs(c);
    return s;
}

/// L2 inner product <u, v> = integral of u * conj(v); grid vectors use the
/// uniform probability measure on the grid.
inline cplx inner(const FunctionVector& u, const FunctionVector& v) {
    require_same_basis(u.basis(), v.basis(), "inner");
    cplx s = 0.0;
    for (std::size_t i = 0; i < u.dim(); ++i) s += u[i] * std::conj(v[i]);
    if (u.basis().is_grid()) s /= static_cast<double>(u.dim());
    return s;
}

/// Mean value (the e_0 coefficient, or the grid average).
inline cplx mean(const FunctionVector& f) {
    if (f.basis().is_spectral()) return f.coeff(0);
    cplx s = 0.0;
    for (const auto& c : f.coeffs()) s += c;
    return s / static_cast<double>(f.dim());
}

/// Pointwise modulus of a grid vector.
inline FunctionVector abs(const FunctionVector& f) {
    if (!f.basis().is_grid()) throw DimensionError("abs: pointwise modulus needs a grid vector");
    std::vector<cplx> c(f.dim());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::abs(f[i]);
    return FunctionVector(f.basis(), std::move(c));
}

/// Truncated Fourier series of J(x) = x: c_0 = 1/2, c_m = i / (2 pi m).
inline FunctionVector sawtooth_coefficients(int cutoff) {
    if (cutoff < 1) throw DomainError("sawtooth_coefficients: cutoff must be >= 1");
    auto b = Basis::spectral(cutoff);
    std::vector<cplx> c(b.dim());
    c[b.slot(0)] = 0.5;
    for (int m = -cutoff; m <= cutoff; ++m)
        if (m != 0) c[b.slot(m)] = cplx(0.0, 1.0 / (two_pi * m));
    return FunctionVector(b, std::move(c));
}

/// Writes f as CSV: a '# basis=<kind> size=<M or G>' line, then index,re,im
/// rows with index = m for spectral and g for grid vectors.
inline void write_csv(std::ostream& os, const FunctionVector& f) {
    csv::Writer w(os);
    const Basis& b = f.basis();
    w.comment(std::string("basis=") + (b.is_spectral() ? "spectral" : "grid") + " size=" + std::to_string(b.param()));
    w.header({"index", "re", "im"});
    for (std::size_t i = 0; i < f.dim(); ++i) {
        const long long idx = b.is_spectral() ? b.mode_at(i) : static_cast<long long>(i);
        w.row(idx, f[i].real(), f[i].imag());
    }
}

inline FunctionVector read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("# basis=", 0) != 0)
        throw Error("read_csv: missing '# basis=' header line");
    const auto kind_end = line.find(' ', 8);
    const std::string kind = line.substr(8, kind_end - 8);
    const auto size_pos = line.find("size=");
    if (size_pos == std::string::npos) throw Error("read_csv: missing size in header");
    const auto size = static_cast<std::size_t>(std::stoull(line.substr(size_pos + 5)));
    Basis b = kind == "spectral" ? Basis::spectral(static_cast<int>(size))
              : kind == "grid"   ? Basis::grid(size)
                                 : throw Error("read_csv: unknown basis kind '" + kind + "'");
    if (!std::getline(is, line)) throw Error("read_csv: missing column header");
    std::vector<cplx> c(b.dim());
    std::vector<bool> seen(b.dim(), false);
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        auto fields = csv::split(line);
        if (fields.size() != 3) throw Error("read_csv: expected 3 columns in '" + line + "'");
        const long long idx = std::stoll(fields[0]);
        const long long slot = b.is_spectral() ? idx + b.cutoff() : idx;
        if (slot < 0 || static_cast<std::size_t>(slot) >= b.dim()) throw Error("read_csv: index out of range");
        c[static_cast<std::size_t>(slot)] = {csv::parse_double(fields[1]), csv::parse_double(fields[2])};
        seen[static_cast<std::size_t>(slot)] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw Error("read_csv: missing coefficients");
    return FunctionVector(b, std::move(c));
}

} // namespace ergolab
