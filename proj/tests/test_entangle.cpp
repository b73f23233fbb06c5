#include <catch_amalgamated.hpp>

#include <sstream>

#include "generators.hpp"

using namespace ergolab;
using Catch::Approx;

namespace {

constexpr double pi = std::numbers::pi;

const Angle sqrt2m1 = Angle::parse("0.414213562373095048801688724209698079");

double max_diff(const CesaroSeries<FunctionVector>& a, const CesaroSeries<FunctionVector>& b) {
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, a.values[k].max_abs_diff(b.values[k]));
    return d;
}

bool bit_identical(const CesaroSeries<FunctionVector>& a, const CesaroSeries<FunctionVector>& b) {
    if (a.checkpoints != b.checkpoints) return false;
    for (std::size_t k = 0; k < a.size(); ++k)
        if (a.values[k].data() != b.values[k].data()) return false;
    return true;
}

} // namespace

TEST_CASE("chain construction", "[entangle]") {
    const Basis b = Basis::spectral(3);
    const auto R = Operator::rotation(3, sqrt2m1);
    const auto I = Operator::identity(b);
    CHECK(EntangledChain({R}, {}).length() == 0);
    CHECK(EntangledChain({R, R, R}, {I, I}).length() == 2);
    CHECK_THROWS_AS(EntangledChain({}, {}), DimensionError);
    CHECK_THROWS_AS(EntangledChain({R, R}, {}), DimensionError);
    CHECK_THROWS_AS(EntangledChain({R, Operator::rotation(4, sqrt2m1)}, {I}), DimensionError);

    const auto big = Operator::dense_spatial(3, 1.5 * Matrix::Identity(3, 3));
    CHECK_THROWS_AS(EntangledChain({big}, {}), ValidationError);
    ChainOptions warn;
    warn.strictness = Strictness::Warn;
    const EntangledChain w({big}, {}, warn);
    REQUIRE(w.warnings().size() == 1);
    CHECK(w.warnings()[0].find("T_0") != std::string::npos);
    ChainOptions off;
    off.strictness = Strictness::Off;
    CHECK(EntangledChain({big}, {}, off).warnings().empty());
}

TEST_CASE("entangled terms", "[entangle]") {
    const int M = 3;
    const auto R = Operator::rotation(M, sqrt2m1);
    const auto P1 = Operator::mode_projector(M, {1});
    const auto e1 = FunctionVector::mode(M, 1);

    SECTION("a = 0 is the plain orbit") {
        const EntangledChain c({R}, {});
        for (std::uint64_t n : {1u, 7u, 1000u}) CHECK(entangled_term(c, n, e1).max_abs_diff(power_apply(R, n, e1)) == 0.0);
    }
    SECTION("a = 1 rotation with the mode-1 projector") {
        const EntangledChain c({R, R}, {P1});
        for (std::uint64_t n : {1u, 2u, 99u, 100000u}) {
            const auto g = entangled_term(c, n, e1);
            const cplx expected = sqrt2m1.unit_power(static_cast<std::int64_t>(2 * n));
            CHECK(std::abs(g.coeff(1) - expected) <= 1e-12);
            CHECK(std::abs(norm(g, Norm::L2) - 1.0) <= 1e-12);
        }
    }
    SECTION("A_0 = 0 kills the term") {
        const EntangledChain c({R, R}, {Operator::zero(R.basis())});
        CHECK(sup_bound(entangled_term(c, 5, e1)) == 0.0);
    }
    SECTION("right-to-left order against explicit matrices") {
        Rng rng(1, "entangle:order");
        const auto A = Operator::dense_spatial(5, gen::random_doubly_stochastic(5, rng));
        const auto T0 = Operator::grid_shift(5, 1);
        const auto T1 = Operator::multiplier_map(5, 2);
        const auto f = FunctionVector::random(Basis::grid(5), rng);
        const EntangledChain c({T0, T1}, {A});
        const std::uint64_t n = 3;
        Vector v = detail::to_eigen(f);
        for (std::uint64_t k = 0; k < n; ++k) v = T0.matrix() * v;
        v = A.matrix() * v;
        for (std::uint64_t k = 0; k < n; ++k) v = T1.matrix() * v;
        CHECK((detail::to_eigen(entangled_term(c, n, f)) - v).cwiseAbs().maxCoeff() <= 1e-14);
    }
    CHECK_THROWS_AS(entangled_term(EntangledChain({R}, {}), 0, e1), DomainError);
    CHECK_THROWS_AS(entangled_term(EntangledChain({R}, {}), 1, FunctionVector::mode(2, 1)), DimensionError);
}

TEST_CASE("Cesaro averages: identity chain", "[entangle]") {
    Rng rng(2, "entangle:identity");
    const Basis b = Basis::spectral(4);
    const auto I = Operator::identity(b);
    const auto f = FunctionVector::random(b, rng);
    const auto s = cesaro_average(EntangledChain({I, I, I}, {I, I}), f, 1000);
    CHECK(s.checkpoints.front() == 1);
    CHECK(s.checkpoints.back() == 1000);
    for (const auto& v : s.values) CHECK(v.max_abs_diff(f) <= 1e-15);
}

TEST_CASE("Cesaro averages: rotation geometric bound", "[entangle]") {
    const int M = 3;
    const auto R = Operator::rotation(M, sqrt2m1);
    const EntangledChain c({R, R}, {Operator::mode_projector(M, {1})});
    const auto s = cesaro_average(c, FunctionVector::mode(M, 1), 100'000, {10, 100, 1000, 10'000, 100'000});
    const double gap = std::abs(1.0 - sqrt2m1.times(2).value());
    for (std::size_t k = 0; k < s.size(); ++k) {
        const double bound = 2.0 / (static_cast<double>(s.checkpoints[k]) * gap);
        CHECK(norm(s.values[k], Norm::L2) <= bound + 1e-12);
    }
}

TEST_CASE("Cesaro averages: permutation chains are periodic", "[entangle]") {
    // Cycle lengths 3 and 4 for T_0, 5 for T_1: overall period 60.
    const auto T0 = Operator::permutation({1, 2, 0, 4, 5, 6, 3});
    const auto T1 = Operator::permutation({1, 2, 3, 4, 0, 5, 6});
    Rng rng(3, "entangle:period");
    const auto f = FunctionVector::random(Basis::grid(7), rng);
    const auto A = Operator::dense_spatial(7, gen::random_doubly_stochastic(7, rng));
    const auto s = cesaro_average(EntangledChain({T0, T1}, {A}), f, 6000, {60, 120, 600, 6000});
    for (std::size_t k = 1; k < s.size(); ++k) CHECK(s.values[k].max_abs_diff(s.values[0]) <= 1e-13);
}

TEST_CASE("Cesaro averages: linearity", "[entangle][property]") {
    Rng rng(4, "entangle:linear");
    const auto T0 = Operator::grid_shift(9, 2);
    const auto T1 = Operator::multiplier_map(9, 2);
    const auto A = Operator::dense_spatial(9, gen::random_doubly_stochastic(9, rng));
    const EntangledChain c({T0, T1}, {A});
    for (int trial = 0; trial < 5; ++trial) {
        const auto f = FunctionVector::random(Basis::grid(9), rng);
        const auto g = FunctionVector::random(Basis::grid(9), rng);
        const auto sf = cesaro_average(c, f, 2000);
        const auto sg = cesaro_average(c, g, 2000);
        const auto sfg = cesaro_average(c, f + g, 2000);
        for (std::size_t k = 0; k < sf.size(); ++k) CHECK(sfg.values[k].max_abs_diff(sf.values[k] + sg.values[k]) <= 1e-10);
    }
}

TEST_CASE("Cesaro averages: parallel runs are bit-identical", "[entangle][property]") {
    Rng rng(5, "entangle:parallel");
    const auto R = Operator::rotation(6, sqrt2m1);
    const auto A = Operator::dense_spectral(6, 0.5 * Matrix::Identity(13, 13));
    const EntangledChain c({R, R}, {A});
    const auto f = FunctionVector::random(Basis::spectral(6), rng);
    EngineOptions one, four;
    four.threads = 4;
    one.block = four.block = 512;
    const auto a = cesaro_average(c, f, 50'000, {}, one);
    const auto b = cesaro_average(c, f, 50'000, {}, four);
    CHECK(bit_identical(a, b));
    const auto aa = cesaro_abs_average(c, f, 20'000, {}, 0, one);
    const auto ba = cesaro_abs_average(c, f, 20'000, {}, 0, four);
    CHECK(bit_identical(aa, ba));
}

TEST_CASE("Cesaro averages: trigonometric-polynomial bound for a = 0", "[entangle][property]") {
    Rng rng(6, "entangle:trig");
    const int M = 5;
    for (int trial = 0; trial < 5; ++trial) {
        const Angle alpha = Angle::from_turns(rng.uniform(0.05, 0.45));
        auto f = FunctionVector::random(Basis::spectral(M), rng);
        f = f - FunctionVector::constant(f.basis(), f.coeff(0));
        const auto s = cesaro_average(EntangledChain({Operator::rotation(M, alpha)}, {}), f, 5000);
        double C = 0.0;
        for (int m = -M; m <= M; ++m)
            if (m != 0) C += std::abs(f.coeff(m)) * 2.0 / std::abs(1.0 - alpha.times(m).value());
        for (std::size_t k = 0; k < s.size(); ++k)
            CHECK(sup_bound(s.values[k]) <= C / static_cast<double>(s.checkpoints[k]) + 1e-12);
    }
}

TEST_CASE("Birkhoff averages of a transitive permutation tend to constants", "[entangle]") {
    const auto T = Operator::grid_shift(11, 3);
    REQUIRE(check_fix_modulus_trivial(T));
    Rng rng(7, "entangle:remark");
    const auto f = FunctionVector::random(Basis::grid(11), rng);
    const auto s = cesaro_average(EntangledChain({T}, {}), f, 11'000, {11, 1100, 11'000});
    const cplx c = s.final_value()[0];
    CHECK(s.final_value().max_abs_diff(FunctionVector::constant(f.basis(), c)) <= 1e-12);
    CHECK(std::abs(c) <= norm(f, Norm::L1) + 1e-12);
    CHECK(std::abs(c - mean(f)) <= 1e-12);
}

TEST_CASE("absolute averages", "[entangle]") {
    const int M = 4;
    const auto R = Operator::rotation(M, sqrt2m1);
    SECTION("f = 0 gives zeros") {
        const auto s = cesaro_abs_average(EntangledChain({R}, {}), FunctionVector::zero(Basis::spectral(M)), 100);
        for (const auto& v : s.values) CHECK(sup_bound(v) == 0.0);
    }
    SECTION("unimodular terms have modulus one everywhere") {
        const auto s = cesaro_abs_average(EntangledChain({R}, {}), FunctionVector::mode(M, 1), 1000);
        for (const auto& v : s.values) {
            CHECK(v.basis().points() == oversampled_grid(M));
            for (std::size_t g = 0; g < v.dim(); ++g) CHECK(v[g].real() == Approx(1.0).epsilon(1e-12));
        }
        // The plain average of the same orbit decays.
        const auto p = cesaro_average(EntangledChain({R}, {}), FunctionVector::mode(M, 1), 1000);
        CHECK(sup_bound(p.final_value()) < 0.01);
    }
    SECTION("grid size must resolve the modes") {
        CHECK_THROWS_AS(cesaro_abs_average(EntangledChain({R}, {}), FunctionVector::mode(M, 1), 10, {}, 8), AliasingError);
        CHECK(cesaro_abs_average(EntangledChain({R}, {}), FunctionVector::mode(M, 1), 10, {}, 9).final_value().dim() == 9);
    }
    SECTION("doubling chain with a doubly-stochastic intertwiner: periodic, no decay") {
        Rng rng(8, "entangle:doubling");
        const auto D = Operator::multiplier_map(101, 2);
        const auto A = Operator::dense_spatial(101, gen::random_doubly_stochastic(101, rng));
        auto f = FunctionVector::random(Basis::grid(101), rng);
        f = f - FunctionVector::constant(f.basis(), mean(f));
        const auto s = cesaro_abs_average(EntangledChain({D, D}, {A}), f, 10'000, {100, 10'000});
        // Recorded behavior: the orbit repeats with period 100.
        const double ratio = sup_bound(s.values[1]) / sup_bound(s.values[0]);
        CHECK(ratio > 0.5);
    }
}

TEST_CASE("Bohr weights", "[entangle]") {
    const auto one = bohr_weight(std::vector<cplx>{1.0}, {1.0}, 50);
    for (std::size_t n = 1; n <= 50; ++n) CHECK(one.at(n) == cplx(1.0, 0.0));
    const auto alt = bohr_weight(std::vector<cplx>{-1.0}, {1.0}, 50);
    for (std::size_t n = 1; n <= 50; ++n) CHECK(std::abs(alt.at(n) - (n % 2 ? -1.0 : 1.0)) <= 1e-15);
    const auto mix = bohr_weight(std::vector<Angle>{sqrt2m1, Angle()}, {0.7, 0.3}, 10'000);
    double sup = 0.0;
    for (const auto& v : mix.values) sup = std::max(sup, std::abs(v));
    CHECK(sup <= 1.0 + 1e-12);
    CHECK(mix.kind == WeightSequence::Kind::Bohr);
    CHECK_THROWS_AS(bohr_weight(std::vector<cplx>{1.1}, {1.0}, 5), NonUnimodularGamma);
    CHECK_THROWS_AS(bohr_weight(std::vector<cplx>{cplx(0.0, 1.0 + 1e-9)}, {1.0}, 5), NonUnimodularGamma);
    CHECK_THROWS_AS(bohr_weight(std::vector<cplx>{1.0, 1.0}, {1.0}, 5), DimensionError);
}

TEST_CASE("weighted averages", "[entangle]") {
    Rng rng(9, "entangle:weighted");
    const int M = 4;
    const auto R = Operator::rotation(M, sqrt2m1);
    const auto f = FunctionVector::random(Basis::spectral(M), rng);
    SECTION("a_n = 1 is the Birkhoff average") {
        const auto w = bohr_weight(std::vector<cplx>{1.0}, {1.0}, 3000);
        const auto a = weighted_average(R, f, w, 3000);
        const auto b = cesaro_average(EntangledChain({R}, {}), f, 3000);
        CHECK(max_diff(a, b) <= 1e-12);
    }
    SECTION("a_n = gamma^n absorbs into gamma T") {
        for (int trial = 0; trial < 5; ++trial) {
            const Angle theta = Angle::from_turns(rng.uniform());
            const auto w = bohr_weight(std::vector<Angle>{theta}, {1.0}, 3000);
            const auto a = weighted_average(R, f, w, 3000);
            const auto b = cesaro_average(EntangledChain({R.scaled(theta)}, {}), f, 3000);
            CHECK(max_diff(a, b) <= 1e-12);
        }
    }
    SECTION("weights must cover the horizon") {
        const auto w = bohr_weight(std::vector<cplx>{1.0}, {1.0}, 10);
        CHECK_THROWS_AS(weighted_average(R, f, w, 11), DomainError);
    }
}

TEST_CASE("coefficient extraction", "[entangle]") {
    const int M = 3;
    const auto R = Operator::rotation(M, sqrt2m1);
    const auto I = Operator::identity(Basis::spectral(M));
    const auto e1 = FunctionVector::mode(M, 1);
    SECTION("orthogonal functionals give zero sequences") {
        const auto r = extract_lambda_sequence(I, R, e1, {FunctionVector::mode(M, 2)}, 100);
        for (const auto& v : r.sequences[0].values) CHECK(v == cplx(0.0, 0.0));
    }
    SECTION("rotation orbit paired with e_1") {
        const auto r = extract_lambda_sequence(I, R, e1, {e1}, 1000);
        REQUIRE(r.sequences[0].horizon() == 1000);
        for (std::size_t n = 1; n <= 1000; n += 37) {
            CHECK(std::abs(r.sequences[0].at(n) - sqrt2m1.unit_power(static_cast<std::int64_t>(n))) <= 1e-12);
            CHECK(std::abs(r.sequences[0].at(n)) == Approx(1.0));
        }
        CHECK(r.sequences[0].kind == WeightSequence::Kind::Extracted);
        CHECK(r.max_modulus == Approx(1.0));
        CHECK(r.within_bound);
    }
    SECTION("Cauchy-Schwarz bound holds for random data") {
        Rng rng(10, "entangle:extract");
        for (int trial = 0; trial < 5; ++trial) {
            const auto A = Operator::dense_spatial(8, gen::random_doubly_stochastic(8, rng));
            const auto T = Operator::multiplier_map(8, 3);
            const auto f = FunctionVector::random(Basis::grid(8), rng);
            std::vector<FunctionVector> phis;
            for (int k = 0; k < 3; ++k) phis.push_back(FunctionVector::random(Basis::grid(8), rng));
            const auto r = extract_lambda_sequence(A, T, f, phis, 200);
            CHECK(r.within_bound);
            CHECK(r.max_modulus <= r.bound + 1e-12);
        }
    }
}

TEST_CASE("series CSV", "[entangle]") {
    const auto s = cesaro_average(EntangledChain({Operator::identity(Basis::grid(2))}, {}),
                                  FunctionVector::indicator(2, 0), 4, {2, 4});
    std::ostringstream a, b;
    write_series_csv(a, s);
    write_series_summary_csv(b, s);
    CHECK(a.str() == "checkpoint,index,re,im\n2,0,1,0\n2,1,0,0\n4,0,1,0\n4,1,0,0\n");
    CHECK(b.str().rfind("checkpoint,sup_value,l2_value\n2,1,", 0) == 0);
}
