#pragma once

// Experiment runner behind the `ergolab` executable. Kept header-only so the
// test suite can drive it in-process through run_cli().
//
// Exit codes: 0 success, 1 configuration error, 2 validation failure,
// 3 numerical guard tripped.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "ergolab/ergolab.hpp"

namespace ergolab::cli {

inline constexpr const char* version = "0.1.0";
inline constexpr int schema_version = 1;

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A run ended with a failed check; artifacts are still written.
struct ValidationFailed {
    std::string what;
};

inline std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("sha256: digest failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

// ---------------------------------------------------------------- config access

/// Rejects keys outside `allowed` and requires those in `required`.
inline void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed,
                       const std::set<std::string>& required = {}) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError(path + ": unknown key '" + k + "'");
    for (const auto& k : required)
        if (!j.contains(k)) throw ConfigError(path + ": missing required key '" + k + "'");
}

template <class T>
T get(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw ConfigError(path + ": missing required key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path + "." + key + ": " + e.what());
    }
}

template <class T>
T get_or(const json& j, const std::string& key, const std::string& path, T fallback) {
    if (!j.contains(key)) return fallback;
    return get<T>(j, key, path);
}

inline cplx parse_complex(const json& v, const std::string& path) {
    if (v.is_number()) return v.get<double>();
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
        return {v[0].get<double>(), v[1].get<double>()};
    throw ConfigError(path + ": expected a number or [re, im]");
}

inline std::vector<cplx> parse_complex_list(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path + ": expected a list");
    std::vector<cplx> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(parse_complex(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

/// "p/q" or an integer string for rational angles; irrational decimals need an
/// explicit precision tag: {"decimal": "0.41421356", "digits": 8}.
inline Angle parse_angle(const json& v, const std::string& path) {
    try {
        if (v.is_string()) {
            const auto s = v.get<std::string>();
            if (s.find('.') != std::string::npos)
                throw ConfigError(path + ": decimal angles need {\"decimal\": ..., \"digits\": ...}");
            return Angle::parse(s);
        }
        if (v.is_number_integer()) return Angle::rational(v.get<std::int64_t>(), 1);
        if (v.is_object()) {
            if (v.contains("rational")) {
                check_keys(v, path, {"rational"});
                return Angle::parse(get<std::string>(v, "rational", path));
            }
            check_keys(v, path, {"decimal", "digits"}, {"decimal", "digits"});
            const auto s = get<std::string>(v, "decimal", path);
            const auto digits = get<int>(v, "digits", path);
            const auto dot = s.find('.');
            const int have = dot == std::string::npos ? 0 : static_cast<int>(s.size() - dot - 1);
            if (have != digits)
                throw ConfigError(path + ": decimal has " + std::to_string(have) + " fractional digits, tag says " +
                                  std::to_string(digits));
            return Angle::parse(s);
        }
    } catch (const DomainError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    throw ConfigError(path + ": expected \"p/q\" or {\"decimal\": ..., \"digits\": ...}");
}

inline Basis parse_basis(const json& j) {
    const std::string path = "basis";
    const auto kind = get<std::string>(j, "kind", path);
    if (kind == "spectral") {
        check_keys(j, path, {"kind", "cutoff"}, {"cutoff"});
        const int M = get<int>(j, "cutoff", path);
        if (M < 0) throw ConfigError("basis.cutoff: must be >= 0");
        return Basis::spectral(M);
    }
    if (kind == "grid") {
        check_keys(j, path, {"kind", "points"}, {"points"});
        const auto G = get<std::int64_t>(j, "points", path);
        if (G < 1) throw ConfigError("basis.points: must be >= 1");
        return Basis::grid(static_cast<std::size_t>(G));
    }
    throw ConfigError("basis.kind: expected 'spectral' or 'grid', got '" + kind + "'");
}

/// Shared state of one run: parsed config, seed, named operators.
struct Context {
    json config = json::object();
    std::optional<std::uint64_t> seed;
    std::optional<Basis> basis;
    std::map<std::string, Operator> operators;
    std::vector<std::size_t> checkpoint_override;
    std::vector<double> time_checkpoint_override;
    EngineOptions engine;

    std::uint64_t require_seed(const std::string& why) const {
        if (!seed) throw ConfigError("seed: required because " + why + " uses randomness (set \"seed\" or --seed)");
        return *seed;
    }

    const Basis& require_basis() const {
        if (!basis) throw ConfigError("basis: missing required section");
        return *basis;
    }

    const Operator& op(const std::string& name, const std::string& path) const {
        const auto it = operators.find(name);
        if (it == operators.end()) throw ConfigError(path + ": unknown operator '" + name + "'");
        return it->second;
    }
};

inline Matrix random_doubly_stochastic(std::size_t G, Rng& rng, int iterations) {
    const auto d = static_cast<Eigen::Index>(G);
    Eigen::MatrixXd m(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = 0.05 + rng.uniform();
    for (int it = 0; it < iterations; ++it) {
        m = m.array().colwise() / m.rowwise().sum().array();
        m = m.array().rowwise() / m.colwise().sum().array();
    }
    // Final row normalization keeps the L-infinity bound exact; the column
    // sums are then within the Sinkhorn residual of 1.
    m = m.array().colwise() / m.rowwise().sum().array();
    return m.cast<cplx>();
}

inline Operator parse_operator(const json& j, const std::string& path, Context& ctx) {
    const auto type = get<std::string>(j, "type", path);
    const Basis b = ctx.require_basis();
    auto need_spectral = [&] {
        if (!b.is_spectral()) throw ConfigError(path + ": type '" + type + "' needs a spectral basis");
    };
    auto need_grid = [&] {
        if (!b.is_grid()) throw ConfigError(path + ": type '" + type + "' needs a grid basis");
    };
    std::optional<Operator> out;
    try {
        if (type == "rotation") {
            need_spectral();
            check_keys(j, path, {"type", "angle", "phase"}, {"angle"});
            out = Operator::rotation(b.cutoff(), parse_angle(j.at("angle"), path + ".angle"));
        } else if (type == "diagonal") {
            need_spectral();
            check_keys(j, path, {"type", "mu", "phase"}, {"mu"});
            auto mu = parse_complex_list(j.at("mu"), path + ".mu");
            if (mu.size() == 1) mu.assign(b.dim(), mu.front());
            out = Operator::diagonal(b.cutoff(), std::move(mu));
        } else if (type == "mode_projector") {
            need_spectral();
            check_keys(j, path, {"type", "modes", "phase"}, {"modes"});
            out = Operator::mode_projector(b.cutoff(), get<std::vector<int>>(j, "modes", path));
        } else if (type == "identity" || type == "zero") {
            check_keys(j, path, {"type", "phase"});
            out = type == "identity" ? Operator::identity(b) : Operator::zero(b);
        } else if (type == "permutation") {
            need_grid();
            check_keys(j, path, {"type", "perm", "phase"}, {"perm"});
            const auto perm = get<std::vector<std::size_t>>(j, "perm", path);
            if (perm.size() != b.points()) throw ConfigError(path + ".perm: length must equal the grid size");
            out = Operator::permutation(perm);
        } else if (type == "multiplier_map") {
            need_grid();
            check_keys(j, path, {"type", "multiplier", "phase"}, {"multiplier"});
            out = Operator::multiplier_map(b.points(), get<std::uint64_t>(j, "multiplier", path));
        } else if (type == "grid_shift") {
            need_grid();
            check_keys(j, path, {"type", "shift", "phase"}, {"shift"});
            out = Operator::grid_shift(b.points(), get<std::size_t>(j, "shift", path));
        } else if (type == "lazy_shift") {
            need_grid();
            check_keys(j, path, {"type", "shift", "weight", "phase"}, {"shift", "weight"});
            const double w = get<double>(j, "weight", path);
            if (!(w >= 0.0 && w <= 1.0)) throw ConfigError(path + ".weight: must lie in [0, 1]");
            const auto P = Operator::grid_shift(b.points(), get<std::size_t>(j, "shift", path)).raw_matrix();
            const auto d = static_cast<Eigen::Index>(b.dim());
            out = Operator::dense_spatial(b.points(), (1.0 - w) * Matrix::Identity(d, d) + w * P);
        } else if (type == "dense") {
            check_keys(j, path, {"type", "matrix", "phase"}, {"matrix"});
            const json& rows = j.at("matrix");
            const auto d = static_cast<Eigen::Index>(b.dim());
            if (!rows.is_array() || rows.size() != b.dim()) throw ConfigError(path + ".matrix: expected dim rows");
            Matrix m(d, d);
            for (Eigen::Index r = 0; r < d; ++r) {
                const auto row = parse_complex_list(rows[static_cast<std::size_t>(r)],
                                                    path + ".matrix[" + std::to_string(r) + "]");
                if (row.size() != b.dim()) throw ConfigError(path + ".matrix: expected dim columns");
                for (Eigen::Index c = 0; c < d; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
            }
            out = Operator::dense(b, std::move(m));
        } else if (type == "random_doubly_stochastic") {
            need_grid();
            check_keys(j, path, {"type", "sinkhorn_iterations", "stream", "phase"});
            Rng rng(ctx.require_seed(path), "operator:" + get_or<std::string>(j, "stream", path, path));
            out = Operator::dense_spatial(b.points(),
                                          random_doubly_stochastic(b.points(), rng,
                                                                   get_or<int>(j, "sinkhorn_iterations", path, 500)));
        } else {
            throw ConfigError(path + ".type: unknown operator type '" + type + "'");
        }
    } catch (const DomainError& e) {
        throw ConfigError(path + ": " + e.what());
    } catch (const DimensionError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (j.contains("phase")) out = out->scaled(parse_angle(j.at("phase"), path + ".phase"));
    return *out;
}

inline FunctionVector parse_function(const json& j, const std::string& path, const Context& ctx) {
    const auto preset = get<std::string>(j, "preset", path);
    const Basis b = ctx.require_basis();
    try {
        if (preset == "mode") {
            check_keys(j, path, {"preset", "m"}, {"m"});
            if (!b.is_spectral()) throw ConfigError(path + ": preset 'mode' needs a spectral basis");
            return FunctionVector::mode(b.cutoff(), get<int>(j, "m", path));
        }
        if (preset == "sawtooth") {
            check_keys(j, path, {"preset"});
            if (!b.is_spectral()) throw ConfigError(path + ": preset 'sawtooth' needs a spectral basis");
            return sawtooth_coefficients(b.cutoff());
        }
        if (preset == "constant") {
            check_keys(j, path, {"preset", "value"});
            return FunctionVector::constant(b, j.contains("value") ? parse_complex(j.at("value"), path + ".value") : 1.0);
        }
        if (preset == "indicator") {
            check_keys(j, path, {"preset", "g"}, {"g"});
            if (!b.is_grid()) throw ConfigError(path + ": preset 'indicator' needs a grid basis");
            return FunctionVector::indicator(b.points(), get<std::size_t>(j, "g", path));
        }
        if (preset == "coefficients") {
            check_keys(j, path, {"preset", "values"}, {"values"});
            return FunctionVector(b, parse_complex_list(j.at("values"), path + ".values"));
        }
        if (preset == "random" || preset == "mean_zero_random") {
            check_keys(j, path, {"preset", "stream"});
            Rng rng(ctx.require_seed(path), "f:" + get_or<std::string>(j, "stream", path, path));
            FunctionVector f = FunctionVector::random(b, rng);
            if (preset == "mean_zero_random") f = f - FunctionVector::constant(b, mean(f));
            return f;
        }
        if (preset == "stable_projected" || preset == "reversible_projected") {
            check_keys(j, path, {"preset", "operator", "of"}, {"operator", "of"});
            const FunctionVector base = parse_function(j.at("of"), path + ".of", ctx);
            const auto D = decompose(ctx.op(get<std::string>(j, "operator", path), path + ".operator"));
            return preset == "stable_projected" ? project_stable(D, base) : project_reversible(D, base);
        }
    } catch (const DomainError& e) {
        throw ConfigError(path + ": " + e.what());
    } catch (const DimensionError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    throw ConfigError(path + ".preset: unknown preset '" + preset + "'");
}

inline GeneratorSpec parse_generator(const json& j, const std::string& path, const Context& ctx) {
    const auto type = get<std::string>(j, "type", path);
    const Basis b = ctx.require_basis();
    try {
        if (type == "zero") {
            check_keys(j, path, {"type"});
            return GeneratorSpec::zero(b);
        }
        if (type == "rotation_flow") {
            check_keys(j, path, {"type", "alpha"}, {"alpha"});
            if (!b.is_spectral()) throw ConfigError(path + ": rotation_flow needs a spectral basis");
            return GeneratorSpec::rotation_flow(b.cutoff(), get<double>(j, "alpha", path));
        }
        if (type == "diagonal") {
            check_keys(j, path, {"type", "rates"}, {"rates"});
            if (!b.is_spectral()) throw ConfigError(path + ": diagonal generator needs a spectral basis");
            return GeneratorSpec::diagonal(b.cutoff(), parse_complex_list(j.at("rates"), path + ".rates"));
        }
        if (type == "permutation_laplacian") {
            check_keys(j, path, {"type", "operator"}, {"operator"});
            const Operator& P = ctx.op(get<std::string>(j, "operator", path), path + ".operator");
            const auto* p = P.as_permutation();
            if (p == nullptr) throw ConfigError(path + ".operator: must name a permutation");
            return GeneratorSpec::permutation_laplacian(p->perm);
        }
        if (type == "dense") {
            check_keys(j, path, {"type", "operator"}, {"operator"});
            return GeneratorSpec::dense(b, ctx.op(get<std::string>(j, "operator", path), path + ".operator").matrix());
        }
    } catch (const DomainError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    throw ConfigError(path + ".type: unknown generator type '" + type + "'");
}

inline const std::set<std::string> top_level_keys = {
    "schema_version", "scenario", "seed", "output", "threads", "basis", "operators", "chain", "f", "N",
    "checkpoints", "average", "predict", "decompose", "validate", "semigroup", "volterra", "description"};

inline void load_config(Context& ctx, const std::string& text) {
    try {
        ctx.config = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    const json& c = ctx.config;
    check_keys(c, "config", top_level_keys, {"schema_version"});
    const int v = get<int>(c, "schema_version", "config");
    if (v != schema_version)
        throw ConfigError("config.schema_version: unsupported version " + std::to_string(v) + " (expected " +
                          std::to_string(schema_version) + ")");
    if (c.contains("seed")) ctx.seed = get<std::uint64_t>(c, "seed", "config");
    if (c.contains("threads")) ctx.engine.threads = get<unsigned>(c, "threads", "config");
    if (c.contains("basis")) ctx.basis = parse_basis(c.at("basis"));
}

inline void build_operators(Context& ctx) {
    if (!ctx.config.contains("operators")) return;
    const json& ops = ctx.config.at("operators");
    if (!ops.is_object()) throw ConfigError("operators: expected an object of named operators");
    for (const auto& [name, spec] : ops.items()) ctx.operators.emplace(name, parse_operator(spec, "operators." + name, ctx));
}

inline std::vector<std::size_t> config_checkpoints(const Context& ctx) {
    if (!ctx.checkpoint_override.empty()) return ctx.checkpoint_override;
    if (ctx.config.contains("checkpoints")) return get<std::vector<std::size_t>>(ctx.config, "checkpoints", "config");
    return {};
}

inline Strictness parse_strictness(const std::string& s, const std::string& path) {
    if (s == "strict") return Strictness::Strict;
    if (s == "warn") return Strictness::Warn;
    if (s == "off") return Strictness::Off;
    throw ConfigError(path + ": expected strict, warn or off");
}

inline EntangledChain build_chain(const Context& ctx, Strictness strictness, std::ostream& err) {
    const json& c = ctx.config;
    if (!c.contains("chain")) throw ConfigError("chain: missing required section");
    const json& ch = c.at("chain");
    check_keys(ch, "chain", {"T", "A"}, {"T"});
    std::vector<Operator> T, A;
    const auto tn = get<std::vector<std::string>>(ch, "T", "chain");
    const auto an = get_or<std::vector<std::string>>(ch, "A", "chain", {});
    for (std::size_t i = 0; i < tn.size(); ++i) T.push_back(ctx.op(tn[i], "chain.T[" + std::to_string(i) + "]"));
    for (std::size_t i = 0; i < an.size(); ++i) A.push_back(ctx.op(an[i], "chain.A[" + std::to_string(i) + "]"));
    ChainOptions opt;
    opt.strictness = strictness;
    try {
        EntangledChain chain(std::move(T), std::move(A), opt);
        for (const auto& w : chain.warnings()) err << "warning: " << w << '\n';
        return chain;
    } catch (const DimensionError& e) {
        throw ConfigError(std::string("chain: ") + e.what());
    }
}

inline std::size_t config_N(const Context& ctx) {
    const auto N = get<std::int64_t>(ctx.config, "N", "config");
    if (N < 1) throw ConfigError("config.N: must be >= 1");
    return static_cast<std::size_t>(N);
}

// ---------------------------------------------------------------- outputs

struct Artifact {
    std::string name;
    std::string sha256;
    std::size_t bytes;
};

class OutputDir {
public:
    explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& body) {
        std::filesystem::create_directories(dir_);
        std::ofstream os(dir_ / name, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + (dir_ / name).string());
        os << body;
        artifacts_.push_back({name, sha256_hex(body), body.size()});
    }

    const std::filesystem::path& path() const { return dir_; }
    const std::vector<Artifact>& artifacts() const { return artifacts_; }

private:
    std::filesystem::path dir_;
    std::vector<Artifact> artifacts_;
};

template <class Fn>
std::string render(Fn&& fn) {
    std::ostringstream os;
    fn(os);
    return os.str();
}

// ---------------------------------------------------------------- subcommands

inline void run_average(Context& ctx, OutputDir& out, std::ostream& err) {
    const json section = ctx.config.value("average", json::object());
    check_keys(section, "average", {"mode", "G_eval", "strictness"});
    const auto mode = get_or<std::string>(section, "mode", "average", "plain");
    if (mode != "plain" && mode != "abs") throw ConfigError("average.mode: expected 'plain' or 'abs'");
    build_operators(ctx);
    const auto chain =
        build_chain(ctx, parse_strictness(get_or<std::string>(section, "strictness", "average", "strict"), "average.strictness"),
                    err);
    if (!ctx.config.contains("f")) throw ConfigError("f: missing required section");
    const FunctionVector f = parse_function(ctx.config.at("f"), "f", ctx);
    const std::size_t N = config_N(ctx);
    const auto cps = config_checkpoints(ctx);
    CesaroSeries<FunctionVector> s;
    try {
        s = mode == "plain" ? cesaro_average(chain, f, N, cps, ctx.engine)
                            : cesaro_abs_average(chain, f, N, cps, get_or<std::size_t>(section, "G_eval", "average", 0),
                                                 ctx.engine);
    } catch (const DomainError& e) {
        throw ConfigError(std::string("average: ") + e.what());
    }
    out.write("average.csv", render([&](std::ostream& os) { write_series_csv(os, s); }));
    out.write("average_summary.csv", render([&](std::ostream& os) { write_series_summary_csv(os, s); }));
}

inline void run_decompose(Context& ctx, OutputDir& out, std::ostream&) {
    const json section = ctx.config.value("decompose", json::object());
    check_keys(section, "decompose", {"operator", "tol_unimodular"}, {"operator"});
    build_operators(ctx);
    const Operator& T = ctx.op(get<std::string>(section, "operator", "decompose"), "decompose.operator");
    const auto D = decompose(T, get_or<double>(section, "tol_unimodular", "decompose", default_tol_unimodular));
    out.write("decomposition.csv", render([&](std::ostream& os) { write_decomposition_csv(os, D); }));
}

inline void run_validate(Context& ctx, OutputDir& out, std::ostream&, std::vector<std::string>& failures) {
    const json section = ctx.config.value("validate", json::object());
    check_keys(section, "validate", {"operators", "trials", "tol", "require_fix_trivial"});
    build_operators(ctx);
    const std::uint64_t seed = ctx.require_seed("validate");
    std::vector<std::string> names = get_or<std::vector<std::string>>(section, "operators", "validate", {});
    if (names.empty())
        for (const auto& [n, op] : ctx.operators) names.push_back(n);
    const auto trials = get_or<std::size_t>(section, "trials", "validate", 64);
    const double tol = get_or<double>(section, "tol", "validate", 1e-10);
    const bool require_fix = get_or<bool>(section, "require_fix_trivial", "validate", false);
    std::ostringstream ds, fix;
    csv::Writer dw(ds), fw(fix);
    dw.header({"operator", "kind", "trials", "worst_l1_ratio", "worst_linf_ratio", "passed", "estimated"});
    fw.header({"operator", "kind", "fix_modulus_trivial"});
    for (std::size_t i = 0; i < names.size(); ++i) {
        const Operator& T = ctx.op(names[i], "validate.operators[" + std::to_string(i) + "]");
        const auto r = validate_dunford_schwartz(T, trials, tol, Rng(seed, "validate:" + names[i]).bits());
        dw.row(names[i], T.kind_name(), r.trials, r.worst_l1_ratio, r.worst_linf_ratio, r.passed, r.estimated);
        if (!r.passed) failures.push_back(names[i] + " is not Dunford-Schwartz");
        try {
            const bool trivial = check_fix_modulus_trivial(T);
            fw.row(names[i], T.kind_name(), trivial);
            if (require_fix && !trivial) failures.push_back(names[i] + " has a nontrivial Fix|T|");
        } catch (const Unsupported&) {
            fw.row(names[i], T.kind_name(), "unsupported");
            if (require_fix) failures.push_back(names[i] + ": Fix|T| check unsupported for this kind");
        }
    }
    out.write("ds_report.csv", ds.str());
    out.write("fix.csv", fix.str());
}

struct VolterraFlags {
    std::vector<double> epsilon;
    std::optional<std::int64_t> m_cap;
    std::optional<int> cutoff;
    std::optional<int> power;
    std::optional<std::size_t> trials;
    std::optional<std::size_t> a2_trials;
};

inline void run_volterra(Context& ctx, const VolterraFlags& flags, OutputDir& out, std::ostream&,
                         std::vector<std::string>& failures) {
    const json section = ctx.config.value("volterra", json::object());
    check_keys(section, "volterra", {"epsilon", "m_cap", "cutoff", "power", "trials", "a2_trials"});
    std::vector<double> eps = flags.epsilon;
    if (eps.empty()) eps = get_or<std::vector<double>>(section, "epsilon", "volterra", {});
    if (eps.empty()) throw ConfigError("volterra-cert: no epsilon given (use --epsilon or volterra.epsilon)");
    const std::int64_t m_cap = flags.m_cap.value_or(get_or<std::int64_t>(section, "m_cap", "volterra", 1'000'000));
    const std::size_t trials = flags.trials.value_or(get_or<std::size_t>(section, "trials", "volterra", 0));
    const std::size_t a2_trials = flags.a2_trials.value_or(get_or<std::size_t>(section, "a2_trials", "volterra", 0));
    const int power = flags.power.value_or(get_or<int>(section, "power", "volterra", 1));

    std::vector<CompactnessCertificate> certs;
    for (double e : eps) {
        if (!(e > 0.0)) throw ConfigError("volterra.epsilon: values must be > 0");
        certs.push_back(twisted_compactness_certificate(e, m_cap));
    }
    out.write("certificate.csv", render([&](std::ostream& os) {
                  csv::Writer w(os);
                  w.header({"epsilon", "M_min", "tail_sum", "certified_bound"});
                  for (const auto& c : certs) w.row(c.epsilon, c.m_min, c.tail_sum, c.certified_bound);
              }));
    if (trials == 0 && a2_trials == 0) return;

    std::int64_t needed = 1;
    for (const auto& c : certs) needed = std::max(needed, c.m_min);
    const int cutoff = flags.cutoff.value_or(get_or<int>(section, "cutoff", "volterra", static_cast<int>(std::min<std::int64_t>(needed + 8, 1024))));
    const auto parts = build_volterra(cutoff, power);
    const std::uint64_t seed = ctx.require_seed("volterra verification");
    if (trials > 0) {
        std::ostringstream os;
        csv::Writer w(os);
        w.header({"epsilon", "M_min", "cutoff", "trials", "violations", "worst_ratio", "passed"});
        for (const auto& c : certs) {
            const auto r = verify_certificate(c, parts, trials, Rng(seed, "verify:" + csv::format(c.epsilon)).bits());
            w.row(c.epsilon, c.m_min, cutoff, r.trials, r.violations, r.worst_ratio, r.passed);
            if (!r.passed) failures.push_back("certificate for epsilon " + csv::format(c.epsilon) + " violated");
        }
        out.write("verification.csv", os.str());
    }
    if (a2_trials > 0) {
        const auto r = a2_bound_check(parts, a2_trials, Rng(seed, "a2").bits());
        out.write("a2.csv", render([&](std::ostream& os) {
                      csv::Writer w(os);
                      w.header({"cutoff", "trials", "max_sup", "bound", "worst_ratio_l2", "worst_ratio_linf", "passed"});
                      w.row(cutoff, r.trials, r.max_sup, a2_constant(), r.worst_ratio_l2, r.worst_ratio_linf, r.passed);
                  }));
        if (!r.passed) failures.push_back("(A2) bound violated");
    }
}

inline void run_predict(Context& ctx, OutputDir& out, std::ostream& err) {
    const json section = ctx.config.value("predict", json::object());
    check_keys(section, "predict", {"form", "tol_sep", "tol_match", "strictness"});
    const auto form_name = get_or<std::string>(section, "form", "predict", "with_t0");
    if (form_name != "with_t0" && form_name != "as_printed")
        throw ConfigError("predict.form: expected 'with_t0' or 'as_printed'");
    const LimitForm form = form_name == "with_t0" ? LimitForm::WithT0 : LimitForm::AsPrinted;
    const double tol_sep = get_or<double>(section, "tol_sep", "predict", default_tol_sep);
    const double tol_match = get_or<double>(section, "tol_match", "predict", default_tol_match);
    build_operators(ctx);
    const auto chain = build_chain(
        ctx, parse_strictness(get_or<std::string>(section, "strictness", "predict", "strict"), "predict.strictness"), err);
    if (!ctx.config.contains("f")) throw ConfigError("f: missing required section");
    const FunctionVector f = parse_function(ctx.config.at("f"), "f", ctx);
    const std::size_t N = config_N(ctx);

    const auto pred = predict_chain_limit(chain, f, form, tol_sep, tol_match);
    if (pred.prediction.projected)
        err << "warning: f has a stable component (L2 " << csv::format(pred.prediction.stable_component_l2)
            << ") for T_0; it was projected out before prediction\n";
    const auto series = cesaro_average(chain, f, N, config_checkpoints(ctx), ctx.engine);
    const auto cmp = compare_limit(pred.prediction.value, series);

    // Both limit forms, compared at the final checkpoint.
    std::ostringstream forms;
    csv::Writer fw(forms);
    fw.header({"form", "selected", "tuple_count", "final_sup_err", "final_l2_err"});
    for (LimitForm lf : {LimitForm::WithT0, LimitForm::AsPrinted}) {
        const auto p = lf == form ? pred : predict_chain_limit(chain, f, lf, tol_sep, tol_match);
        const FunctionVector diff = series.final_value() - p.prediction.value;
        fw.row(lf == LimitForm::WithT0 ? "with_t0" : "as_printed", lf == form, p.prediction.tuple_count,
               sup_bound(diff), norm(diff, Norm::L2));
    }

    out.write("prediction.csv", render([&](std::ostream& os) { write_csv(os, pred.prediction.value); }));
    const std::vector<PointSpectrum> used =
        form == LimitForm::WithT0 ? pred.spectra : std::vector<PointSpectrum>(pred.spectra.begin() + 1, pred.spectra.end());
    out.write("resonances.csv", render([&](std::ostream& os) {
                  write_resonances_csv(os, used, pred.resonances, pred.prediction.contributions);
              }));
    out.write("comparison.csv", render([&](std::ostream& os) { write_comparison_csv(os, cmp); }));
    out.write("forms.csv", forms.str());
}

inline void run_semigroup(Context& ctx, OutputDir& out, std::ostream&) {
    if (!ctx.config.contains("semigroup")) throw ConfigError("semigroup: missing required section");
    const json& s = ctx.config.at("semigroup");
    check_keys(s, "semigroup", {"generators", "A", "horizon", "h", "checkpoints", "mode", "G_eval"},
               {"generators", "horizon"});
    build_operators(ctx);
    SemigroupChain chain;
    const json& gens = s.at("generators");
    if (!gens.is_array() || gens.empty()) throw ConfigError("semigroup.generators: expected a non-empty list");
    for (std::size_t i = 0; i < gens.size(); ++i)
        chain.generators.push_back(parse_generator(gens[i], "semigroup.generators[" + std::to_string(i) + "]", ctx));
    const auto an = get_or<std::vector<std::string>>(s, "A", "semigroup", {});
    for (std::size_t i = 0; i < an.size(); ++i) chain.A.push_back(ctx.op(an[i], "semigroup.A[" + std::to_string(i) + "]"));
    chain.horizon = get<double>(s, "horizon", "semigroup");
    chain.h = get_or<double>(s, "h", "semigroup", 0.0);
    const auto mode = get_or<std::string>(s, "mode", "semigroup", "plain");
    if (mode != "plain" && mode != "abs") throw ConfigError("semigroup.mode: expected 'plain' or 'abs'");
    std::vector<double> cps = ctx.time_checkpoint_override;
    if (cps.empty()) cps = get_or<std::vector<double>>(s, "checkpoints", "semigroup", {});
    if (!ctx.config.contains("f")) throw ConfigError("f: missing required section");
    const FunctionVector f = parse_function(ctx.config.at("f"), "f", ctx);
    CesaroSeries<FunctionVector, double> series;
    try {
        series = mode == "plain" ? cesaro_integral(chain, f, cps, ctx.engine)
                                 : cesaro_abs_integral(chain, f, cps, get_or<std::size_t>(s, "G_eval", "semigroup", 0),
                                                       ctx.engine);
    } catch (const DomainError& e) {
        throw ConfigError(std::string("semigroup: ") + e.what());
    } catch (const DimensionError& e) {
        throw ConfigError(std::string("semigroup: ") + e.what());
    }
    out.write("semigroup.csv", render([&](std::ostream& os) { write_series_csv(os, series); }));
    out.write("semigroup_summary.csv", render([&](std::ostream& os) { write_series_summary_csv(os, series); }));
}

// ---------------------------------------------------------------- entry point

inline std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (auto& part : csv::split(s))
        if (!part.empty()) out.push_back(part);
    return out;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"ergolab: entangled ergodic averages of Dunford-Schwartz operators"};
    app.require_subcommand(1);
    std::string config_path, out_dir, checkpoints;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    app.add_option("--config", config_path, "JSON experiment config");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--threads", threads, "worker threads (0 = hardware)");
    app.add_option("--checkpoints", checkpoints, "comma-separated checkpoint list");
    app.set_version_flag("--version", version);

    VolterraFlags vflags;
    std::vector<CLI::App*> subs;
    subs.push_back(app.add_subcommand("average", "entangled Cesaro averages"));
    subs.push_back(app.add_subcommand("decompose", "reversible / stable splitting"));
    auto* vc = app.add_subcommand("volterra-cert", "twisted compactness certificate for the Volterra operator");
    vc->add_option("--epsilon", vflags.epsilon, "tolerance(s)");
    vc->add_option("--m-cap", vflags.m_cap, "largest admissible M");
    vc->add_option("--cutoff", vflags.cutoff, "mode cutoff for verification");
    vc->add_option("--power", vflags.power, "power k of V (1..4)");
    vc->add_option("--trials", vflags.trials, "randomized verification trials (needs a seed)");
    vc->add_option("--a2-trials", vflags.a2_trials, "randomized (A2) trials (needs a seed)");
    subs.push_back(vc);
    subs.push_back(app.add_subcommand("predict", "predicted limit versus empirical average"));
    subs.push_back(app.add_subcommand("semigroup", "entangled Cesaro integrals of semigroups"));
    subs.push_back(app.add_subcommand("validate", "Dunford-Schwartz and Fix|T| checks"));
    for (auto* s : subs) s->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }
    const std::string sub = app.get_subcommands().front()->get_name();

    const auto t0 = std::chrono::steady_clock::now();
    const std::string started = utc_now();
    Context ctx;
    std::string config_text;
    std::vector<std::string> failures;
    try {
        if (!config_path.empty()) {
            std::ifstream is(config_path, std::ios::binary);
            if (!is) throw ConfigError("config: cannot read '" + config_path + "'");
            std::ostringstream ss;
            ss << is.rdbuf();
            config_text = ss.str();
            load_config(ctx, config_text);
        } else if (sub != "volterra-cert") {
            throw ConfigError("--config is required for '" + sub + "'");
        }
        if (seed) ctx.seed = seed;
        if (const char* env = std::getenv("ERGOLAB_THREADS")) {
            try {
                ctx.engine.threads = static_cast<unsigned>(std::stoul(env));
            } catch (const std::exception&) {
                throw ConfigError("ERGOLAB_THREADS: not a number");
            }
        }
        if (threads) ctx.engine.threads = *threads;
        if (!checkpoints.empty()) {
            try {
                for (const auto& p : split_list(checkpoints)) {
                    if (sub == "semigroup")
                        ctx.time_checkpoint_override.push_back(csv::parse_double(p));
                    else
                        ctx.checkpoint_override.push_back(static_cast<std::size_t>(std::stoull(p)));
                }
            } catch (const std::exception& e) {
                throw ConfigError(std::string("--checkpoints: ") + e.what());
            }
        }
        std::string dir = ctx.config.value("output", std::string("ergolab-out"));
        if (const char* env = std::getenv("ERGOLAB_OUT")) dir = env;
        if (!out_dir.empty()) dir = out_dir;
        OutputDir output(dir);

        if (sub == "average") run_average(ctx, output, err);
        else if (sub == "decompose") run_decompose(ctx, output, err);
        else if (sub == "volterra-cert") run_volterra(ctx, vflags, output, err, failures);
        else if (sub == "predict") run_predict(ctx, output, err);
        else if (sub == "semigroup") run_semigroup(ctx, output, err);
        else run_validate(ctx, output, err, failures);

        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        json files = json::array();
        for (const auto& a : output.artifacts()) files.push_back({{"name", a.name}, {"sha256", a.sha256}, {"bytes", a.bytes}});
        std::string flags_text = sub;
        for (int i = 1; i < argc; ++i) flags_text += std::string(" ") + argv[i];
        json manifest = {
            {"tool", "ergolab"},
            {"version", version},
            {"subcommand", sub},
            {"scenario", ctx.config.value("scenario", std::string())},
            {"config_sha256", sha256_hex(config_text.empty() ? flags_text : config_text)},
            {"seed", ctx.seed ? json(*ctx.seed) : json(nullptr)},
            {"threads", ctx.engine.threads},
            {"started_utc", started},
            {"wall_time_seconds", wall},
            {"versions",
             {{"compiler", __VERSION__},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
              {"cli11", CLI11_VERSION}}},
            {"status", failures.empty() ? "ok" : "validation_failed"},
            {"failures", failures},
            {"files", files},
        };
        std::filesystem::create_directories(output.path());
        std::ofstream(output.path() / "manifest.json") << manifest.dump(2) << '\n';
        for (const auto& a : output.artifacts()) out << (output.path() / a.name).string() << '\n';
        if (!failures.empty()) {
            for (const auto& f : failures) err << "validation failure: " << f << '\n';
            return 2;
        }
        return 0;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 1;
    } catch (const ValidationError& e) {
        err << "validation failure: " << e.what() << '\n';
        return 2;
    } catch (const NumericalGuard& e) {
        err << "numerical guard: " << e.what() << '\n';
        return 3;
    } catch (const CapExceeded& e) {
        err << "config error: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace ergolab::cli
