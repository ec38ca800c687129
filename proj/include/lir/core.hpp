#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lir {

/// Error type thrown by all modules for contract violations and bad data.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Storage dtypes
// ---------------------------------------------------------------------------

enum class Dtype : std::uint8_t { f32 = 0, f16 = 1 };

inline std::size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 2; }

inline const char* dtype_name(Dtype d) { return d == Dtype::f32 ? "float32" : "float16"; }

inline Dtype parse_dtype(std::string_view s) {
    if (s == "float32" || s == "fp32" || s == "f32") return Dtype::f32;
    if (s == "float16" || s == "fp16" || s == "f16") return Dtype::f16;
    throw Error("unknown dtype: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Token matrices
// ---------------------------------------------------------------------------

/// Row-major matrix of per-token embeddings. The same type carries
/// projection-head parameters (`dim` is just the column count). All in-memory
/// arithmetic is double precision; storage dtypes apply only on disk.
struct TokenMatrix {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<double> values;  // rows * dim, row-major

    TokenMatrix() = default;
    TokenMatrix(std::size_t r, std::size_t d) : rows(r), dim(d), values(r * d, 0.0) {}
    TokenMatrix(std::size_t r, std::size_t d, std::vector<double> v)
        : rows(r), dim(d), values(std::move(v)) {}

    double& at(std::size_t r, std::size_t c) { return values[r * dim + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * dim + c]; }
    double* row(std::size_t r) { return values.data() + r * dim; }
    const double* row(std::size_t r) const { return values.data() + r * dim; }

    bool empty() const { return rows == 0; }

    /// Enforces the shape and finiteness invariants.
    void check(const char* what = "matrix") const {
        if (rows == 0 || dim == 0)
            throw Error(std::string(what) + ": rows and dim must be >= 1");
        if (values.size() != rows * dim)
            throw Error(std::string(what) + ": values length does not equal rows*dim");
        for (double v : values)
            if (!std::isfinite(v))
                throw Error(std::string(what) + ": non-finite value");
    }
};

// ---------------------------------------------------------------------------
// Identifiers
// ---------------------------------------------------------------------------

using DocId = std::string;
using QueryId = std::string;
using Seed = std::uint64_t;

/// DocId/QueryId contract: non-empty UTF-8 with no whitespace bytes, so ids
/// can be embedded in whitespace-separated TREC line formats.
inline void check_id(std::string_view id, const char* what = "id") {
    if (id.empty()) throw Error(std::string(what) + " must be non-empty");
    for (unsigned char c : id) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f')
            throw Error(std::string(what) + " contains whitespace: \"" + std::string(id) + "\"");
    }
}

// ---------------------------------------------------------------------------
// IEEE 754 binary16 codec
// ---------------------------------------------------------------------------
//
// Encode rounds to nearest-even and saturates overflow to +-65504 (max
// finite) so stored token embeddings can never become infinite. Subnormals
// are kept. NaN is rejected in both directions.

namespace detail {

// Round-to-nearest-even for non-negative v, independent of the FPU mode.
inline long long round_half_even(double v) {
    double f = std::floor(v);
    double frac = v - f;
    auto base = static_cast<long long>(f);
    if (frac > 0.5) return base + 1;
    if (frac < 0.5) return base;
    return (base % 2 == 0) ? base : base + 1;
}

}  // namespace detail

constexpr std::uint16_t kF16MaxFiniteBits = 0x7BFF;  // 65504.0
constexpr double kF16MaxFinite = 65504.0;

inline std::uint16_t fp16_encode(double x) {
    if (std::isnan(x)) throw Error("fp16_encode: NaN input");
    const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0x0000;
    double a = std::fabs(x);
    if (a == 0.0) return sign;
    if (std::isinf(x)) return sign | kF16MaxFiniteBits;

    if (a < 0x1p-14) {  // subnormal range: value = m * 2^-24, m in [0, 1024)
        long long m = detail::round_half_even(std::ldexp(a, 24));
        if (m == 0) return sign;
        if (m == 1024) return sign | 0x0400;  // rounded up to the smallest normal
        return sign | static_cast<std::uint16_t>(m);
    }

    int e = 0;
    double f = std::frexp(a, &e);  // a = f * 2^e, f in [0.5, 1)
    long long m = detail::round_half_even(std::ldexp(f, 11));  // f*2048 in [1024, 2048)
    int exp_field = e + 14;                                    // (e-1) + bias 15
    if (m == 2048) {
        m = 1024;
        ++exp_field;
    }
    if (exp_field >= 31) return sign | kF16MaxFiniteBits;  // saturating overflow
    return sign | static_cast<std::uint16_t>(exp_field << 10) |
           static_cast<std::uint16_t>(m & 0x3FF);
}

inline double fp16_decode(std::uint16_t bits) {
    const unsigned exp_field = (bits >> 10) & 0x1F;
    const unsigned mant = bits & 0x3FF;
    const double sign = (bits & 0x8000) ? -1.0 : 1.0;
    if (exp_field == 31) {
        if (mant != 0) throw Error("fp16_decode: NaN pattern");
        return sign * std::numeric_limits<double>::infinity();
    }
    if (exp_field == 0) return sign * std::ldexp(static_cast<double>(mant), -24);
    return sign * std::ldexp(static_cast<double>(1024 + mant), static_cast<int>(exp_field) - 25);
}

/// Quantizes a value to what binary16 storage would hold.
inline double fp16_round_trip(double x) { return fp16_decode(fp16_encode(x)); }

// ---------------------------------------------------------------------------
// Deterministic pseudo-randomness
// ---------------------------------------------------------------------------
//
// The project-wide generator is SplitMix64 (Steele, Lea & Flood). It is
// frozen: equal seeds produce bit-identical streams on every platform, and
// independent streams are derived by seed mixing rather than by jumping.

struct SplitMix64 {
    std::uint64_t state = 0;

    SplitMix64() = default;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53 mantissa bits.
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(next_double() * static_cast<double>(n)) % n;
    }

    /// Standard normal via Box-Muller (one draw per call; frozen form).
    double next_gaussian() {
        double u1 = 1.0 - next_double();  // (0, 1]
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }
};

inline std::vector<double> rng_uniform(Seed seed, std::size_t n) {
    SplitMix64 rng(seed);
    std::vector<double> out(n);
    for (auto& v : out) v = rng.next_double();
    return out;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Derives an independent stream seed from a base seed and salts; used to
/// keep per-item randomness independent of processing order.
inline Seed derive_seed(Seed base, std::uint64_t salt_a, std::uint64_t salt_b = 0) {
    SplitMix64 rng(base ^ (salt_a * 0x9E3779B97F4A7C15ull) ^
                   (salt_b * 0xC2B2AE3D27D4EB4Full));
    return rng.next();
}

}  // namespace lir
