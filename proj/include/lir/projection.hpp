#pragma once

#include <cstdint>
#include <string>

#include "lir/core.hpp"
#include "lir/index.hpp"

namespace lir {

// ---------------------------------------------------------------------------
// Config and parameters
// ---------------------------------------------------------------------------

enum class HeadKind : std::uint8_t { linear = 0, ffn2 = 1 };

inline const char* head_kind_name(HeadKind k) { return k == HeadKind::linear ? "linear" : "ffn2"; }

inline HeadKind parse_head_kind(std::string_view s) {
    if (s == "linear") return HeadKind::linear;
    if (s == "ffn2") return HeadKind::ffn2;
    throw Error("unknown head kind: " + std::string(s));
}

/// Token projection head configuration. The ffn2 kind is a 2-layer
/// feedforward block with a SiLU activation and an upscaled hidden width
/// (hidden = intermediate_factor * d_in). A residual connection adds the
/// input back to the final output; when d_in != d_out it goes through a
/// learned bias-free linear adapter.
struct ProjectionConfig {
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    HeadKind kind = HeadKind::linear;
    std::size_t intermediate_factor = 4;
    bool residual = false;

    std::size_t hidden() const { return intermediate_factor * d_in; }
    bool needs_adapter() const { return residual && d_in != d_out; }

    void check() const {
        if (d_in == 0) throw Error("projection config: d_in must be >= 1");
        if (d_out == 0 || d_out > d_in)
            throw Error("projection config: d_out must be in [1, d_in]");
        if (kind == HeadKind::ffn2 && intermediate_factor == 0)
            throw Error("projection config: intermediate_factor must be >= 1");
    }
};

/// Parameters of a projection head. Linear heads use w1 (d_in x d_out) and
/// b1 (1 x d_out); ffn2 heads use w1/b1 for the first layer and w2/b2 for
/// the second. `res` holds the residual adapter when one is configured.
struct ProjectionHead {
    ProjectionConfig config;
    TokenMatrix w1, b1, w2, b2;
    TokenMatrix res;
};

/// Gradients of a forward pass, matching the head's parameter layout, plus
/// the gradient with respect to the input matrix.
struct ProjectionGrads {
    TokenMatrix w1, b1, w2, b2;
    TokenMatrix res;
    TokenMatrix input;
};

// ---------------------------------------------------------------------------
// SiLU
// ---------------------------------------------------------------------------

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double silu_grad(double x) {
    double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

// ---------------------------------------------------------------------------
// Dense helpers (double precision, row-major)
// ---------------------------------------------------------------------------

namespace detail {

inline TokenMatrix matmul(const TokenMatrix& a, const TokenMatrix& b) {
    TokenMatrix out(a.rows, b.dim);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.dim; ++k) {
            double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.dim; ++j) out.at(i, j) += aik * b.at(k, j);
        }
    return out;
}

// A^T * B where A is n x k and B is n x m.
inline TokenMatrix matmul_at_b(const TokenMatrix& a, const TokenMatrix& b) {
    TokenMatrix out(a.dim, b.dim);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.dim; ++k) {
            double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.dim; ++j) out.at(k, j) += aik * b.at(i, j);
        }
    return out;
}

// A * B^T where A is n x k and B is m x k.
inline TokenMatrix matmul_a_bt(const TokenMatrix& a, const TokenMatrix& b) {
    TokenMatrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.rows; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.dim; ++k) acc += a.at(i, k) * b.at(j, k);
            out.at(i, j) = acc;
        }
    return out;
}

inline TokenMatrix colsum(const TokenMatrix& a) {
    TokenMatrix out(1, a.dim);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.dim; ++j) out.at(0, j) += a.at(i, j);
    return out;
}

inline void add_bias_rows(TokenMatrix& m, const TokenMatrix& bias) {
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.dim; ++j) m.at(i, j) += bias.at(0, j);
}

inline void add_into(TokenMatrix& dst, const TokenMatrix& src) {
    for (std::size_t i = 0; i < dst.values.size(); ++i) dst.values[i] += src.values[i];
}

inline void check_head_shapes(const ProjectionHead& head) {
    const auto& c = head.config;
    c.check();
    auto expect = [](const TokenMatrix& m, std::size_t r, std::size_t d, const char* name) {
        if (m.rows != r || m.dim != d || m.values.size() != r * d)
            throw Error(std::string("projection head: bad shape for ") + name);
        for (double v : m.values)
            if (!std::isfinite(v))
                throw Error(std::string("projection head: non-finite value in ") + name);
    };
    if (c.kind == HeadKind::linear) {
        expect(head.w1, c.d_in, c.d_out, "W");
        expect(head.b1, 1, c.d_out, "b");
    } else {
        expect(head.w1, c.d_in, c.hidden(), "W1");
        expect(head.b1, 1, c.hidden(), "b1");
        expect(head.w2, c.hidden(), c.d_out, "W2");
        expect(head.b2, 1, c.d_out, "b2");
    }
    if (c.needs_adapter()) expect(head.res, c.d_in, c.d_out, "residual adapter");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

inline TokenMatrix project_forward(const ProjectionHead& head, const TokenMatrix& x) {
    detail::check_head_shapes(head);
    x.check("projection input");
    const auto& c = head.config;
    if (x.dim != c.d_in)
        throw Error("project_forward: input dim " + std::to_string(x.dim) + " != d_in " +
                    std::to_string(c.d_in));

    TokenMatrix y;
    if (c.kind == HeadKind::linear) {
        y = detail::matmul(x, head.w1);
        detail::add_bias_rows(y, head.b1);
    } else {
        TokenMatrix h = detail::matmul(x, head.w1);
        detail::add_bias_rows(h, head.b1);
        for (auto& v : h.values) v = silu(v);
        y = detail::matmul(h, head.w2);
        detail::add_bias_rows(y, head.b2);
    }
    if (c.residual) {
        if (c.needs_adapter()) {
            detail::add_into(y, detail::matmul(x, head.res));
        } else {
            detail::add_into(y, x);
        }
    }
    return y;
}

/// Exact analytic gradients of project_forward with respect to every
/// parameter and the input, given the upstream gradient dL/dY.
inline ProjectionGrads project_backward(const ProjectionHead& head, const TokenMatrix& x,
                                        const TokenMatrix& upstream) {
    detail::check_head_shapes(head);
    x.check("projection input");
    upstream.check("upstream gradient");
    const auto& c = head.config;
    if (x.dim != c.d_in)
        throw Error("project_backward: input dim " + std::to_string(x.dim) + " != d_in " +
                    std::to_string(c.d_in));
    if (upstream.rows != x.rows || upstream.dim != c.d_out)
        throw Error("project_backward: upstream gradient shape mismatch");

    ProjectionGrads g;
    if (c.kind == HeadKind::linear) {
        g.w1 = detail::matmul_at_b(x, upstream);
        g.b1 = detail::colsum(upstream);
        g.input = detail::matmul_a_bt(upstream, head.w1);
    } else {
        TokenMatrix h_pre = detail::matmul(x, head.w1);
        detail::add_bias_rows(h_pre, head.b1);
        TokenMatrix h = h_pre;
        for (auto& v : h.values) v = silu(v);

        g.w2 = detail::matmul_at_b(h, upstream);
        g.b2 = detail::colsum(upstream);

        TokenMatrix dh = detail::matmul_a_bt(upstream, head.w2);
        for (std::size_t i = 0; i < dh.values.size(); ++i)
            dh.values[i] *= silu_grad(h_pre.values[i]);

        g.w1 = detail::matmul_at_b(x, dh);
        g.b1 = detail::colsum(dh);
        g.input = detail::matmul_a_bt(dh, head.w1);
    }
    if (c.residual) {
        if (c.needs_adapter()) {
            g.res = detail::matmul_at_b(x, upstream);
            detail::add_into(g.input, detail::matmul_a_bt(upstream, head.res));
        } else {
            detail::add_into(g.input, upstream);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
/// Parameters are drawn from one SplitMix64 stream in a fixed order
/// (W1, W2, adapter), so equal seeds give identical heads.
inline ProjectionHead init_head(const ProjectionConfig& config, Seed seed) {
    config.check();
    ProjectionHead head;
    head.config = config;
    SplitMix64 rng(seed);
    auto xavier = [&rng](std::size_t fan_in, std::size_t fan_out) {
        TokenMatrix m(fan_in, fan_out);
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (auto& v : m.values) v = bound * (2.0 * rng.next_double() - 1.0);
        return m;
    };
    if (config.kind == HeadKind::linear) {
        head.w1 = xavier(config.d_in, config.d_out);
        head.b1 = TokenMatrix(1, config.d_out);
    } else {
        head.w1 = xavier(config.d_in, config.hidden());
        head.b1 = TokenMatrix(1, config.hidden());
        head.w2 = xavier(config.hidden(), config.d_out);
        head.b2 = TokenMatrix(1, config.d_out);
    }
    if (config.needs_adapter()) head.res = xavier(config.d_in, config.d_out);
    return head;
}

// ---------------------------------------------------------------------------
// Persistence ("MVPH")
// ---------------------------------------------------------------------------
//
// magic "MVPH" | u8 kind | u16 LE d_in | u16 LE d_out | u16 LE
// intermediate_factor | u8 residual | parameters as little-endian float32,
// row-major, in order W1,b1,W2,b2 (ffn2) or W,b (linear), followed by the
// residual adapter when the head has one.

inline void save_head(const ProjectionHead& head, const std::string& path) {
    detail::check_head_shapes(head);
    const auto& c = head.config;
    std::string out;
    out.append("MVPH");
    io::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(c.kind));
    io::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(c.d_in));
    io::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(c.d_out));
    io::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(c.intermediate_factor));
    io::put_le<std::uint8_t>(out, c.residual ? 1 : 0);
    auto put_params = [&out](const TokenMatrix& m) {
        for (double v : m.values) io::put_f32_le(out, static_cast<float>(v));
    };
    put_params(head.w1);
    put_params(head.b1);
    if (c.kind == HeadKind::ffn2) {
        put_params(head.w2);
        put_params(head.b2);
    }
    if (c.needs_adapter()) put_params(head.res);
    io::write_file(path, out);
}

inline ProjectionHead load_head(const std::string& path) {
    std::string data = io::read_file(path);
    io::Reader r(data, path);
    if (data.size() < 4 || r.get_bytes(4) != "MVPH") throw Error(path + ": bad magic");
    ProjectionHead head;
    auto kind_code = r.get_le<std::uint8_t>();
    if (kind_code > 1) throw Error(path + ": invalid head kind code");
    head.config.kind = static_cast<HeadKind>(kind_code);
    head.config.d_in = r.get_le<std::uint16_t>();
    head.config.d_out = r.get_le<std::uint16_t>();
    head.config.intermediate_factor = r.get_le<std::uint16_t>();
    head.config.residual = r.get_le<std::uint8_t>() != 0;
    head.config.check();
    auto get_params = [&r](std::size_t rows, std::size_t cols) {
        TokenMatrix m(rows, cols);
        for (auto& v : m.values) v = static_cast<double>(r.get_f32_le());
        return m;
    };
    const auto& c = head.config;
    if (c.kind == HeadKind::linear) {
        head.w1 = get_params(c.d_in, c.d_out);
        head.b1 = get_params(1, c.d_out);
    } else {
        head.w1 = get_params(c.d_in, c.hidden());
        head.b1 = get_params(1, c.hidden());
        head.w2 = get_params(c.hidden(), c.d_out);
        head.b2 = get_params(1, c.d_out);
    }
    if (c.needs_adapter()) head.res = get_params(c.d_in, c.d_out);
    if (!r.at_end()) throw Error(path + ": trailing bytes");
    detail::check_head_shapes(head);
    return head;
}

}  // namespace lir
