// Minimal forward-pass attention blocks: multi-head self-attention without
// positional encoding, layer norm, and a pre-norm transformer layer.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "capsroute/capsules.hpp"
#include "capsroute/params.hpp"
#include "capsroute/tensor.hpp"

namespace capsroute {

/// x: V x d_in, w: d_out x d_in, b: d_out (may be empty) -> V x d_out.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = Tensor{}) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1)) {
        throw shape_error("linear: input width must match weight width");
    }
    const std::size_t rows = x.dim(0);
    const std::size_t d_out = w.dim(0);
    const std::size_t d_in = x.dim(1);
    const bool has_bias = b.rank() == 1;
    if (has_bias && b.dim(0) != d_out) throw shape_error("linear: bias length mismatch");

    Tensor y({rows, d_out});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < d_out; ++o) {
            double acc = has_bias ? b(o) : 0.0;
            for (std::size_t k = 0; k < d_in; ++k) acc += w(o, k) * x(r, k);
            y(r, o) = acc;
        }
    }
    return y;
}

/// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& x) {
    Tensor y(x.shape());
    const std::size_t rows = x.dim(0);
    const std::size_t cols = x.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = x(r, 0);
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x(r, c));
        double norm = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double e = std::exp(x(r, c) - mx);
            y(r, c) = e;
            norm += e;
        }
        for (std::size_t c = 0; c < cols; ++c) y(r, c) /= norm;
    }
    return y;
}

struct MsaParams {
    Tensor w_q, w_k, w_v, w_o;  // d x d each
    std::size_t heads = 4;

    static MsaParams seeded(const ParamBundle& params, const std::string& prefix,
                            std::size_t dim, std::size_t heads) {
        MsaParams m;
        m.w_q = params.uniform(prefix + ".w_q", {dim, dim}, dim);
        m.w_k = params.uniform(prefix + ".w_k", {dim, dim}, dim);
        m.w_v = params.uniform(prefix + ".w_v", {dim, dim}, dim);
        m.w_o = params.uniform(prefix + ".w_o", {dim, dim}, dim);
        m.heads = heads;
        return m;
    }
};

inline Tensor multi_head_self_attention(const Tensor& x, const MsaParams& p) {
    if (x.rank() != 2) throw shape_error("multi_head_self_attention: input must be V x d");
    const std::size_t v_len = x.dim(0);
    const std::size_t dim = x.dim(1);
    if (p.heads == 0 || dim % p.heads != 0) {
        throw std::invalid_argument("multi_head_self_attention: heads must divide token dim");
    }
    const std::size_t head_dim = dim / p.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    const Tensor q = linear(x, p.w_q);
    const Tensor k = linear(x, p.w_k);
    const Tensor v = linear(x, p.w_v);

    Tensor mixed({v_len, dim});
    for (std::size_t h = 0; h < p.heads; ++h) {
        const std::size_t base = h * head_dim;
        Tensor logits({v_len, v_len});
        for (std::size_t a = 0; a < v_len; ++a) {
            for (std::size_t b = 0; b < v_len; ++b) {
                double acc = 0.0;
                for (std::size_t c = 0; c < head_dim; ++c) {
                    acc += q(a, base + c) * k(b, base + c);
                }
                logits(a, b) = acc * scale;
            }
        }
        const Tensor weights = softmax_rows(logits);
        for (std::size_t a = 0; a < v_len; ++a) {
            for (std::size_t c = 0; c < head_dim; ++c) {
                double acc = 0.0;
                for (std::size_t b = 0; b < v_len; ++b) {
                    acc += weights(a, b) * v(b, base + c);
                }
                mixed(a, base + c) = acc;
            }
        }
    }
    return linear(mixed, p.w_o);
}

struct LayerNormParams {
    Tensor gamma, beta;  // d each
    double eps = 1e-5;

    static LayerNormParams identity(std::size_t dim) {
        LayerNormParams p;
        p.gamma = Tensor({dim}, 1.0);
        p.beta = Tensor({dim}, 0.0);
        return p;
    }
};

inline Tensor layer_norm(const Tensor& x, const LayerNormParams& p) {
    const std::size_t rows = x.dim(0);
    const std::size_t dim = x.dim(1);
    require_shape(p.gamma, {dim}, "layer_norm: gamma");
    Tensor y({rows, dim});
    for (std::size_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < dim; ++c) mean += x(r, c);
        mean /= static_cast<double>(dim);
        double var = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            const double d = x(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(dim);
        const double inv = 1.0 / std::sqrt(var + p.eps);
        for (std::size_t c = 0; c < dim; ++c) {
            y(r, c) = p.gamma(c) * ((x(r, c) - mean) * inv) + p.beta(c);
        }
    }
    return y;
}

struct FeedForwardParams {
    Tensor w1, b1;  // f x d, f
    Tensor w2, b2;  // d x f, d
};

struct TransformerLayerParams {
    LayerNormParams ln1, ln2;
    MsaParams msa;
    FeedForwardParams ffn;

    static TransformerLayerParams seeded(const ParamBundle& params, const std::string& prefix,
                                         std::size_t dim, std::size_t heads) {
        TransformerLayerParams p;
        const std::size_t hidden = 2 * dim;
        p.ln1 = LayerNormParams::identity(dim);
        p.ln2 = LayerNormParams::identity(dim);
        p.msa = MsaParams::seeded(params, prefix + ".msa", dim, heads);
        p.ffn.w1 = params.uniform(prefix + ".ffn.w1", {hidden, dim}, dim);
        p.ffn.b1 = params.uniform(prefix + ".ffn.b1", {hidden}, dim);
        p.ffn.w2 = params.uniform(prefix + ".ffn.w2", {dim, hidden}, hidden);
        p.ffn.b2 = params.uniform(prefix + ".ffn.b2", {dim}, hidden);
        return p;
    }
};

/// Pre-norm residual pair: x + MSA(LN(x)), then x + FFN(LN(x)).
inline Tensor transformer_layer(const Tensor& x, const TransformerLayerParams& p) {
    Tensor attn = multi_head_self_attention(layer_norm(x, p.ln1), p.msa);
    Tensor mid(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) mid.data()[i] = x.data()[i] + attn.data()[i];

    Tensor hidden = linear(layer_norm(mid, p.ln2), p.ffn.w1, p.ffn.b1);
    for (double& h : hidden.data()) h = relu(h);
    Tensor out = linear(hidden, p.ffn.w2, p.ffn.b2);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += mid.data()[i];
    return out;
}

}  // namespace capsroute
