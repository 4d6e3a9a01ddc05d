#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cobra/ops.hpp"
#include "cobra/rng.hpp"
#include "cobra/tensor.hpp"

namespace cobra::nn {

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

struct Linear {
    Tensor w;  // in x out
    Tensor b;  // 1 x out

    Linear() = default;
    Linear(int in, int out, Rng& rng, float init_std = 0.02f);
    Tensor operator()(const Tensor& x) const;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct LayerNorm {
    Tensor gamma;  // 1 x dim
    Tensor beta;   // 1 x dim

    LayerNorm() = default;
    explicit LayerNorm(int dim);
    Tensor operator()(const Tensor& x) const;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct MultiHeadAttention {
    Linear wq, wk, wv, wo;
    int heads = 1;
    int head_dim = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(int dim, int heads, Rng& rng);
    // q_in attends over kv_in (self-attention when they coincide).
    Tensor operator()(const Tensor& q_in, const Tensor& kv_in) const;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct FeedForward {
    Linear fc1, fc2;

    FeedForward() = default;
    FeedForward(int dim, int hidden, Rng& rng);
    Tensor operator()(const Tensor& x) const;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Pre-norm encoder block: x + Attn(LN(x)), then x + FF(LN(x)).
struct EncoderBlock {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    FeedForward ff;

    EncoderBlock() = default;
    EncoderBlock(int dim, int heads, int mlp_hidden, Rng& rng);
    Tensor operator()(const Tensor& x) const;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Pre-norm decoder block with cross-attention over an encoded memory.
struct DecoderBlock {
    LayerNorm ln1, ln2, ln3;
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ff;

    DecoderBlock() = default;
    DecoderBlock(int dim, int heads, int mlp_hidden, Rng& rng);
    Tensor operator()(const Tensor& x, const Tensor& memory) const;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

}  // namespace cobra::nn
