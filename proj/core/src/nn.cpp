#include "cobra/nn.hpp"

#include <cmath>

namespace cobra::nn {

using namespace cobra::ops;

Linear::Linear(int in, int out, Rng& rng, float init_std)
    : w(Tensor::randn({in, out}, rng, init_std, true)),
      b(Tensor::zeros({1, out}, true)) {}

Tensor Linear::operator()(const Tensor& x) const {
    return add_rowvec(matmul(x, w), b);
}

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".w", w);
    fn(prefix + ".b", b);
}

LayerNorm::LayerNorm(int dim)
    : gamma(Tensor::full({1, dim}, 1.0f, true)),
      beta(Tensor::zeros({1, dim}, true)) {}

Tensor LayerNorm::operator()(const Tensor& x) const {
    return add_rowvec(mul_rowvec(layer_norm_rows(x), gamma), beta);
}

void LayerNorm::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".gamma", gamma);
    fn(prefix + ".beta", beta);
}

MultiHeadAttention::MultiHeadAttention(int dim, int n_heads, Rng& rng)
    : wq(dim, dim, rng), wk(dim, dim, rng), wv(dim, dim, rng), wo(dim, dim, rng),
      heads(n_heads), head_dim(dim / n_heads) {
    if (dim % n_heads != 0)
        throw ParameterError("attention dim must be divisible by head count");
}

Tensor MultiHeadAttention::operator()(const Tensor& q_in, const Tensor& kv_in) const {
    const Tensor q = wq(q_in);
    const Tensor k = wk(kv_in);
    const Tensor v = wv(kv_in);
    const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
    std::vector<Tensor> head_outs;
    head_outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const Tensor qh = slice_cols(q, h * head_dim, head_dim);
        const Tensor kh = slice_cols(k, h * head_dim, head_dim);
        const Tensor vh = slice_cols(v, h * head_dim, head_dim);
        const Tensor scores = affine(matmul(qh, transpose(kh)), scale, 0.0f);
        head_outs.push_back(matmul(softmax_rows(scores, 1.0f), vh));
    }
    return wo(concat_cols(head_outs));
}

void MultiHeadAttention::visit(const std::string& prefix, const ParamVisitor& fn) {
    wq.visit(prefix + ".wq", fn);
    wk.visit(prefix + ".wk", fn);
    wv.visit(prefix + ".wv", fn);
    wo.visit(prefix + ".wo", fn);
}

FeedForward::FeedForward(int dim, int hidden, Rng& rng)
    : fc1(dim, hidden, rng), fc2(hidden, dim, rng) {}

Tensor FeedForward::operator()(const Tensor& x) const {
    return fc2(gelu(fc1(x)));
}

void FeedForward::visit(const std::string& prefix, const ParamVisitor& fn) {
    fc1.visit(prefix + ".fc1", fn);
    fc2.visit(prefix + ".fc2", fn);
}

EncoderBlock::EncoderBlock(int dim, int heads, int mlp_hidden, Rng& rng)
    : ln1(dim), ln2(dim), attn(dim, heads, rng), ff(dim, mlp_hidden, rng) {}

Tensor EncoderBlock::operator()(const Tensor& x) const {
    const Tensor normed = ln1(x);
    const Tensor a = add(x, attn(normed, normed));
    return add(a, ff(ln2(a)));
}

void EncoderBlock::visit(const std::string& prefix, const ParamVisitor& fn) {
    ln1.visit(prefix + ".ln1", fn);
    attn.visit(prefix + ".attn", fn);
    ln2.visit(prefix + ".ln2", fn);
    ff.visit(prefix + ".ff", fn);
}

DecoderBlock::DecoderBlock(int dim, int heads, int mlp_hidden, Rng& rng)
    : ln1(dim), ln2(dim), ln3(dim),
      self_attn(dim, heads, rng), cross_attn(dim, heads, rng), ff(dim, mlp_hidden, rng) {}

Tensor DecoderBlock::operator()(const Tensor& x, const Tensor& memory) const {
    const Tensor n1 = ln1(x);
    const Tensor a = add(x, self_attn(n1, n1));
    const Tensor b = add(a, cross_attn(ln2(a), memory));
    return add(b, ff(ln3(b)));
}

void DecoderBlock::visit(const std::string& prefix, const ParamVisitor& fn) {
    ln1.visit(prefix + ".ln1", fn);
    self_attn.visit(prefix + ".self_attn", fn);
    ln2.visit(prefix + ".ln2", fn);
    cross_attn.visit(prefix + ".cross_attn", fn);
    ln3.visit(prefix + ".ln3", fn);
    ff.visit(prefix + ".ff", fn);
}

}  // namespace cobra::nn
