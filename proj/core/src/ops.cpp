#include "cobra/ops.hpp"

#include <algorithm>
#include <cmath>

namespace cobra::ops {

namespace {

NodePtr make_node(std::vector<int> shape, std::vector<NodePtr> parents) {
    auto n = std::make_shared<Node>();
    n->data.resize(static_cast<size_t>(shape_size(shape)));
    n->shape = std::move(shape);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

bool needs(const NodePtr& p) { return p->requires_grad; }

void check_2d(const Tensor& t, const char* name) {
    if (!t.defined() || t.shape().size() != 2)
        throw DimensionError(std::string(name) + ": expected a 2D tensor");
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw DimensionError("matmul: inner dimensions disagree (" + std::to_string(k) +
                             " vs " + std::to_string(b.rows()) + ")");
    auto out = make_node({m, n}, {a.node(), b.node()});
    const float* ad = a.data().data();
    const float* bd = b.data().data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t)
                acc += static_cast<double>(ad[i * k + t]) * bd[t * n + j];
            out->data[static_cast<size_t>(i) * n + j] = static_cast<float>(acc);
        }
    auto pa = a.node(), pb = b.node();
    out->backward_fn = [pa, pb, m, k, n](Node& o) {
        const float* g = o.grad.data();
        if (needs(pa)) {
            pa->ensure_grad();
            const float* bd = pb->data.data();
            for (int i = 0; i < m; ++i)
                for (int t = 0; t < k; ++t) {
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j)
                        acc += static_cast<double>(g[i * n + j]) * bd[t * n + j];
                    pa->grad[static_cast<size_t>(i) * k + t] += static_cast<float>(acc);
                }
        }
        if (needs(pb)) {
            pb->ensure_grad();
            const float* ad = pa->data.data();
            for (int t = 0; t < k; ++t)
                for (int j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < m; ++i)
                        acc += static_cast<double>(ad[i * k + t]) * g[i * n + j];
                    pb->grad[static_cast<size_t>(t) * n + j] += static_cast<float>(acc);
                }
        }
    };
    return Tensor(out);
}

Tensor transpose(const Tensor& a) {
    check_2d(a, "transpose");
    const int r = a.rows(), c = a.cols();
    auto out = make_node({c, r}, {a.node()});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            out->data[static_cast<size_t>(j) * r + i] = a.data()[static_cast<size_t>(i) * c + j];
    auto pa = a.node();
    out->backward_fn = [pa, r, c](Node& o) {
        if (!needs(pa)) return;
        pa->ensure_grad();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                pa->grad[static_cast<size_t>(i) * c + j] += o.grad[static_cast<size_t>(j) * r + i];
    };
    return Tensor(out);
}

namespace {

Tensor elementwise_pair(const Tensor& a, const Tensor& b, const char* name,
                        float (*fwd)(float, float),
                        void (*bwd)(const Node&, const NodePtr&, const NodePtr&)) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(name) + ": shape mismatch");
    auto out = make_node(a.shape(), {a.node(), b.node()});
    for (size_t i = 0; i < out->data.size(); ++i)
        out->data[i] = fwd(a.data()[i], b.data()[i]);
    auto pa = a.node(), pb = b.node();
    out->backward_fn = [pa, pb, bwd](Node& o) { bwd(o, pa, pb); };
    return Tensor(out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise_pair(
        a, b, "add", [](float x, float y) { return x + y; },
        [](const Node& o, const NodePtr& pa, const NodePtr& pb) {
            if (needs(pa)) {
                pa->ensure_grad();
                for (size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
            }
            if (needs(pb)) {
                pb->ensure_grad();
                for (size_t i = 0; i < o.grad.size(); ++i) pb->grad[i] += o.grad[i];
            }
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise_pair(
        a, b, "sub", [](float x, float y) { return x - y; },
        [](const Node& o, const NodePtr& pa, const NodePtr& pb) {
            if (needs(pa)) {
                pa->ensure_grad();
                for (size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
            }
            if (needs(pb)) {
                pb->ensure_grad();
                for (size_t i = 0; i < o.grad.size(); ++i) pb->grad[i] -= o.grad[i];
            }
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise_pair(
        a, b, "mul", [](float x, float y) { return x * y; },
        [](const Node& o, const NodePtr& pa, const NodePtr& pb) {
            if (needs(pa)) {
                pa->ensure_grad();
                for (size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i] * pb->data[i];
            }
            if (needs(pb)) {
                pb->ensure_grad();
                for (size_t i = 0; i < o.grad.size(); ++i) pb->grad[i] += o.grad[i] * pa->data[i];
            }
        });
}

namespace {

Tensor rowvec_pair(const Tensor& a, const Tensor& row, const char* name, bool multiply) {
    check_2d(a, name);
    check_2d(row, name);
    if (row.rows() != 1 || row.cols() != a.cols())
        throw DimensionError(std::string(name) + ": row vector must be 1x" +
                             std::to_string(a.cols()));
    const int r = a.rows(), c = a.cols();
    auto out = make_node({r, c}, {a.node(), row.node()});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
            const float x = a.data()[static_cast<size_t>(i) * c + j];
            const float y = row.data()[j];
            out->data[static_cast<size_t>(i) * c + j] = multiply ? x * y : x + y;
        }
    auto pa = a.node(), pr = row.node();
    out->backward_fn = [pa, pr, r, c, multiply](Node& o) {
        if (needs(pa)) {
            pa->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) {
                    const size_t idx = static_cast<size_t>(i) * c + j;
                    pa->grad[idx] += multiply ? o.grad[idx] * pr->data[j] : o.grad[idx];
                }
        }
        if (needs(pr)) {
            pr->ensure_grad();
            for (int j = 0; j < c; ++j) {
                double acc = 0.0;
                for (int i = 0; i < r; ++i) {
                    const size_t idx = static_cast<size_t>(i) * c + j;
                    acc += multiply ? static_cast<double>(o.grad[idx]) * pa->data[idx]
                                    : static_cast<double>(o.grad[idx]);
                }
                pr->grad[j] += static_cast<float>(acc);
            }
        }
    };
    return Tensor(out);
}

}  // namespace

Tensor add_rowvec(const Tensor& a, const Tensor& row) { return rowvec_pair(a, row, "add_rowvec", false); }
Tensor mul_rowvec(const Tensor& a, const Tensor& row) { return rowvec_pair(a, row, "mul_rowvec", true); }

namespace {

// Unary elementwise op: fwd(x) and local derivative d(x, y).
template <typename F, typename G>
Tensor unary(const Tensor& a, F fwd, G dfn) {
    auto out = make_node(a.shape(), {a.node()});
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = fwd(a.data()[i]);
    auto pa = a.node();
    out->backward_fn = [pa, dfn](Node& o) {
        if (!needs(pa)) return;
        pa->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i)
            pa->grad[i] += o.grad[i] * dfn(pa->data[i], o.data[i]);
    };
    return Tensor(out);
}

}  // namespace

Tensor affine(const Tensor& a, float scale, float shift) {
    return unary(
        a, [scale, shift](float x) { return scale * x + shift; },
        [scale](float, float) { return scale; });
}

Tensor relu(const Tensor& a) {
    return unary(
        a, [](float x) { return x > 0.0f ? x : 0.0f; },
        [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor gelu(const Tensor& a) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    return unary(
        a,
        [](float xf) {
            const double x = xf;
            const double t = std::tanh(kC * (x + kA * x * x * x));
            return static_cast<float>(0.5 * x * (1.0 + t));
        },
        [](float xf, float) {
            const double x = xf;
            const double u = kC * (x + kA * x * x * x);
            const double t = std::tanh(u);
            const double du = kC * (1.0 + 3.0 * kA * x * x);
            return static_cast<float>(0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
        });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        a,
        [](float x) {
            return x >= 0.0f ? 1.0f / (1.0f + std::exp(-x))
                             : std::exp(x) / (1.0f + std::exp(x));
        },
        [](float, float y) { return y * (1.0f - y); });
}

Tensor log(const Tensor& a) {
    return unary(
        a, [](float x) { return std::log(x); },
        [](float x, float) { return 1.0f / x; });
}

Tensor sqrt(const Tensor& a) {
    return unary(
        a, [](float x) { return std::sqrt(x); },
        [](float, float y) { return 0.5f / y; });
}

Tensor clamp(const Tensor& a, float lo, float hi) {
    return unary(
        a, [lo, hi](float x) { return std::min(std::max(x, lo), hi); },
        [lo, hi](float x, float) { return (x > lo && x < hi) ? 1.0f : 0.0f; });
}

Tensor softmax_rows(const Tensor& a, float temperature) {
    check_2d(a, "softmax_rows");
    if (!(temperature > 0.0f))
        throw ParameterError("softmax_rows: temperature must be positive");
    const int r = a.rows(), c = a.cols();
    auto out = make_node({r, c}, {a.node()});
    for (int i = 0; i < r; ++i) {
        const float* x = a.data().data() + static_cast<size_t>(i) * c;
        float* y = out->data.data() + static_cast<size_t>(i) * c;
        float mx = x[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            y[j] = std::exp((x[j] - mx) / temperature);
            sum += y[j];
        }
        for (int j = 0; j < c; ++j) y[j] = static_cast<float>(y[j] / sum);
    }
    auto pa = a.node();
    out->backward_fn = [pa, r, c, temperature](Node& o) {
        if (!needs(pa)) return;
        pa->ensure_grad();
        for (int i = 0; i < r; ++i) {
            const float* y = o.data.data() + static_cast<size_t>(i) * c;
            const float* g = o.grad.data() + static_cast<size_t>(i) * c;
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += static_cast<double>(g[j]) * y[j];
            for (int j = 0; j < c; ++j)
                pa->grad[static_cast<size_t>(i) * c + j] +=
                    static_cast<float>(y[j] * (g[j] - dot) / temperature);
        }
    };
    return Tensor(out);
}

Tensor log_softmax_rows(const Tensor& a) {
    check_2d(a, "log_softmax_rows");
    const int r = a.rows(), c = a.cols();
    auto out = make_node({r, c}, {a.node()});
    for (int i = 0; i < r; ++i) {
        const float* x = a.data().data() + static_cast<size_t>(i) * c;
        float* y = out->data.data() + static_cast<size_t>(i) * c;
        float mx = x[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(static_cast<double>(x[j]) - mx);
        const double lse = mx + std::log(sum);
        for (int j = 0; j < c; ++j) y[j] = static_cast<float>(x[j] - lse);
    }
    auto pa = a.node();
    out->backward_fn = [pa, r, c](Node& o) {
        if (!needs(pa)) return;
        pa->ensure_grad();
        for (int i = 0; i < r; ++i) {
            const float* y = o.data.data() + static_cast<size_t>(i) * c;
            const float* g = o.grad.data() + static_cast<size_t>(i) * c;
            double gsum = 0.0;
            for (int j = 0; j < c; ++j) gsum += g[j];
            for (int j = 0; j < c; ++j)
                pa->grad[static_cast<size_t>(i) * c + j] +=
                    static_cast<float>(g[j] - std::exp(static_cast<double>(y[j])) * gsum);
        }
    };
    return Tensor(out);
}

Tensor layer_norm_rows(const Tensor& a, float eps) {
    check_2d(a, "layer_norm_rows");
    const int r = a.rows(), c = a.cols();
    auto out = make_node({r, c}, {a.node()});
    std::vector<float> inv_std(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) {
        const float* x = a.data().data() + static_cast<size_t>(i) * c;
        double mean = 0.0;
        for (int j = 0; j < c; ++j) mean += x[j];
        mean /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= c;
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(i)] = static_cast<float>(inv);
        for (int j = 0; j < c; ++j)
            out->data[static_cast<size_t>(i) * c + j] = static_cast<float>((x[j] - mean) * inv);
    }
    auto pa = a.node();
    out->backward_fn = [pa, r, c, inv_std = std::move(inv_std)](Node& o) {
        if (!needs(pa)) return;
        pa->ensure_grad();
        for (int i = 0; i < r; ++i) {
            const float* xh = o.data.data() + static_cast<size_t>(i) * c;
            const float* g = o.grad.data() + static_cast<size_t>(i) * c;
            double gmean = 0.0, gxmean = 0.0;
            for (int j = 0; j < c; ++j) {
                gmean += g[j];
                gxmean += static_cast<double>(g[j]) * xh[j];
            }
            gmean /= c;
            gxmean /= c;
            const double inv = inv_std[static_cast<size_t>(i)];
            for (int j = 0; j < c; ++j)
                pa->grad[static_cast<size_t>(i) * c + j] +=
                    static_cast<float>(inv * (g[j] - gmean - xh[j] * gxmean));
        }
    };
    return Tensor(out);
}

Tensor mean_pool_rows(const Tensor& a) {
    check_2d(a, "mean_pool_rows");
    const int r = a.rows(), c = a.cols();
    auto out = make_node({1, c}, {a.node()});
    for (int j = 0; j < c; ++j) {
        double acc = 0.0;
        for (int i = 0; i < r; ++i) acc += a.data()[static_cast<size_t>(i) * c + j];
        out->data[static_cast<size_t>(j)] = static_cast<float>(acc / r);
    }
    auto pa = a.node();
    out->backward_fn = [pa, r, c](Node& o) {
        if (!needs(pa)) return;
        pa->ensure_grad();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                pa->grad[static_cast<size_t>(i) * c + j] += o.grad[static_cast<size_t>(j)] / r;
    };
    return Tensor(out);
}

Tensor sum_all(const Tensor& a) {
    auto out = make_node({1, 1}, {a.node()});
    double acc = 0.0;
    for (float x : a.data()) acc += x;
    out->data[0] = static_cast<float>(acc);
    auto pa = a.node();
    out->backward_fn = [pa](Node& o) {
        if (!needs(pa)) return;
        pa->ensure_grad();
        for (auto& g : pa->grad) g += o.grad[0];
    };
    return Tensor(out);
}

Tensor mean_all(const Tensor& a) {
    const auto n = static_cast<float>(a.size());
    return affine(sum_all(a), 1.0f / n, 0.0f);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty input list");
    const int c = parts.front().cols();
    int rows = 0;
    std::vector<NodePtr> parents;
    for (const auto& p : parts) {
        check_2d(p, "concat_rows");
        if (p.cols() != c) throw DimensionError("concat_rows: column mismatch");
        rows += p.rows();
        parents.push_back(p.node());
    }
    auto out = make_node({rows, c}, parents);
    size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out->data.begin() + off);
        off += p.data().size();
    }
    out->backward_fn = [c](Node& o) {
        size_t off = 0;
        for (auto& p : o.parents) {
            if (needs(p)) {
                p->ensure_grad();
                for (size_t i = 0; i < p->data.size(); ++i) p->grad[i] += o.grad[off + i];
            }
            off += p->data.size();
        }
    };
    return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: empty input list");
    const int r = parts.front().rows();
    int cols = 0;
    std::vector<NodePtr> parents;
    std::vector<int> widths;
    for (const auto& p : parts) {
        check_2d(p, "concat_cols");
        if (p.rows() != r) throw DimensionError("concat_cols: row mismatch");
        widths.push_back(p.cols());
        cols += p.cols();
        parents.push_back(p.node());
    }
    auto out = make_node({r, cols}, parents);
    int coff = 0;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
        const int w = widths[pi];
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j)
                out->data[static_cast<size_t>(i) * cols + coff + j] =
                    parts[pi].data()[static_cast<size_t>(i) * w + j];
        coff += w;
    }
    out->backward_fn = [r, cols, widths](Node& o) {
        int coff = 0;
        for (size_t pi = 0; pi < o.parents.size(); ++pi) {
            auto& p = o.parents[pi];
            const int w = widths[pi];
            if (needs(p)) {
                p->ensure_grad();
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < w; ++j)
                        p->grad[static_cast<size_t>(i) * w + j] +=
                            o.grad[static_cast<size_t>(i) * cols + coff + j];
            }
            coff += w;
        }
    };
    return Tensor(out);
}

Tensor slice_cols(const Tensor& a, int start, int len) {
    check_2d(a, "slice_cols");
    const int r = a.rows(), c = a.cols();
    if (start < 0 || len <= 0 || start + len > c)
        throw IndexError("slice_cols: range out of bounds");
    auto out = make_node({r, len}, {a.node()});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < len; ++j)
            out->data[static_cast<size_t>(i) * len + j] =
                a.data()[static_cast<size_t>(i) * c + start + j];
    auto pa = a.node();
    out->backward_fn = [pa, r, c, start, len](Node& o) {
        if (!needs(pa)) return;
        pa->ensure_grad();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < len; ++j)
                pa->grad[static_cast<size_t>(i) * c + start + j] +=
                    o.grad[static_cast<size_t>(i) * len + j];
    };
    return Tensor(out);
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& indices) {
    check_2d(a, "gather_rows");
    const int r = a.rows(), c = a.cols();
    for (int idx : indices)
        if (idx < 0 || idx >= r)
            throw IndexError("gather_rows: index " + std::to_string(idx) +
                             " out of range [0, " + std::to_string(r) + ")");
    auto out = make_node({static_cast<int>(indices.size()), c}, {a.node()});
    for (size_t i = 0; i < indices.size(); ++i)
        std::copy_n(a.data().begin() + static_cast<size_t>(indices[i]) * c, c,
                    out->data.begin() + i * c);
    auto pa = a.node();
    out->backward_fn = [pa, c, indices](Node& o) {
        if (!needs(pa)) return;
        pa->ensure_grad();
        for (size_t i = 0; i < indices.size(); ++i)
            for (int j = 0; j < c; ++j)
                pa->grad[static_cast<size_t>(indices[i]) * c + j] += o.grad[i * c + j];
    };
    return Tensor(out);
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (shape_size(shape) != a.size())
        throw DimensionError("reshape: element count mismatch");
    auto out = make_node(std::move(shape), {a.node()});
    out->data = a.data();
    auto pa = a.node();
    out->backward_fn = [pa](Node& o) {
        if (!needs(pa)) return;
        pa->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
    };
    return Tensor(out);
}

Tensor div_scalar(const Tensor& a, const Tensor& s) {
    if (s.size() != 1) throw DimensionError("div_scalar: divisor must be 1x1");
    auto out = make_node(a.shape(), {a.node(), s.node()});
    const float sv = s.data()[0];
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = a.data()[i] / sv;
    auto pa = a.node(), ps = s.node();
    out->backward_fn = [pa, ps](Node& o) {
        const float sv = ps->data[0];
        if (needs(pa)) {
            pa->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i] / sv;
        }
        if (needs(ps)) {
            ps->ensure_grad();
            double acc = 0.0;
            for (size_t i = 0; i < o.grad.size(); ++i)
                acc += static_cast<double>(o.grad[i]) * pa->data[i];
            ps->grad[0] -= static_cast<float>(acc / (static_cast<double>(sv) * sv));
        }
    };
    return Tensor(out);
}

Tensor l2_normalize_flat(const Tensor& a) {
    const auto n = static_cast<int>(a.size());
    Tensor flat = reshape(a, {1, n});
    Tensor norm = sqrt(sum_all(mul(flat, flat)));
    return div_scalar(flat, norm);
}

}  // namespace cobra::ops
