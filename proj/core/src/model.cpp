#include "cobra/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cobra {

using namespace cobra::ops;

// ---- SCModule ----

SCModule::SCModule(const ModelConfig& cfg, Rng& rng)
    : patch_embed(cfg.patch * cfg.patch * cfg.channels, cfg.d_model, rng),
      cls(Tensor::randn({1, cfg.d_model}, rng, 0.02f, true)),
      pos(Tensor::randn({cfg.token_count() + 1, cfg.d_model}, rng, 0.02f, true)),
      final_ln(cfg.d_model),
      head(cfg.d_model, cfg.classes, rng) {
    blocks.reserve(static_cast<size_t>(cfg.sc_depth));
    for (int i = 0; i < cfg.sc_depth; ++i)
        blocks.emplace_back(cfg.d_model, cfg.heads, cfg.d_model * cfg.mlp_ratio, rng);
}

Tensor patchify(const ModelConfig& cfg, const std::vector<float>& grid) {
    const int h = cfg.grid_h, w = cfg.grid_w, c = cfg.channels, p = cfg.patch;
    if (static_cast<int64_t>(grid.size()) != static_cast<int64_t>(h) * w * c)
        throw DimensionError("patchify: grid size does not match configured shape");
    const int ph = cfg.patches_per_side_h(), pw = cfg.patches_per_side_w();
    const int patch_dim = p * p * c;
    std::vector<float> out(static_cast<size_t>(ph) * pw * patch_dim);
    size_t o = 0;
    for (int bi = 0; bi < ph; ++bi)
        for (int bj = 0; bj < pw; ++bj)
            for (int di = 0; di < p; ++di)
                for (int dj = 0; dj < p; ++dj)
                    for (int ch = 0; ch < c; ++ch)
                        out[o++] = grid[(static_cast<size_t>(bi * p + di) * w +
                                         (bj * p + dj)) * c + ch];
    return Tensor::from_data({ph * pw, patch_dim}, std::move(out));
}

SCModule::Out SCModule::forward(const ModelConfig& cfg, const std::vector<float>& grid) const {
    const Tensor patches = patchify(cfg, grid);
    const Tensor embedded = patch_embed(patches);
    Tensor tokens = add(concat_rows({cls, embedded}), pos);
    for (const auto& block : blocks) tokens = block(tokens);
    tokens = final_ln(tokens);
    Out out;
    out.f_cls = gather_rows(tokens, {0});
    std::vector<int> rest(static_cast<size_t>(cfg.token_count()));
    std::iota(rest.begin(), rest.end(), 1);
    out.f_p = gather_rows(tokens, rest);
    out.y_c = sigmoid(head(out.f_cls));
    out.tokens = tokens;
    return out;
}

void SCModule::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
    patch_embed.visit(prefix + ".patch_embed", fn);
    fn(prefix + ".cls", cls);
    fn(prefix + ".pos", pos);
    for (size_t i = 0; i < blocks.size(); ++i)
        blocks[i].visit(prefix + ".block" + std::to_string(i), fn);
    final_ln.visit(prefix + ".final_ln", fn);
    head.visit(prefix + ".head", fn);
}

// ---- PSSModule ----

PSSModule::PSSModule(const ModelConfig& cfg, Rng& rng)
    : proj(cfg.d_model, cfg.d_model, rng),
      keys(Tensor::randn({cfg.token_count(), cfg.d_model}, rng, 0.02f, true)) {}

std::vector<int> topk_indices(const std::vector<float>& values, int k) {
    if (k < 1 || k > static_cast<int>(values.size()))
        throw ParameterError("topk: k out of range [1, " +
                             std::to_string(values.size()) + "]");
    std::vector<int> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (values[static_cast<size_t>(a)] != values[static_cast<size_t>(b)])
            return values[static_cast<size_t>(a)] > values[static_cast<size_t>(b)];
        return a < b;
    });
    idx.resize(static_cast<size_t>(k));
    return idx;
}

PSSModule::Out PSSModule::select(const Tensor& f_cls, const Tensor& f_p, int k) const {
    if (f_p.rows() != keys.rows())
        throw DimensionError("pss_select: pool size mismatch");
    // sim = f_cls (1xD) x K^T (DxL). Computed on raw data: the selection is
    // hard, so no gradient path exists to the keys.
    const int pool = keys.rows(), d = keys.cols();
    std::vector<float> sim(static_cast<size_t>(pool));
    for (int i = 0; i < pool; ++i) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j)
            acc += static_cast<double>(f_cls.data()[static_cast<size_t>(j)]) *
                   keys.data()[static_cast<size_t>(i) * d + j];
        sim[static_cast<size_t>(i)] = static_cast<float>(acc);
    }
    Out out;
    out.sim = sim;
    out.indices = topk_indices(sim, k);
    out.f_s = gather_rows(proj(f_p), out.indices);
    return out;
}

void PSSModule::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
    proj.visit(prefix + ".proj", fn);
    fn(prefix + ".keys", keys);
}

// ---- SubjectRegistry ----

int SubjectRegistry::row_of(int subject_id) const {
    for (size_t i = 0; i < subject_ids.size(); ++i)
        if (subject_ids[i] == subject_id) return static_cast<int>(i);
    throw RoutingError("subject " + std::to_string(subject_id) + " is not registered");
}

void SubjectRegistry::add_subject(int subject_id, int d_model, Rng& rng) {
    for (int id : subject_ids)
        if (id == subject_id)
            throw ContractError("subject " + std::to_string(subject_id) +
                                " already registered");
    centers.push_back(Tensor::randn({1, d_model}, rng, 0.5f, true));
    subject_ids.push_back(subject_id);
    frozen.push_back(false);
}

void SubjectRegistry::freeze_all() {
    for (size_t i = 0; i < centers.size(); ++i) {
        centers[i].set_requires_grad(false);
        frozen[i] = true;
    }
}

Tensor SubjectRegistry::center_matrix() const {
    if (centers.empty()) throw ContractError("registry has no centers");
    return concat_rows(centers);
}

Tensor SubjectRegistry::logits(const Tensor& pooled) const {
    return matmul(pooled, transpose(center_matrix()));
}

void SubjectRegistry::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
    for (size_t i = 0; i < centers.size(); ++i)
        fn(prefix + ".center" + std::to_string(i), centers[i]);
}

// ---- MRIFormer ----

MRIFormer::MRIFormer(const ModelConfig& cfg, Rng& rng)
    : enc_ln(cfg.d_model),
      query(Tensor::randn({cfg.l_clip, cfg.d_model}, rng, 0.02f, true)),
      dec_ln(cfg.d_model) {
    for (int i = 0; i < cfg.enc_depth; ++i)
        enc_blocks.emplace_back(cfg.d_model, cfg.heads, cfg.d_model * cfg.mlp_ratio, rng);
    for (int i = 0; i < cfg.dec_depth; ++i)
        dec_blocks.emplace_back(cfg.d_model, cfg.heads, cfg.d_model * cfg.mlp_ratio, rng);
}

Tensor MRIFormer::forward(const Tensor& f_c, const Tensor& f_s) const {
    if (f_c.cols() != f_s.cols())
        throw DimensionError("mriformer: token width mismatch");
    Tensor f = concat_rows({f_c, f_s});
    for (const auto& block : enc_blocks) f = block(f);
    const Tensor memory = enc_ln(f);
    Tensor y = query;
    for (const auto& block : dec_blocks) y = block(y, memory);
    return dec_ln(y);
}

void MRIFormer::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
    for (size_t i = 0; i < enc_blocks.size(); ++i)
        enc_blocks[i].visit(prefix + ".enc" + std::to_string(i), fn);
    enc_ln.visit(prefix + ".enc_ln", fn);
    fn(prefix + ".query", query);
    for (size_t i = 0; i < dec_blocks.size(); ++i)
        dec_blocks[i].visit(prefix + ".dec" + std::to_string(i), fn);
    dec_ln.visit(prefix + ".dec_ln", fn);
}

void StepSet::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
    pss.visit(prefix + ".pss", fn);
    former.visit(prefix + ".former", fn);
}

// ---- CobraModel ----

CobraModel::CobraModel(const ModelConfig& cfg_, Rng& rng) : cfg(cfg_), sc(cfg_, rng) {
    cfg.validate();
}

int CobraModel::add_step(Rng& rng) {
    steps.emplace_back(cfg, rng);
    return static_cast<int>(steps.size()) - 1;
}

CobraModel::Out CobraModel::forward_with_step(const std::vector<float>& grid,
                                              int step_index) const {
    if (step_index < 0 || step_index >= static_cast<int>(steps.size()))
        throw RoutingError("step index " + std::to_string(step_index) + " out of range");
    const StepSet& set = steps[static_cast<size_t>(step_index)];
    const SCModule::Out sc_out = sc.forward(cfg, grid);
    PSSModule::Out pss_out = set.pss.select(sc_out.f_cls, sc_out.f_p, cfg.top_k);
    Out out;
    out.f_mri = set.former.forward(sc_out.tokens, pss_out.f_s);
    out.y_c = sc_out.y_c;
    out.f_s = pss_out.f_s;
    out.indices = std::move(pss_out.indices);
    if (registry.count() > 0) {
        const Tensor pooled = mean_pool_rows(out.f_s);
        out.y_s = softmax_rows(registry.logits(pooled), 1.0f);
    }
    return out;
}

CobraModel::Out CobraModel::forward_full(const std::vector<float>& grid,
                                         int subject_id) const {
    const auto it = routing.find(subject_id);
    if (it == routing.end())
        throw RoutingError("subject " + std::to_string(subject_id) +
                           " has no routed step set");
    return forward_with_step(grid, it->second);
}

void CobraModel::visit(const nn::ParamVisitor& fn) {
    sc.visit("sc", fn);
    for (size_t i = 0; i < steps.size(); ++i)
        steps[i].visit("step" + std::to_string(i), fn);
    registry.visit("registry", fn);
}

int64_t CobraModel::param_count() {
    int64_t n = 0;
    visit([&n](const std::string&, Tensor& t) { n += t.size(); });
    return n;
}

int64_t CobraModel::sc_param_count() {
    int64_t n = 0;
    sc.visit("sc", [&n](const std::string&, Tensor& t) { n += t.size(); });
    return n;
}

// ---- Losses ----

Tensor commonality_loss(const Tensor& y_c_prob, const std::vector<float>& targets,
                        float eps) {
    if (static_cast<int64_t>(targets.size()) != y_c_prob.size())
        throw DimensionError("commonality_loss: target length mismatch");
    for (float t : targets)
        if (t != 0.0f && t != 1.0f)
            throw ContractError("commonality_loss: targets must be multi-hot 0/1");
    const int n = static_cast<int>(targets.size());
    const Tensor y = Tensor::from_data({1, n}, targets);
    const Tensor one_minus_y = Tensor::from_data({1, n}, [&] {
        std::vector<float> v(targets.size());
        for (size_t i = 0; i < v.size(); ++i) v[i] = 1.0f - targets[i];
        return v;
    }());
    const Tensor p = clamp(y_c_prob, eps, 1.0f - eps);
    const Tensor pos = mul(y, ops::log(p));
    const Tensor neg = mul(one_minus_y, ops::log(affine(p, -1.0f, 1.0f)));
    return affine(sum_all(add(pos, neg)), -1.0f, 0.0f);
}

Tensor subject_loss(const Tensor& f_s, int subject_id, const SubjectRegistry& registry) {
    const int row = registry.row_of(subject_id);
    const Tensor pooled = mean_pool_rows(f_s);
    const Tensor logp = log_softmax_rows(registry.logits(pooled));
    std::vector<float> one_hot(static_cast<size_t>(registry.count()), 0.0f);
    one_hot[static_cast<size_t>(row)] = 1.0f;
    const Tensor pick = Tensor::from_data({1, registry.count()}, std::move(one_hot));
    return affine(sum_all(mul(pick, logp)), -1.0f, 0.0f);
}

Tensor center_regularization(const SubjectRegistry& registry, float margin) {
    if (registry.count() == 0) throw ContractError("center_regularization: no centers");
    Tensor loss = Tensor::scalar(0.0f);
    for (int i = 0; i < registry.count(); ++i) {
        for (int j = i + 1; j < registry.count(); ++j) {
            const Tensor diff = sub(registry.centers[static_cast<size_t>(i)],
                                    registry.centers[static_cast<size_t>(j)]);
            const Tensor dist = ops::sqrt(sum_all(mul(diff, diff)));
            const Tensor hinge = relu(affine(dist, -1.0f, 2.0f * margin));
            loss = add(loss, mul(hinge, hinge));
        }
    }
    return loss;
}

Tensor contrastive_loss(const std::vector<Tensor>& predicted,
                        const std::vector<Tensor>& target, float sigma) {
    if (predicted.empty() || predicted.size() != target.size())
        throw ContractError("contrastive_loss: empty or mismatched batch");
    if (!(sigma > 0.0f)) throw ParameterError("contrastive_loss: sigma must be positive");
    const int n = static_cast<int>(predicted.size());
    std::vector<Tensor> p_rows, q_rows;
    p_rows.reserve(predicted.size());
    q_rows.reserve(predicted.size());
    for (int i = 0; i < n; ++i) {
        p_rows.push_back(l2_normalize_flat(predicted[static_cast<size_t>(i)]));
        q_rows.push_back(l2_normalize_flat(target[static_cast<size_t>(i)]));
    }
    const Tensor p = concat_rows(p_rows);  // N x F
    const Tensor q = concat_rows(q_rows);
    const Tensor sim = affine(matmul(p, transpose(q)), 1.0f / sigma, 0.0f);
    std::vector<float> eye(static_cast<size_t>(n) * n, 0.0f);
    for (int i = 0; i < n; ++i) eye[static_cast<size_t>(i) * n + i] = 1.0f;
    const Tensor diag = Tensor::from_data({n, n}, std::move(eye));
    const Tensor dir_pq = sum_all(mul(diag, log_softmax_rows(sim)));
    const Tensor dir_qp = sum_all(mul(diag, log_softmax_rows(transpose(sim))));
    // Mean over the batch and over the two directions.
    return affine(add(dir_pq, dir_qp), -0.5f / static_cast<float>(n), 0.0f);
}

Tensor total_loss(const Tensor& l_c, const Tensor& l_s, const Tensor& l_con,
                  const Tensor& l_reg, float lambda_c, float lambda_s, float lambda_sc,
                  float lambda_reg) {
    const Tensor a = add(affine(l_c, lambda_c, 0.0f), affine(l_s, lambda_s, 0.0f));
    const Tensor b = add(affine(l_con, lambda_sc, 0.0f), affine(l_reg, lambda_reg, 0.0f));
    return add(a, b);
}

}  // namespace cobra
