#pragma once

#include <map>
#include <string>
#include <vector>

#include "cobra/config.hpp"
#include "cobra/nn.hpp"
#include "cobra/tensor.hpp"

namespace cobra {

// Shared commonality encoder: patch embedding, CLS token, positional
// embeddings, transformer blocks, and a multi-label object head.
struct SCModule {
    nn::Linear patch_embed;  // (patch*patch*channels) x d_model
    Tensor cls;              // 1 x d_model
    Tensor pos;              // (tokens+1) x d_model
    std::vector<nn::EncoderBlock> blocks;
    nn::LayerNorm final_ln;
    nn::Linear head;  // d_model x classes

    struct Out {
        Tensor f_cls;    // 1 x d_model
        Tensor f_p;      // tokens x d_model
        Tensor y_c;      // 1 x classes, sigmoid probabilities
        Tensor tokens;   // (tokens+1) x d_model, post final norm
    };

    SCModule() = default;
    SCModule(const ModelConfig& cfg, Rng& rng);
    Out forward(const ModelConfig& cfg, const std::vector<float>& grid) const;
    void visit(const std::string& prefix, const nn::ParamVisitor& fn);
};

// Turns a grid into the (tokens x patch*patch*channels) patch matrix.
Tensor patchify(const ModelConfig& cfg, const std::vector<float>& grid);

// Prompt-based subject-specific module: projects patch tokens into a prompt
// pool and selects the top-k rows by key/query similarity against the CLS
// feature. Keys are a learnable bank; the hard selection passes no gradient
// to them (selection is non-differentiable w.r.t. indices).
struct PSSModule {
    nn::Linear proj;  // d_model x d_model
    Tensor keys;      // tokens x d_model

    struct Out {
        Tensor f_s;                // k x d_model
        std::vector<int> indices;  // selected pool rows
        std::vector<float> sim;    // raw similarities, length tokens
    };

    PSSModule() = default;
    PSSModule(const ModelConfig& cfg, Rng& rng);
    Out select(const Tensor& f_cls, const Tensor& f_p, int k) const;
    void visit(const std::string& prefix, const nn::ParamVisitor& fn);
};

// Top-k by value, ties broken by lowest index. Result sorted descending by
// (value, -index).
std::vector<int> topk_indices(const std::vector<float>& values, int k);

// Growing bank of per-subject center vectors. Rows registered in earlier
// continual steps are frozen and never receive gradient updates.
struct SubjectRegistry {
    std::vector<Tensor> centers;  // each 1 x d_model
    std::vector<int> subject_ids;
    std::vector<bool> frozen;

    int count() const { return static_cast<int>(centers.size()); }
    int row_of(int subject_id) const;  // RoutingError if unknown
    void add_subject(int subject_id, int d_model, Rng& rng);
    void freeze_all();
    Tensor center_matrix() const;  // count x d_model
    // Softmax logits for a pooled subject feature (1 x d_model).
    Tensor logits(const Tensor& pooled) const;
    void visit(const std::string& prefix, const nn::ParamVisitor& fn);
};

// Encoder-decoder translating (commonality + specific) tokens into a
// fixed-length embedding, independent of the input token count.
struct MRIFormer {
    std::vector<nn::EncoderBlock> enc_blocks;
    nn::LayerNorm enc_ln;
    Tensor query;  // l_clip x d_model, learned
    std::vector<nn::DecoderBlock> dec_blocks;
    nn::LayerNorm dec_ln;

    MRIFormer() = default;
    MRIFormer(const ModelConfig& cfg, Rng& rng);
    // f_c: (tokens+1) x d_model (CLS included), f_s: k x d_model.
    Tensor forward(const Tensor& f_c, const Tensor& f_s) const;
    void visit(const std::string& prefix, const nn::ParamVisitor& fn);
};

// One continual step's private modules.
struct StepSet {
    PSSModule pss;
    MRIFormer former;

    StepSet() = default;
    StepSet(const ModelConfig& cfg, Rng& rng) : pss(cfg, rng), former(cfg, rng) {}
    void visit(const std::string& prefix, const nn::ParamVisitor& fn);
};

struct CobraModel {
    ModelConfig cfg;
    SCModule sc;
    std::vector<StepSet> steps;
    SubjectRegistry registry;
    std::map<int, int> routing;  // subject_id -> step index

    struct Out {
        Tensor f_mri;  // l_clip x d_model
        Tensor y_c;    // 1 x classes
        Tensor y_s;    // 1 x registered subjects, softmax probabilities
        Tensor f_s;    // k x d_model
        std::vector<int> indices;
    };

    CobraModel() = default;
    CobraModel(const ModelConfig& cfg, Rng& rng);

    int add_step(Rng& rng);  // returns new step index
    // Routes through the step set owned by subject_id.
    Out forward_full(const std::vector<float>& grid, int subject_id) const;
    Out forward_with_step(const std::vector<float>& grid, int step_index) const;
    void visit(const nn::ParamVisitor& fn);
    int64_t param_count();
    int64_t sc_param_count();
};

// ---- Losses ----

// Multi-label binary cross entropy over sigmoid probabilities; probabilities
// are clamped to [eps, 1-eps]. Targets must be exactly 0 or 1.
Tensor commonality_loss(const Tensor& y_c_prob, const std::vector<float>& targets,
                        float eps = 1e-7f);

// Cross entropy of the registry's subject logits for one pooled specific
// feature.
Tensor subject_loss(const Tensor& f_s, int subject_id, const SubjectRegistry& registry);

// Hinge separation over all unordered center pairs:
// sum max(0, 2*margin - ||c_i - c_j||)^2. Gradients reach unfrozen rows only.
Tensor center_regularization(const SubjectRegistry& registry, float margin);

// Symmetric InfoNCE over a batch of (predicted, target) feature pairs, each
// flattened and L2-normalized per sample. Average of both softmax directions.
Tensor contrastive_loss(const std::vector<Tensor>& predicted,
                        const std::vector<Tensor>& target, float sigma);

Tensor total_loss(const Tensor& l_c, const Tensor& l_s, const Tensor& l_con,
                  const Tensor& l_reg, float lambda_c, float lambda_s, float lambda_sc,
                  float lambda_reg);

}  // namespace cobra
