#pragma once

#include <cstdint>
#include <string>

#include "cobra/errors.hpp"

namespace cobra {

struct DataConfig {
    int subjects = 4;
    int classes = 10;
    int grid_h = 32;
    int grid_w = 32;
    int channels = 1;
    int train_per_subject = 160;
    int test_stimuli = 80;
    int voxel_min = 560;
    int voxel_max = 880;
    int signature_dim = 24;
    int max_labels = 3;
    float noise_scale = 0.25f;
    float clip_noise = 0.1f;

    bool operator==(const DataConfig&) const = default;
};

struct ModelConfig {
    int grid_h = 32;
    int grid_w = 32;
    int channels = 1;
    int patch = 8;
    int d_model = 32;
    int sc_depth = 6;
    int enc_depth = 2;   // MRIFormer encoder
    int dec_depth = 2;   // MRIFormer decoder
    int heads = 4;
    int mlp_ratio = 2;
    int l_clip = 8;
    int classes = 10;
    int top_k = 4;
    float sigma = 0.07f;   // contrastive temperature
    float margin = 1.0f;   // center separation margin

    int patches_per_side_h() const { return grid_h / patch; }
    int patches_per_side_w() const { return grid_w / patch; }
    int token_count() const { return patches_per_side_h() * patches_per_side_w(); }
    void validate() const;
};

struct TrainConfig {
    int epochs = 50;
    int batch_size = 16;
    float lr = 1e-3f;
    float weight_decay = 0.01f;
    float lambda_c = 1.0f;
    float lambda_s = 1.0f;
    float lambda_sc = 1.0f;
    float lambda_reg = 1.0f;
    uint64_t seed = 42;
    int sc_trainable_steps = 1;
    int buffer_capacity = 0;  // per subject; 0 = rehearsal-free
    bool rehearsal_updates_old_modules = false;
    int n_way = 2;
};

// Flat key=value experiment config (the CLI's single input file format).
// Unknown keys are rejected; `subjects` is the one required key.
struct ExperimentConfig {
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
    std::string plan;  // e.g. "1,2|3,4"; empty = one step over all subjects

    static ExperimentConfig parse_file(const std::string& path);
    static ExperimentConfig parse_text(const std::string& text);
    // Every key in fixed order; re-parsable; written into run directories
    // and checkpoints.
    std::string resolved_text() const;
};

// Paper-scale preset recorded for reference (ViT-B/16-sized). Not used by
// the desk-scale test suite.
ExperimentConfig paper_scale_preset();

}  // namespace cobra
