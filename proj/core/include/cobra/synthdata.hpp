#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cobra/config.hpp"
#include "cobra/rng.hpp"

namespace cobra {

// One synthetic subject: an injective voxel -> grid-cell placement built from
// scattered raster blocks (pseudo-ROIs), plus a private linear map from the
// shared object signature space into voxel space.
struct SubjectProfile {
    int subject_id = 0;
    int voxel_count = 0;
    std::vector<int> placement;   // voxel index -> flat grid cell, injective
    std::vector<float> mixing;    // voxel_count x signature_dim, row-major
    float noise_scale = 0.0f;

    bool operator==(const SubjectProfile&) const = default;
};

struct Sample {
    int subject_id = 0;
    int stimulus_id = 0;
    bool is_test = false;
    std::vector<float> grid;    // grid_h * grid_w * channels
    std::vector<float> labels;  // multi-hot, length classes
    std::vector<float> clip;    // l_clip * d_model target embedding

    bool operator==(const Sample&) const = default;
};

struct Dataset {
    DataConfig cfg;
    uint64_t seed = 0;
    int l_clip = 8;
    int d_model = 32;
    std::vector<float> signature_map;  // classes x signature_dim (shared)
    std::vector<float> clip_readout;   // classes x (l_clip * d_model) (shared)
    std::vector<SubjectProfile> profiles;
    std::vector<Sample> samples;

    bool operator==(const Dataset&) const = default;

    const SubjectProfile& profile_of(int subject_id) const;
    std::vector<Sample> train_samples(int subject_id) const;
    std::vector<Sample> test_samples(int subject_id) const;
    std::vector<int> subject_ids() const;
};

// Deterministic generation: same (config, model dims, seed) -> identical
// dataset. Test stimuli are shared across subjects; train stimuli are
// subject-disjoint.
Dataset generate(const DataConfig& cfg, int l_clip, int d_model, uint64_t seed);

// Places a 1D voxel vector onto the 2D grid (unmapped cells zero).
std::vector<float> project_1d_to_2d(const std::vector<float>& voxels,
                                    const SubjectProfile& profile, int grid_h,
                                    int grid_w);
// Inverse on mapped cells.
std::vector<float> unproject_2d_to_1d(const std::vector<float>& grid,
                                      const SubjectProfile& profile);

// Euclidean grid distances between consecutive 1D voxel indices; the
// flattening diagnostic.
struct ContiguityReport {
    std::vector<float> distances;  // length voxel_count - 1
    double mean = 0.0;
    double max = 0.0;
    // fraction of consecutive pairs landing more than sqrt(2) apart
    double far_fraction = 0.0;
};
ContiguityReport contiguity_report(const SubjectProfile& profile, int grid_w);

// Binary dataset container, magic "COBRADS1", little-endian f32 payloads.
// Field-by-field layout documented in the README.
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace cobra
