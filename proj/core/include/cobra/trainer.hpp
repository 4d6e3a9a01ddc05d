#pragma once

#include <string>
#include <vector>

#include "cobra/checkpoint.hpp"
#include "cobra/model.hpp"
#include "cobra/synthdata.hpp"

namespace cobra {

enum class TrainMode { Cobra, Naive };

// Ordered subject groups, one group per continual step.
struct StepPlan {
    std::vector<std::vector<int>> groups;

    // "3,4|6,8|1,2|5,7" -> 4 groups. Throws ParameterError on empty groups
    // or a subject appearing twice (the duplicate is named).
    static StepPlan parse(const std::string& text);
    std::vector<int> all_subjects() const;
    void validate_against(const std::vector<int>& available) const;
};

struct RehearsalBuffer {
    int capacity_per_subject = 0;
    std::vector<Sample> samples;

    // Uniform sample without replacement from one completed subject's data;
    // deterministic under the caller's rng.
    void fill_from(const std::vector<Sample>& subject_data, Rng& rng);
};

struct EpochRecord {
    int step = 0;
    int epoch = 0;
    double loss = 0.0;
    double loss_c = 0.0;
    double loss_s = 0.0;
    double loss_con = 0.0;
    double loss_reg = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    CobraModel model;
    Rng rng;
    std::vector<EpochRecord> log;
    // Serialized checkpoint bytes captured at the end of each step (also
    // written to out_dir/step_NN.ckpt when out_dir is set).
    std::vector<std::string> step_checkpoints;
    std::vector<std::vector<int>> groups;
    int64_t params_after_first_step = 0;
    std::vector<int64_t> params_per_step;
};

// Runs the continual protocol. Cobra mode grows a fresh PSS + MRIFormer set
// per step and freezes everything from completed steps; Naive mode fine-tunes
// one shared set across all steps with nothing frozen. out_dir may be empty
// to keep the run purely in memory.
TrainResult train(const StepPlan& plan, const Dataset& data, const ExperimentConfig& cfg,
                  TrainMode mode, const std::string& out_dir);

void write_train_log(const std::vector<EpochRecord>& log, const std::string& path);

// In-memory checkpoint helpers (same byte format as the .ckpt files).
std::string checkpoint_to_bytes(CobraModel& model, const ExperimentConfig& cfg,
                                const Rng& rng);
LoadedCheckpoint checkpoint_from_bytes(const std::string& bytes);

}  // namespace cobra
