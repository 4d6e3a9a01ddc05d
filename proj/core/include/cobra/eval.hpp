#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cobra/model.hpp"
#include "cobra/synthdata.hpp"
#include "cobra/trainer.hpp"

namespace cobra {

// n-way retrieval: a sample scores a hit when its true target ranks strictly
// first by cosine among {true target, n_way-1 seeded random distractors}.
// Features are flattened and compared by cosine. n_way < 2 -> ParameterError;
// batch smaller than n_way -> ContractError.
double retrieval_accuracy(const std::vector<std::vector<float>>& predicted,
                          const std::vector<std::vector<float>>& targets, int n_way,
                          uint64_t seed);

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b);

// Micro-averaged F1 over multi-hot predictions at threshold 0.5; a probability
// exactly at the threshold counts as negative.
double micro_f1(const std::vector<std::vector<float>>& probs,
                const std::vector<std::vector<float>>& targets);

struct GroupMetrics {
    int step = 0;
    std::vector<int> subjects;
    double retrieval_2way = 0.0;
    double retrieval_nway = 0.0;
    double mean_cosine = 0.0;
    double sc_f1 = 0.0;
    double pss_accuracy = 0.0;
    int n_samples = 0;
};

GroupMetrics evaluate_group(const CobraModel& model, const std::vector<Sample>& test_set,
                            int step, const std::vector<int>& subjects, int n_way,
                            uint64_t seed);

struct ForgettingRow {
    int group = 0;
    double before = 0.0;  // 2-way retrieval at the group's own step
    double after = 0.0;   // same test set, final model
    double delta = 0.0;   // before - after
};

// Replays each group's shared test set through its own-step checkpoint and
// the final checkpoint. Requires at least two steps.
std::vector<ForgettingRow> forgetting(const TrainResult& run, const Dataset& data,
                                      int n_way, uint64_t seed);

struct GrowthRow {
    int subjects = 0;
    int64_t params = 0;
};

// Exact parameter counts for 1..max_subjects subjects, one subject per step.
std::vector<GrowthRow> param_growth_curve(const ModelConfig& cfg, int max_subjects);

// Nearest-centroid linear probe on raw grids: how separable subjects are at
// the generator level (reported, not a model property).
double subject_probe_accuracy(const Dataset& data);

struct MetricReport {
    std::string mode;
    uint64_t seed = 0;
    int n_way = 2;
    std::vector<GroupMetrics> groups;      // final-model metrics per group
    std::vector<ForgettingRow> forgetting;
    std::vector<int64_t> params_per_step;
    double probe_accuracy = 0.0;
    double min_center_distance = 0.0;  // over trained centers
    double margin = 0.0;
};

MetricReport build_report(const TrainResult& run, const Dataset& data,
                          const ExperimentConfig& cfg, const std::string& mode);

// NDJSON (one record per line, fixed field order, 6 significant digits) plus
// an optional CSV forgetting table.
void emit_report(const MetricReport& report, const std::string& ndjson_path,
                 const std::string& csv_path = "");

double min_center_distance(const SubjectRegistry& registry);

}  // namespace cobra
