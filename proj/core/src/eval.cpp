#include "cobra/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "cobra/serialize.hpp"

namespace cobra {

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw DimensionError("cosine: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double retrieval_accuracy(const std::vector<std::vector<float>>& predicted,
                          const std::vector<std::vector<float>>& targets, int n_way,
                          uint64_t seed) {
    if (n_way < 2) throw ParameterError("retrieval: n_way must be >= 2");
    if (predicted.size() != targets.size() || predicted.empty())
        throw ContractError("retrieval: empty or mismatched batch");
    const int n = static_cast<int>(predicted.size());
    if (n < n_way) throw ContractError("retrieval: batch smaller than n_way");
    Rng rng(seed);
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        const double true_score = cosine_similarity(predicted[static_cast<size_t>(i)],
                                                    targets[static_cast<size_t>(i)]);
        // n_way - 1 distinct distractors drawn from the other targets.
        std::vector<int> pool;
        pool.reserve(static_cast<size_t>(n) - 1);
        for (int j = 0; j < n; ++j)
            if (j != i) pool.push_back(j);
        rng.shuffle(pool);
        bool win = true;
        for (int d = 0; d < n_way - 1 && win; ++d) {
            const double s = cosine_similarity(predicted[static_cast<size_t>(i)],
                                               targets[static_cast<size_t>(pool[static_cast<size_t>(d)])]);
            if (s >= true_score) win = false;
        }
        if (win) ++hits;
    }
    return static_cast<double>(hits) / n;
}

double micro_f1(const std::vector<std::vector<float>>& probs,
                const std::vector<std::vector<float>>& targets) {
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < probs.size(); ++i) {
        for (size_t j = 0; j < probs[i].size(); ++j) {
            const bool pred = probs[i][j] > 0.5f;  // tie -> negative
            const bool truth = targets[i][j] != 0.0f;
            if (pred && truth) ++tp;
            else if (pred) ++fp;
            else if (truth) ++fn;
        }
    }
    const double denom = 2.0 * tp + fp + fn;
    return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

GroupMetrics evaluate_group(const CobraModel& model, const std::vector<Sample>& test_set,
                            int step, const std::vector<int>& subjects, int n_way,
                            uint64_t seed) {
    GroupMetrics m;
    m.step = step;
    m.subjects = subjects;
    m.n_samples = static_cast<int>(test_set.size());
    std::vector<std::vector<float>> f_mri, f_clip, y_c, labels;
    int subj_hits = 0;
    double cos_sum = 0.0;
    for (const auto& s : test_set) {
        const auto out = model.forward_full(s.grid, s.subject_id);
        f_mri.push_back(out.f_mri.data());
        f_clip.push_back(s.clip);
        y_c.push_back(out.y_c.data());
        labels.push_back(s.labels);
        cos_sum += cosine_similarity(out.f_mri.data(), s.clip);
        if (out.y_s.defined()) {
            const auto& probs = out.y_s.data();
            const int best = static_cast<int>(
                std::max_element(probs.begin(), probs.end()) - probs.begin());
            if (model.registry.subject_ids[static_cast<size_t>(best)] == s.subject_id)
                ++subj_hits;
        }
    }
    m.retrieval_2way = retrieval_accuracy(f_mri, f_clip, 2, seed);
    m.retrieval_nway = n_way == 2 ? m.retrieval_2way
                                  : retrieval_accuracy(f_mri, f_clip, n_way, seed);
    m.mean_cosine = test_set.empty() ? 0.0 : cos_sum / static_cast<double>(test_set.size());
    m.sc_f1 = micro_f1(y_c, labels);
    m.pss_accuracy = test_set.empty() ? 0.0
                                      : static_cast<double>(subj_hits) /
                                            static_cast<double>(test_set.size());
    return m;
}

namespace {

std::vector<Sample> group_test_set(const Dataset& data, const std::vector<int>& group) {
    std::vector<Sample> out;
    for (int id : group) {
        auto s = data.test_samples(id);
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

}  // namespace

std::vector<ForgettingRow> forgetting(const TrainResult& run, const Dataset& data,
                                      int n_way, uint64_t seed) {
    if (run.step_checkpoints.size() < 2)
        throw ContractError("forgetting needs checkpoints from at least two steps");
    std::vector<ForgettingRow> rows;
    auto final_ckpt = checkpoint_from_bytes(run.step_checkpoints.back());
    for (size_t g = 0; g + 1 < run.groups.size(); ++g) {
        auto own = checkpoint_from_bytes(run.step_checkpoints[g]);
        const auto test_set = group_test_set(data, run.groups[g]);
        ForgettingRow row;
        row.group = static_cast<int>(g);
        row.before = evaluate_group(own.model, test_set, static_cast<int>(g),
                                    run.groups[g], n_way, seed)
                         .retrieval_2way;
        row.after = evaluate_group(final_ckpt.model, test_set, static_cast<int>(g),
                                   run.groups[g], n_way, seed)
                        .retrieval_2way;
        row.delta = row.before - row.after;
        rows.push_back(row);
    }
    return rows;
}

std::vector<GrowthRow> param_growth_curve(const ModelConfig& cfg, int max_subjects) {
    if (max_subjects < 1) throw ParameterError("growth curve needs max_subjects >= 1");
    std::vector<GrowthRow> rows;
    Rng rng(0);
    CobraModel model(cfg, rng);
    for (int n = 1; n <= max_subjects; ++n) {
        model.add_step(rng);
        model.registry.add_subject(n, cfg.d_model, rng);
        rows.push_back({n, model.param_count()});
    }
    return rows;
}

double subject_probe_accuracy(const Dataset& data) {
    // Class centroids from train grids, nearest-centroid assignment on test
    // grids. A linear decision rule; chance is 1 / subjects.
    std::map<int, std::vector<double>> centroid;
    std::map<int, int> counts;
    for (const auto& s : data.samples) {
        if (s.is_test) continue;
        auto& c = centroid[s.subject_id];
        if (c.empty()) c.assign(s.grid.size(), 0.0);
        for (size_t i = 0; i < s.grid.size(); ++i) c[i] += s.grid[i];
        counts[s.subject_id]++;
    }
    for (auto& [id, c] : centroid)
        for (auto& x : c) x /= counts[id];
    int hits = 0, total = 0;
    for (const auto& s : data.samples) {
        if (!s.is_test) continue;
        int best = -1;
        double best_dist = std::numeric_limits<double>::infinity();
        for (const auto& [id, c] : centroid) {
            double dist = 0.0;
            for (size_t i = 0; i < s.grid.size(); ++i) {
                const double d = s.grid[i] - c[i];
                dist += d * d;
            }
            if (dist < best_dist) {
                best_dist = dist;
                best = id;
            }
        }
        if (best == s.subject_id) ++hits;
        ++total;
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / total;
}

double min_center_distance(const SubjectRegistry& registry) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < registry.count(); ++i)
        for (int j = i + 1; j < registry.count(); ++j) {
            double d2 = 0.0;
            const auto& a = registry.centers[static_cast<size_t>(i)].data();
            const auto& b = registry.centers[static_cast<size_t>(j)].data();
            for (size_t k = 0; k < a.size(); ++k) {
                const double d = a[k] - b[k];
                d2 += d * d;
            }
            best = std::min(best, std::sqrt(d2));
        }
    return registry.count() < 2 ? 0.0 : best;
}

MetricReport build_report(const TrainResult& run, const Dataset& data,
                          const ExperimentConfig& cfg, const std::string& mode) {
    MetricReport rep;
    rep.mode = mode;
    rep.seed = cfg.train.seed;
    rep.n_way = cfg.train.n_way;
    rep.params_per_step = run.params_per_step;
    rep.margin = cfg.model.margin;
    auto final_ckpt = checkpoint_from_bytes(run.step_checkpoints.back());
    for (size_t g = 0; g < run.groups.size(); ++g) {
        const auto test_set = group_test_set(data, run.groups[g]);
        rep.groups.push_back(evaluate_group(final_ckpt.model, test_set,
                                            static_cast<int>(g), run.groups[g],
                                            cfg.train.n_way, cfg.train.seed));
    }
    if (run.step_checkpoints.size() >= 2)
        rep.forgetting = forgetting(run, data, cfg.train.n_way, cfg.train.seed);
    rep.probe_accuracy = subject_probe_accuracy(data);
    rep.min_center_distance = min_center_distance(final_ckpt.model.registry);
    return rep;
}

void emit_report(const MetricReport& rep, const std::string& ndjson_path,
                 const std::string& csv_path) {
    std::ofstream os(ndjson_path);
    if (!os) throw DataError("cannot open report for writing: " + ndjson_path);
    os << "{\"record\":\"header\",\"mode\":\"" << rep.mode << "\",\"seed\":" << rep.seed
       << ",\"n_way\":" << rep.n_way
       << ",\"probe_accuracy\":" << io::format_g6(rep.probe_accuracy)
       << ",\"min_center_distance\":" << io::format_g6(rep.min_center_distance)
       << ",\"margin\":" << io::format_g6(rep.margin) << "}\n";
    for (const auto& g : rep.groups) {
        os << "{\"record\":\"group\",\"step\":" << g.step << ",\"subjects\":[";
        for (size_t i = 0; i < g.subjects.size(); ++i)
            os << (i ? "," : "") << g.subjects[i];
        os << "],\"n_samples\":" << g.n_samples
           << ",\"retrieval_2way\":" << io::format_g6(g.retrieval_2way)
           << ",\"retrieval_nway\":" << io::format_g6(g.retrieval_nway)
           << ",\"mean_cosine\":" << io::format_g6(g.mean_cosine)
           << ",\"sc_f1\":" << io::format_g6(g.sc_f1)
           << ",\"pss_accuracy\":" << io::format_g6(g.pss_accuracy) << "}\n";
    }
    for (const auto& f : rep.forgetting) {
        os << "{\"record\":\"forgetting\",\"group\":" << f.group
           << ",\"before\":" << io::format_g6(f.before)
           << ",\"after\":" << io::format_g6(f.after)
           << ",\"delta\":" << io::format_g6(f.delta) << "}\n";
    }
    for (size_t i = 0; i < rep.params_per_step.size(); ++i)
        os << "{\"record\":\"params\",\"step\":" << i
           << ",\"count\":" << rep.params_per_step[i] << "}\n";
    if (!os) throw DataError("report write failed: " + ndjson_path);

    if (!csv_path.empty()) {
        std::ofstream cs(csv_path);
        if (!cs) throw DataError("cannot open report for writing: " + csv_path);
        cs << "group,before,after,delta\n";
        for (const auto& f : rep.forgetting)
            cs << f.group << "," << io::format_g6(f.before) << ","
               << io::format_g6(f.after) << "," << io::format_g6(f.delta) << "\n";
    }
}

}  // namespace cobra
