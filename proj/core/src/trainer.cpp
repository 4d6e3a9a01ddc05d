#include "cobra/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cobra/optim.hpp"
#include "cobra/ops.hpp"
#include "cobra/serialize.hpp"

namespace cobra {

StepPlan StepPlan::parse(const std::string& text) {
    StepPlan plan;
    std::set<int> seen;
    std::stringstream groups_ss(text);
    std::string group;
    while (std::getline(groups_ss, group, '|')) {
        std::vector<int> ids;
        std::stringstream ids_ss(group);
        std::string tok;
        while (std::getline(ids_ss, tok, ',')) {
            const auto b = tok.find_first_not_of(" \t");
            if (b == std::string::npos) continue;
            const auto e = tok.find_last_not_of(" \t");
            int id = 0;
            try {
                id = std::stoi(tok.substr(b, e - b + 1));
            } catch (const std::exception&) {
                throw ParameterError("plan: invalid subject id '" + tok + "'");
            }
            if (seen.count(id))
                throw ParameterError("plan: subject " + std::to_string(id) +
                                     " appears in more than one group");
            seen.insert(id);
            ids.push_back(id);
        }
        if (ids.empty()) throw ParameterError("plan: empty group");
        plan.groups.push_back(std::move(ids));
    }
    if (plan.groups.empty()) throw ParameterError("plan: no groups");
    return plan;
}

std::vector<int> StepPlan::all_subjects() const {
    std::vector<int> out;
    for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
    return out;
}

void StepPlan::validate_against(const std::vector<int>& available) const {
    for (int id : all_subjects())
        if (std::find(available.begin(), available.end(), id) == available.end())
            throw DataError("plan references unknown subject " + std::to_string(id));
}

void RehearsalBuffer::fill_from(const std::vector<Sample>& subject_data, Rng& rng) {
    if (capacity_per_subject <= 0) return;
    std::vector<size_t> idx(subject_data.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    const size_t take = std::min(idx.size(), static_cast<size_t>(capacity_per_subject));
    for (size_t i = 0; i < take; ++i) samples.push_back(subject_data[idx[i]]);
}

std::string checkpoint_to_bytes(CobraModel& model, const ExperimentConfig& cfg,
                                const Rng& rng) {
    std::ostringstream os(std::ios::binary);
    save_checkpoint(model, cfg, rng, os);
    return os.str();
}

LoadedCheckpoint checkpoint_from_bytes(const std::string& bytes) {
    std::istringstream is(bytes, std::ios::binary);
    return load_checkpoint(is);
}

namespace {

void set_trainable(SCModule& sc, bool v) {
    sc.visit("sc", [v](const std::string&, Tensor& t) { t.set_requires_grad(v); });
}

void set_trainable(StepSet& set, bool v) {
    set.visit("step", [v](const std::string&, Tensor& t) { t.set_requires_grad(v); });
}

std::vector<Tensor> collect_trainable(CobraModel& model) {
    std::vector<Tensor> params;
    model.visit([&params](const std::string&, Tensor& t) {
        if (t.requires_grad()) params.push_back(t);
    });
    return params;
}

Tensor clip_target(const Sample& s, int l_clip, int d_model) {
    return Tensor::from_data({l_clip, d_model}, s.clip);
}

}  // namespace

TrainResult train(const StepPlan& plan, const Dataset& data, const ExperimentConfig& cfg,
                  TrainMode mode, const std::string& out_dir) {
    plan.validate_against(data.subject_ids());
    const TrainConfig& tc = cfg.train;
    const ModelConfig& mc = cfg.model;

    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    TrainResult result;
    result.groups = plan.groups;
    Rng rng(tc.seed);
    CobraModel& model = result.model;
    model = CobraModel(mc, rng);
    RehearsalBuffer buffer;
    buffer.capacity_per_subject = tc.buffer_capacity;

    for (size_t t = 0; t < plan.groups.size(); ++t) {
        const auto& group = plan.groups[t];
        Rng step_rng = rng.fork(static_cast<uint64_t>(t) + 1);

        int step_index;
        if (mode == TrainMode::Cobra || model.steps.empty())
            step_index = model.add_step(step_rng);
        else
            step_index = 0;
        for (int id : group) {
            model.registry.add_subject(id, mc.d_model, step_rng);
            model.routing[id] = step_index;
        }

        // Trainability for this step. Cobra freezes everything from earlier
        // steps; naive keeps the whole model plastic.
        const bool sc_on = (mode == TrainMode::Naive) ||
                           static_cast<int>(t) < tc.sc_trainable_steps;
        set_trainable(model.sc, sc_on);
        for (size_t si = 0; si < model.steps.size(); ++si) {
            const bool on = static_cast<int>(si) == step_index ||
                            (mode == TrainMode::Cobra && tc.rehearsal_updates_old_modules &&
                             tc.buffer_capacity > 0);
            set_trainable(model.steps[si], on);
        }

        std::vector<Sample> pool;
        for (int id : group) {
            auto s = data.train_samples(id);
            pool.insert(pool.end(), s.begin(), s.end());
        }
        pool.insert(pool.end(), buffer.samples.begin(), buffer.samples.end());
        if (pool.empty()) throw DataError("no training samples for step " + std::to_string(t));

        AdamWConfig ac;
        ac.lr = tc.lr;
        ac.weight_decay = tc.weight_decay;
        AdamW opt(collect_trainable(model), ac);

        const int64_t batches_per_epoch =
            (static_cast<int64_t>(pool.size()) + tc.batch_size - 1) / tc.batch_size;
        CosineSchedule sched{tc.lr, tc.epochs * batches_per_epoch};
        int64_t global_batch = 0;

        std::vector<size_t> order(pool.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;

        for (int epoch = 0; epoch < tc.epochs; ++epoch) {
            step_rng.shuffle(order);
            EpochRecord rec;
            rec.step = static_cast<int>(t);
            rec.epoch = epoch;
            int64_t n_batches = 0;
            for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tc.batch_size)) {
                const size_t end = std::min(order.size(), start + static_cast<size_t>(tc.batch_size));
                const int bsz = static_cast<int>(end - start);
                opt.zero_grad();

                Tensor l_c_sum = Tensor::scalar(0.0f);
                Tensor l_s_sum = Tensor::scalar(0.0f);
                std::vector<Tensor> f_mri_batch, clip_batch;
                for (size_t bi = start; bi < end; ++bi) {
                    const Sample& s = pool[order[bi]];
                    // Buffered samples from earlier subjects pass through the
                    // current step's modules (joint update) unless
                    // rehearsal_updates_old_modules re-opens their own sets.
                    int route = step_index;
                    if (mode == TrainMode::Naive)
                        route = 0;
                    else if (tc.rehearsal_updates_old_modules && tc.buffer_capacity > 0)
                        route = model.routing.at(s.subject_id);
                    auto out = model.forward_with_step(s.grid, route);
                    l_c_sum = ops::add(l_c_sum, commonality_loss(out.y_c, s.labels));
                    l_s_sum = ops::add(l_s_sum, subject_loss(out.f_s, s.subject_id, model.registry));
                    f_mri_batch.push_back(out.f_mri);
                    clip_batch.push_back(clip_target(s, mc.l_clip, mc.d_model));
                }
                const Tensor l_c = ops::affine(l_c_sum, 1.0f / bsz, 0.0f);
                const Tensor l_s = ops::affine(l_s_sum, 1.0f / bsz, 0.0f);
                const Tensor l_con = contrastive_loss(f_mri_batch, clip_batch, mc.sigma);
                const Tensor l_reg = center_regularization(model.registry, mc.margin);
                const Tensor loss = total_loss(l_c, l_s, l_con, l_reg, tc.lambda_c,
                                               tc.lambda_s, tc.lambda_sc, tc.lambda_reg);
                backward(loss);
                const float lr_now = sched.lr(global_batch++);
                opt.set_lr(lr_now);
                opt.step();

                rec.loss += loss.item();
                rec.loss_c += l_c.item();
                rec.loss_s += l_s.item();
                rec.loss_con += l_con.item();
                rec.loss_reg += l_reg.item();
                rec.lr = lr_now;
                ++n_batches;
            }
            rec.loss /= static_cast<double>(n_batches);
            rec.loss_c /= static_cast<double>(n_batches);
            rec.loss_s /= static_cast<double>(n_batches);
            rec.loss_con /= static_cast<double>(n_batches);
            rec.loss_reg /= static_cast<double>(n_batches);
            result.log.push_back(rec);
        }

        if (mode == TrainMode::Cobra) {
            set_trainable(model.steps[static_cast<size_t>(step_index)], false);
            if (static_cast<int>(t) + 1 >= tc.sc_trainable_steps) set_trainable(model.sc, false);
            model.registry.freeze_all();
        }
        for (int id : group) buffer.fill_from(data.train_samples(id), rng);

        result.params_per_step.push_back(model.param_count());
        if (t == 0) result.params_after_first_step = result.params_per_step.back();

        const std::string bytes = checkpoint_to_bytes(model, cfg, rng);
        result.step_checkpoints.push_back(bytes);
        if (!out_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof(name), "step_%02zu.ckpt", t + 1);
            std::ofstream os(std::filesystem::path(out_dir) / name, std::ios::binary);
            os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
            if (!os) throw DataError("cannot write checkpoint in " + out_dir);
        }
    }

    result.rng = rng;
    if (!out_dir.empty()) {
        write_train_log(result.log, (std::filesystem::path(out_dir) / "train_log.ndjson").string());
        std::ofstream cf(std::filesystem::path(out_dir) / "resolved_config.txt");
        cf << cfg.resolved_text();
    }
    return result;
}

void write_train_log(const std::vector<EpochRecord>& log, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open log for writing: " + path);
    for (const auto& r : log) {
        os << "{\"step\":" << r.step << ",\"epoch\":" << r.epoch
           << ",\"loss\":" << io::format_g6(r.loss)
           << ",\"loss_c\":" << io::format_g6(r.loss_c)
           << ",\"loss_s\":" << io::format_g6(r.loss_s)
           << ",\"loss_con\":" << io::format_g6(r.loss_con)
           << ",\"loss_reg\":" << io::format_g6(r.loss_reg)
           << ",\"lr\":" << io::format_g6(r.lr) << "}\n";
    }
}

}  // namespace cobra
