// Command-line driver: dataset generation, continual training, evaluation,
// top-k ablation, and parameter-growth curves over the synthetic benchmark.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cobra/checkpoint.hpp"
#include "cobra/eval.hpp"
#include "cobra/serialize.hpp"
#include "cobra/synthdata.hpp"
#include "cobra/trainer.hpp"

namespace fs = std::filesystem;
using namespace cobra;

namespace {

constexpr const char* kVersion = "cobra 1.0.0";

struct CommonArgs {
    std::string config_path;
    std::string data_path;
    std::string out_path;
    std::string plan;
    std::string mode = "cobra";
    std::string topk = "1,2,4,8,16";
    std::string report_path;
    int buffer = -1;
    int max_subjects = 10;
    uint64_t seed = 0;
    bool seed_set = false;
};

std::string default_plan(int subjects) {
    std::ostringstream ss;
    for (int i = 1; i <= subjects; ++i) ss << (i > 1 ? "," : "") << i;
    return ss.str();
}

void write_run_info(const fs::path& dir, const ExperimentConfig& cfg,
                    const std::string& command) {
    fs::create_directories(dir);
    std::ofstream info(dir / "run_info.txt");
    info << "version = " << kVersion << "\n"
         << "command = " << command << "\n"
         << "seed = " << cfg.train.seed << "\n";
    std::ofstream rc(dir / "resolved_config.txt");
    rc << cfg.resolved_text();
}

ExperimentConfig load_config(const CommonArgs& args) {
    ExperimentConfig cfg = ExperimentConfig::parse_file(args.config_path);
    if (args.seed_set) cfg.train.seed = args.seed;
    if (!args.plan.empty()) cfg.plan = args.plan;
    if (args.buffer >= 0) cfg.train.buffer_capacity = args.buffer;
    if (cfg.plan.empty()) cfg.plan = default_plan(cfg.data.subjects);
    return cfg;
}

int cmd_generate(const CommonArgs& args) {
    const ExperimentConfig cfg = load_config(args);
    const Dataset d = generate(cfg.data, cfg.model.l_clip, cfg.model.d_model,
                               cfg.train.seed);
    save_dataset(d, args.out_path);
    std::ofstream rc(args.out_path + ".config.txt");
    rc << cfg.resolved_text();
    std::cout << "wrote " << args.out_path << " (" << d.samples.size() << " samples, "
              << d.profiles.size() << " subjects)\n";
    return 0;
}

int cmd_train(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args);
    const Dataset data = load_dataset(args.data_path);
    const StepPlan plan = StepPlan::parse(cfg.plan);
    const TrainMode mode = args.mode == "naive" ? TrainMode::Naive : TrainMode::Cobra;
    write_run_info(args.out_path, cfg, "train --mode " + args.mode);
    const TrainResult run = train(plan, data, cfg, mode, args.out_path);
    const MetricReport rep = build_report(run, data, cfg, args.mode);
    emit_report(rep, (fs::path(args.out_path) / "report.ndjson").string(),
                (fs::path(args.out_path) / "forgetting.csv").string());
    std::cout << "trained " << plan.groups.size() << " steps, final params "
              << run.params_per_step.back() << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args) {
    const Dataset data = load_dataset(args.data_path);
    ExperimentConfig cfg = ExperimentConfig::parse_file(
        (fs::path(args.config_path) / "resolved_config.txt").string());
    TrainResult run;
    std::vector<fs::path> ckpts;
    for (const auto& entry : fs::directory_iterator(args.config_path)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("step_", 0) == 0 && entry.path().extension() == ".ckpt")
            ckpts.push_back(entry.path());
    }
    if (ckpts.empty()) throw DataError("no step_*.ckpt files in " + args.config_path);
    std::sort(ckpts.begin(), ckpts.end());
    for (const auto& p : ckpts) {
        std::ifstream is(p, std::ios::binary);
        std::ostringstream ss;
        ss << is.rdbuf();
        run.step_checkpoints.push_back(ss.str());
    }
    run.groups = StepPlan::parse(cfg.plan).groups;
    if (run.groups.size() != run.step_checkpoints.size())
        throw DataError("checkpoint count does not match plan steps");
    for (const auto& bytes : run.step_checkpoints) {
        auto ck = checkpoint_from_bytes(bytes);
        run.params_per_step.push_back(ck.model.param_count());
    }
    const std::string base = args.report_path.empty()
                                 ? (fs::path(args.config_path) / "report").string()
                                 : args.report_path;
    const MetricReport rep = build_report(run, data, cfg, "eval");
    emit_report(rep, base + ".ndjson", base + "_forgetting.csv");
    std::cout << "report written to " << base << ".ndjson\n";
    return 0;
}

int cmd_ablate(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args);
    const Dataset data = load_dataset(args.data_path);
    std::vector<int> ks;
    std::stringstream ss(args.topk);
    std::string tok;
    while (std::getline(ss, tok, ',')) ks.push_back(std::stoi(tok));
    if (ks.empty()) throw ParameterError("ablate: empty top-k list");
    std::sort(ks.begin(), ks.end());
    write_run_info(args.out_path, cfg, "ablate --topk " + args.topk);
    std::ofstream csv(fs::path(args.out_path) / "ablation.csv");
    csv << "topk,retrieval_2way,mean_cosine,params\n";
    for (int k : ks) {
        ExperimentConfig run_cfg = cfg;
        run_cfg.model.top_k = k;
        run_cfg.model.validate();
        const StepPlan plan = StepPlan::parse(run_cfg.plan);
        const TrainResult run = train(plan, data, run_cfg, TrainMode::Cobra, "");
        const MetricReport rep = build_report(run, data, run_cfg, "ablate");
        double retrieval = 0.0, cosine = 0.0;
        for (const auto& g : rep.groups) {
            retrieval += g.retrieval_2way * g.n_samples;
            cosine += g.mean_cosine * g.n_samples;
        }
        int total = 0;
        for (const auto& g : rep.groups) total += g.n_samples;
        csv << k << "," << io::format_g6(retrieval / total) << ","
            << io::format_g6(cosine / total) << "," << run.params_per_step.back() << "\n";
        std::cout << "topk " << k << " done\n";
    }
    return 0;
}

int cmd_growth(const CommonArgs& args) {
    const ExperimentConfig cfg = load_config(args);
    const auto rows = param_growth_curve(cfg.model, args.max_subjects);
    std::ofstream csv(args.out_path);
    if (!csv) throw DataError("cannot open " + args.out_path);
    csv << "subjects,params\n";
    for (const auto& r : rows) csv << r.subjects << "," << r.params << "\n";
    std::cout << "growth curve for 1.." << args.max_subjects << " subjects written\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"COBRA continual vision-brain decoding benchmark"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    CommonArgs args;

    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", args.seed, "override config seed")
            ->each([&](const std::string&) { args.seed_set = true; });
    };

    auto* gen = app.add_subcommand("generate", "generate a synthetic multi-subject dataset");
    gen->add_option("--config", args.config_path, "experiment config file")->required();
    gen->add_option("--out", args.out_path, "output dataset path")->required();
    add_seed(gen);

    auto* tr = app.add_subcommand("train", "run continual training");
    tr->add_option("--config", args.config_path)->required();
    tr->add_option("--data", args.data_path)->required();
    tr->add_option("--out", args.out_path, "run output directory")->required();
    tr->add_option("--plan", args.plan, "subject groups, e.g. \"3,4|6,8\"");
    tr->add_option("--mode", args.mode)->check(CLI::IsMember({"cobra", "naive"}));
    tr->add_option("--buffer", args.buffer, "rehearsal buffer capacity per subject");
    add_seed(tr);

    auto* ev = app.add_subcommand("eval", "evaluate a finished run directory");
    ev->add_option("--run", args.config_path, "run directory with step_*.ckpt")->required();
    ev->add_option("--data", args.data_path)->required();
    ev->add_option("--report", args.report_path, "report path base");

    auto* ab = app.add_subcommand("ablate", "prompt-length (top-k) sweep");
    ab->add_option("--config", args.config_path)->required();
    ab->add_option("--data", args.data_path)->required();
    ab->add_option("--out", args.out_path)->required();
    ab->add_option("--plan", args.plan, "subject groups, e.g. \"3,4|6,8\"");
    ab->add_option("--topk", args.topk, "comma-separated top-k values");
    add_seed(ab);

    auto* gr = app.add_subcommand("growth", "parameter count vs subject count");
    gr->add_option("--config", args.config_path)->required();
    gr->add_option("--out", args.out_path, "output CSV path")->required();
    gr->add_option("--max-subjects", args.max_subjects);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_generate(args);
        if (tr->parsed()) return cmd_train(args);
        if (ev->parsed()) return cmd_eval(args);
        if (ab->parsed()) return cmd_ablate(args);
        if (gr->parsed()) return cmd_growth(args);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParameterError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const RoutingError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 4;
    }
}
