// Command-line entry point: dataset generation, training, evaluation,
// ablation grids, subgoal analysis and expert replay, all reproducible from a
// master seed. Exit codes: 0 success, 1 failure, 2 usage error.

#include <CLI11.hpp>

#include "gridagent/eval/evaluation.hpp"
#include "gridagent/nn/kernels.hpp"

using namespace gridagent;

namespace {

std::string env_data_root() {
    const char* v = std::getenv("GRIDAGENT_DATA_ROOT");
    return v ? std::string(v) : std::string();
}

// first-pass scan so config-file values become option defaults
std::string scan_config_path(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") return argv[i + 1];
    return {};
}

void dump_resolved(const std::filesystem::path& out_dir, const std::string& command,
                   const json& config) {
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir);
    json j = {{"command", command}, {"config", config}};
    write_file(out_dir / "resolved_config.json", j.dump(1));
}

ModelConfig load_model_config(const std::string& path) {
    if (path.empty()) return ModelConfig{};
    return ModelConfig::from_json(json::parse(read_file(path)));
}

void apply_eval_flags(ModelConfig& cfg, bool no_evasion, bool no_ia, bool zero_vision,
                      bool no_language, bool goal_only, bool instructions_only) {
    if (no_evasion) cfg.evasion = false;
    if (no_ia) cfg.instance_association = false;
    if (zero_vision) cfg.zero_vision = true;
    if (no_language) {
        cfg.withhold_goal = true;
        cfg.withhold_instructions = true;
    }
    if (goal_only) cfg.withhold_instructions = true;
    if (instructions_only) cfg.withhold_goal = true;
}

int run_gen_data(const DatasetConfig& cfg, const std::string& out) {
    DatasetManifest manifest = build_dataset(cfg, out);
    dump_resolved(out, "gen-data", cfg.to_json());
    printf("dataset written to %s\n", out.c_str());
    printf("episodes: train=%zu valid_seen=%zu valid_unseen=%zu\n",
           manifest.split(Split::Train).size(), manifest.split(Split::SeenEval).size(),
           manifest.split(Split::UnseenEval).size());
    printf("manifest hash: %s\n", hex64(manifest_hash(out)).c_str());
    return 0;
}

int run_replay_expert(const std::string& data, int jobs) {
    DatasetManifest manifest = load_manifest(data);
    EvalOptions opts;
    opts.jobs = jobs;
    int episodes = 0, blocked = 0, api_fail = 0;
    double successes = 0;
    for (Split split : {Split::Train, Split::SeenEval, Split::UnseenEval}) {
        EvalReport rep = evaluate_expert_replay(data, manifest, split, opts);
        episodes += rep.metrics.episodes;
        successes += rep.metrics.task_sr * rep.metrics.episodes;
        for (const auto& e : rep.episodes)
            for (const auto& log : e.logs) {
                blocked += log.event == StepEvent::Blocked;
                api_fail += log.event == StepEvent::ApiFail;
            }
    }
    const double sr = episodes ? successes / episodes : 0.0;
    printf("expert replay over %d episodes: Task SR %.3f, blocked=%d, api_fail=%d\n", episodes, sr,
           blocked, api_fail);
    return (sr == 1.0 && blocked == 0 && api_fail == 0) ? 0 : 1;
}

std::vector<Split> parse_splits(const std::string& name) {
    if (name == "valid_seen") return {Split::SeenEval};
    if (name == "valid_unseen") return {Split::UnseenEval};
    if (name == "train") return {Split::Train};
    if (name == "both") return {Split::SeenEval, Split::UnseenEval};
    throw CLI::ValidationError("--split", "expected train, valid_seen, valid_unseen or both");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"household gridworld instruction-following agent"};
    app.require_subcommand(1);

    const std::string config_path = scan_config_path(argc, argv);

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "generate the demonstration dataset");
    DatasetConfig gen_cfg;
    std::string gen_out = env_data_root();
    gen->add_option("--seed", gen_cfg.master_seed, "master seed");
    gen->add_option("--out", gen_out, "output dataset directory")->required(env_data_root().empty());
    gen->add_option("--train", gen_cfg.train_episodes, "train episodes");
    gen->add_option("--seen", gen_cfg.seen_episodes, "valid_seen episodes");
    gen->add_option("--unseen", gen_cfg.unseen_episodes, "valid_unseen episodes");
    gen->add_option("--jobs", gen_cfg.jobs, "parallel episode workers");
    gen->add_option("--confidence-noise", gen_cfg.confidence_noise_amplitude,
                    "segmenter confidence noise amplitude");
    gen->add_flag("--mask-noise", gen_cfg.mask_noise, "erode/dilate segmenter masks by one pixel");
    gen->add_option("--max-steps", gen_cfg.max_steps, "expert trajectory length cap");

    // ---- train ----
    auto* tr = app.add_subcommand("train", "behavior-clone a model on a dataset");
    ModelConfig train_cfg = load_model_config(config_path);
    std::string train_data = env_data_root(), train_out, train_config_file;
    TrainOptions train_opts;
    int train_max_episodes = -1;
    bool f_single = false, f_no_ocl = false, f_no_df = false, f_no_aug = false;
    std::string ipm_lang, apm_lang;
    tr->add_option("--config", train_config_file, "model config JSON (defaults for other flags)");
    tr->add_option("--data", train_data, "dataset directory")->required(env_data_root().empty());
    tr->add_option("--out", train_out, "run directory")->required();
    tr->add_option("--seed", train_cfg.seed, "training seed");
    tr->add_option("--epochs", train_cfg.epochs, "training epochs");
    tr->add_option("--batch", train_cfg.batch_size, "batch size");
    tr->add_option("--lr", train_cfg.learning_rate, "learning rate");
    tr->add_option("--dropout", train_cfg.dropout, "dropout probability");
    tr->add_flag("--single-stream", f_single, "collapse the two streams into one");
    tr->add_flag("--no-ocl", f_no_ocl, "replace class prediction with the mask head");
    tr->add_flag("--no-dynamic-filters", f_no_df, "replace dynamic filters with mean pooling");
    tr->add_flag("--no-augmentation", f_no_aug, "train without trajectory augmentation");
    tr->add_option("--ipm-lang", ipm_lang, "perception stream language: goal|instructions|both");
    tr->add_option("--apm-lang", apm_lang, "policy stream language: goal|instructions|both");
    tr->add_option("--jobs", train_opts.jobs, "parallel gradient workers (bit-deterministic)");
    tr->add_option("--max-episodes", train_max_episodes, "cap on train episodes (smoke tests)");

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "roll out a checkpoint on validation splits");
    std::string eval_ckpt, eval_data = env_data_root(), eval_out, eval_split = "both";
    int eval_jobs = 1;
    bool eval_table = false, eval_logs = false;
    bool no_evasion = false, no_ia = false, zero_vision = false, no_language = false,
         goal_only = false, instructions_only = false;
    RolloutLimits eval_limits;
    ev->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    ev->add_option("--data", eval_data, "dataset directory")->required(env_data_root().empty());
    ev->add_option("--out", eval_out, "report directory");
    ev->add_option("--split", eval_split, "train|valid_seen|valid_unseen|both");
    ev->add_option("--jobs", eval_jobs, "parallel episodes");
    ev->add_option("--max-steps", eval_limits.max_steps, "rollout step limit");
    ev->add_flag("--table", eval_table, "print text tables");
    ev->add_flag("--logs", eval_logs, "write per-episode step logs");
    ev->add_flag("--no-evasion", no_evasion, "disable obstruction evasion");
    ev->add_flag("--no-instance-association", no_ia, "pick random instances of the class");
    ev->add_flag("--zero-vision", zero_vision, "zero the visual features");
    ev->add_flag("--no-language", no_language, "zero all language features");
    ev->add_flag("--goal-only", goal_only, "withhold step-by-step instructions");
    ev->add_flag("--instructions-only", instructions_only, "withhold the goal statement");

    // ---- ablate ----
    auto* ab = app.add_subcommand("ablate", "train and evaluate ablation grid rows");
    std::string ab_data = env_data_root(), ab_out, ab_rows = "a,b,c,d,e,f,g,h";
    ModelConfig ab_base = load_model_config(config_path);
    GridOptions ab_opts;
    bool ab_table = false;
    ab->add_option("--config", train_config_file, "base model config JSON");
    ab->add_option("--data", ab_data, "dataset directory")->required(env_data_root().empty());
    ab->add_option("--out", ab_out, "grid run directory")->required();
    ab->add_option("--rows", ab_rows, "comma-separated row names");
    ab->add_option("--seeds", ab_opts.seeds, "training seeds per row");
    ab->add_option("--seed", ab_base.seed, "master seed for the grid");
    ab->add_option("--epochs", ab_base.epochs, "epochs per trained row");
    ab->add_option("--jobs", ab_opts.jobs, "parallel workers");
    ab->add_flag("--table", ab_table, "print the grid table");

    // ---- subgoal-eval ----
    auto* sg = app.add_subcommand("subgoal-eval", "score each subgoal from expert prefixes");
    std::string sg_ckpt, sg_data = env_data_root(), sg_out, sg_split = "valid_seen";
    int sg_jobs = 1;
    bool sg_table = false;
    sg->add_option("--checkpoint", sg_ckpt, "model checkpoint")->required();
    sg->add_option("--data", sg_data, "dataset directory")->required(env_data_root().empty());
    sg->add_option("--out", sg_out, "report directory");
    sg->add_option("--split", sg_split, "train|valid_seen|valid_unseen");
    sg->add_option("--jobs", sg_jobs, "parallel episodes");
    sg->add_flag("--table", sg_table, "print the subgoal table");

    // ---- replay-expert ----
    auto* re = app.add_subcommand("replay-expert", "replay every stored trajectory");
    std::string re_data = env_data_root();
    int re_jobs = 1;
    re->add_option("--data", re_data, "dataset directory")->required(env_data_root().empty());
    re->add_option("--jobs", re_jobs, "parallel episodes");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return run_gen_data(gen_cfg, gen_out);

        if (tr->parsed()) {
            if (!train_config_file.empty() && train_config_file != config_path)
                train_cfg = ModelConfig::from_json(json::parse(read_file(train_config_file)));
            if (f_single) train_cfg.factorized = false;
            if (f_no_ocl) train_cfg.ocl = false;
            if (f_no_df) train_cfg.dynamic_filters = false;
            if (f_no_aug) train_cfg.augmentation = false;
            if (!ipm_lang.empty()) train_cfg.ipm_language = stream_language_from_name(ipm_lang);
            if (!apm_lang.empty()) train_cfg.apm_language = stream_language_from_name(apm_lang);
            train_opts.run_dir = train_out;
            train_opts.max_train_episodes = train_max_episodes;
            train_opts.quiet = false;
            nn::kernels::set_threads(train_opts.jobs);
            dump_resolved(train_out, "train", train_cfg.to_json());
            TrainResult res = train(train_data, train_cfg, train_opts);
            printf("checkpoint: %s\n", res.checkpoint.string().c_str());
            printf("final: loss %.4f, action acc %.3f, class acc %.3f\n", res.metrics.back().loss,
                   res.metrics.back().action_accuracy, res.metrics.back().class_accuracy);
            return 0;
        }

        if (ev->parsed()) {
            auto model = Model::load(eval_ckpt);
            apply_eval_flags(model->mutable_config(), no_evasion, no_ia, zero_vision, no_language,
                             goal_only, instructions_only);
            DatasetManifest manifest = load_manifest(eval_data);
            dump_resolved(eval_out, "eval", model->config().to_json());
            for (Split split : parse_splits(eval_split)) {
                EvalOptions opts;
                opts.jobs = eval_jobs;
                opts.limits = eval_limits;
                if (!eval_out.empty() && eval_logs)
                    opts.log_path = std::filesystem::path(eval_out) /
                                    (std::string("episodes_") + dataset_split_dir(split) + ".jsonl");
                EvalReport rep = evaluate_split(*model, eval_data, manifest, split, opts);
                if (!eval_out.empty())
                    write_file(std::filesystem::path(eval_out) /
                                   (std::string("report_") + dataset_split_dir(split) + ".json"),
                               rep.to_json().dump(1));
                if (eval_table)
                    fputs(rep.table_text().c_str(), stdout);
                else
                    printf("[%s] task %.4f (plw %.4f) goal-cond %.4f (plw %.4f)\n",
                           dataset_split_dir(split), rep.metrics.task_sr, rep.metrics.plw_task_sr,
                           rep.metrics.goal_cond_sr, rep.metrics.plw_goal_cond_sr);
            }
            return 0;
        }

        if (ab->parsed()) {
            std::vector<AblationRow> rows;
            std::stringstream ss(ab_rows);
            std::string name;
            while (std::getline(ss, name, ',')) rows.push_back(ablation_row(name, ab_base));
            ab_opts.run_dir = ab_out;
            dump_resolved(ab_out, "ablate", ab_base.to_json());
            GridReport rep = ablation_grid(ab_data, rows, ab_base, ab_opts);
            if (ab_table) fputs(rep.table_text().c_str(), stdout);
            printf("grid written to %s (%zu rows, %d seeds)\n", ab_out.c_str(), rep.rows.size(),
                   rep.seeds);
            return 0;
        }

        if (sg->parsed()) {
            auto model = Model::load(sg_ckpt);
            DatasetManifest manifest = load_manifest(sg_data);
            EvalOptions opts;
            opts.jobs = sg_jobs;
            Split split = parse_splits(sg_split).front();
            SubgoalReport rep = subgoal_eval(*model, sg_data, manifest, split, opts);
            if (!sg_out.empty()) {
                dump_resolved(sg_out, "subgoal-eval", model->config().to_json());
                write_file(std::filesystem::path(sg_out) / "subgoals.json", rep.to_json().dump(1));
            }
            if (sg_table) fputs(rep.table_text().c_str(), stdout);
            return 0;
        }

        if (re->parsed()) return run_replay_expert(re_data, re_jobs);
    } catch (const std::exception& e) {
        fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
