#include "gridagent/eval/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gridagent {

double plw(double success, int expert_length, int agent_length) {
    if (expert_length < 1 || agent_length < 1)
        throw std::invalid_argument("plw: path lengths must be >= 1");
    return success * static_cast<double>(expert_length) /
           static_cast<double>(std::max(expert_length, agent_length));
}

json SplitMetrics::to_json() const {
    return {{"episodes", episodes},
            {"task_sr", task_sr},
            {"goal_cond_sr", goal_cond_sr},
            {"plw_task_sr", plw_task_sr},
            {"plw_goal_cond_sr", plw_goal_cond_sr}};
}

SplitMetrics aggregate(const std::vector<EpisodeResult>& results) {
    SplitMetrics m;
    m.episodes = static_cast<int>(results.size());
    if (results.empty()) return m;
    for (const auto& r : results) {
        const double success = r.task_success ? 1.0 : 0.0;
        const double fraction = r.total > 0 ? static_cast<double>(r.satisfied) / r.total : 0.0;
        m.task_sr += success;
        m.goal_cond_sr += fraction;
        m.plw_task_sr += plw(success, r.expert_path_length, r.agent_path_length);
        m.plw_goal_cond_sr += plw(fraction, r.expert_path_length, r.agent_path_length);
    }
    m.task_sr /= m.episodes;
    m.goal_cond_sr /= m.episodes;
    m.plw_task_sr /= m.episodes;
    m.plw_goal_cond_sr /= m.episodes;
    return m;
}

json EvalReport::to_json(bool with_episodes) const {
    json j;
    j["split"] = split;
    j["metrics"] = metrics.to_json();
    json per_type;
    for (const auto& [name, m] : per_task_type) per_type[name] = m.to_json();
    j["per_task_type"] = per_type;
    if (with_episodes) {
        j["episodes"] = json::array();
        for (const auto& e : episodes) j["episodes"].push_back(e.to_json(false));
    }
    return j;
}

std::string EvalReport::table_text() const {
    std::ostringstream os;
    char buf[160];
    snprintf(buf, sizeof(buf), "%-18s %10s %13s %12s %15s\n", ("[" + split + "]").c_str(), "Task",
             "(PLW)", "Goal-Cond", "(PLW)");
    os << buf;
    snprintf(buf, sizeof(buf), "%-18s %9.2f%% %12.2f%% %11.2f%% %14.2f%%\n", "all",
             100 * metrics.task_sr, 100 * metrics.plw_task_sr, 100 * metrics.goal_cond_sr,
             100 * metrics.plw_goal_cond_sr);
    os << buf;
    for (const auto& [name, m] : per_task_type) {
        snprintf(buf, sizeof(buf), "%-18s %9.2f%% %12.2f%% %11.2f%% %14.2f%%\n", name.c_str(),
                 100 * m.task_sr, 100 * m.plw_task_sr, 100 * m.goal_cond_sr,
                 100 * m.plw_goal_cond_sr);
        os << buf;
    }
    return os.str();
}

namespace {

EvalReport finish_report(const char* split_dir, std::vector<EpisodeResult> results,
                         const std::filesystem::path& log_path) {
    EvalReport rep;
    rep.split = split_dir;
    rep.metrics = aggregate(results);
    for (int tt = 0; tt < 5; ++tt) {
        std::vector<EpisodeResult> of_type;
        for (const auto& r : results)
            if (r.task_type == static_cast<TaskType>(tt)) of_type.push_back(r);
        if (!of_type.empty())
            rep.per_task_type.emplace_back(task_type_name(static_cast<TaskType>(tt)),
                                           aggregate(of_type));
    }
    if (!log_path.empty()) {
        std::ofstream out(log_path);
        for (const auto& r : results) out << r.to_json(true).dump() << "\n";
    }
    rep.episodes = std::move(results);
    return rep;
}

}  // namespace

EvalReport evaluate_split(Model& model, const std::filesystem::path& dataset_dir,
                          const DatasetManifest& manifest, Split split, const EvalOptions& options,
                          const WorldSpec& spec) {
    if (model.vocab_hash() != manifest.vocab_hash)
        throw std::runtime_error("checkpoint vocabulary hash does not match the dataset");
    const auto& metas = manifest.split(split);
    std::vector<EpisodeResult> results(metas.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, options.jobs))
#endif
    for (int i = 0; i < static_cast<int>(metas.size()); ++i) {
        Trajectory episode = load_trajectory(dataset_dir, metas[i], /*with_observations=*/false, spec);
        results[i] = rollout_model(model, episode, options.limits, spec);
        results[i].episode_index = metas[i].index;
    }
    return finish_report(dataset_split_dir(split), std::move(results), options.log_path);
}

EvalReport evaluate_expert_replay(const std::filesystem::path& dataset_dir,
                                  const DatasetManifest& manifest, Split split,
                                  const EvalOptions& options, const WorldSpec& spec) {
    const auto& metas = manifest.split(split);
    std::vector<EpisodeResult> results(metas.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, options.jobs))
#endif
    for (int i = 0; i < static_cast<int>(metas.size()); ++i) {
        Trajectory episode = load_trajectory(dataset_dir, metas[i], /*with_observations=*/true, spec);
        results[i] = rollout_expert_replay(episode, options.limits, spec);
        results[i].episode_index = metas[i].index;
    }
    return finish_report(dataset_split_dir(split), std::move(results), options.log_path);
}

// ---------------------------------------------------------------------------
// Subgoal evaluation

namespace {

bool subgoal_satisfied(const EpisodeState& s, const Subgoal& sg) {
    const int n_recep = static_cast<int>(s.layout.receptacles.size());
    switch (sg.kind) {
        case SubgoalKind::Goto:
            return s.ahead() == sg.target_cell;
        case SubgoalKind::Pickup:
            return s.holding == sg.target_instance - n_recep;
        case SubgoalKind::Put: {
            const int obj = sg.object_instance - n_recep;
            const auto& loc = s.object_location[obj];
            return s.holding != obj && !loc.on_floor && loc.receptacle == sg.target_instance;
        }
        case SubgoalKind::Open:
            return s.open_state[sg.target_instance] == 1;
        case SubgoalKind::Close:
            return s.open_state[sg.target_instance] == 0;
        case SubgoalKind::Toggle:
            return s.on_state[sg.target_instance] == 1;
        case SubgoalKind::Slice:
            return s.sliced[sg.target_instance - n_recep] == 1;
    }
    return false;
}

void mask_centroid(const PixelMask& mask, int width, double& cy, double& cx) {
    double sy = 0, sx = 0;
    int n = 0;
    for (size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p]) continue;
        sy += static_cast<double>(p / width);
        sx += static_cast<double>(p % width);
        ++n;
    }
    cy = n ? sy / n : 0;
    cx = n ? sx / n : 0;
}

struct SubgoalAccum {
    int attempts = 0;
    int successes = 0;
    double plw_sum = 0;
};

// model == nullptr replays the expert segment (the oracle ceiling).
SubgoalAttempt run_subgoal_attempt(Model* model, const Trajectory& traj, const Subgoal& sg,
                                   const RolloutLimits& limits, const WorldSpec& spec) {
    EpisodeState state = reset(traj.layout, traj.goal, traj.start, traj.world_options, spec);

    std::unique_ptr<Model::EpisodeContext> ctx;
    AssociationState assoc;
    nn::Tensor v_prev;
    std::optional<ActionTag> prev_tag;
    int prev_row = kActionStartSentinel;
    if (model) ctx = model->begin_episode(traj.language, false, 0);

    // teacher-forced prefix: expert actions drive the world, the model builds
    // recurrent and association state alongside
    for (int t = 0; t < sg.start; ++t) {
        const auto& ts = traj.steps[t];
        if (model) {
            Observation obs = render(state);
            Model::StepOutput out = model->step(*ctx, obs, prev_row);
            v_prev = ctx->graph().value(out.visual);
        }
        if (is_interaction(ts.action.tag)) {
            assoc.prev_class = ts.interaction_class;
            assoc.has_center = true;
            mask_centroid(ts.action.mask, spec.obs_px(), assoc.center_y, assoc.center_x);
        }
        if (step(state, ts.action) == StepEvent::ApiFail)
            return {};  // prefix must replay cleanly
        prev_tag = ts.action.tag;
        prev_row = static_cast<int>(ts.action.tag);
    }

    SubgoalAttempt attempt;
    const int budget = sg.length + 20;
    int consecutive_api_fail = 0;
    for (int u = 0; u < budget; ++u) {
        Action action;
        bool obstruction = false;
        if (!model) {
            action = traj.steps[sg.start + u].action;
        } else {
            Observation obs = render(state);
            Model::StepOutput out = model->step(*ctx, obs, prev_row);
            const nn::Tensor v_t = ctx->graph().value(out.visual);
            const nn::Tensor action_logits = ctx->graph().value(out.action_logits);
            EvasionConfig evasion = model->config().evasion_config;
            evasion.enabled = evasion.enabled && model->config().evasion;
            obstruction = prev_tag.has_value() && evasion.enabled && u + sg.start > 0 &&
                          !v_prev.data.empty() && detect_obstruction(v_prev, v_t, evasion.epsilon);
            ActionChoice choice = select_action(action_logits, obstruction, prev_tag, evasion);
            action.tag = choice.action;
            if (is_interaction(action.tag)) {
                if (model->config().ocl) {
                    const nn::Tensor class_logits = ctx->graph().value(out.class_logits);
                    int c = 0;
                    for (int i = 1; i < class_logits.numel(); ++i)
                        if (class_logits.data[i] > class_logits.data[c]) c = i;
                    if (model->config().instance_association) {
                        action.mask = localise(c, state, assoc);
                    } else {
                        action.mask = localise_random(
                            c, state, derive_seed(traj.episode_seed, "sg-random", u));
                    }
                } else {
                    const nn::Tensor mask_logits = ctx->graph().value(out.mask_logits);
                    action.mask.assign(mask_logits.data.size(), 0);
                    for (size_t i = 0; i < mask_logits.data.size(); ++i)
                        action.mask[i] = mask_logits.data[i] > 0.0 ? 1 : 0;
                }
            }
            v_prev = v_t;
        }

        if (state.terminated) break;
        StepEvent ev = step(state, action);
        attempt.steps_used += 1;
        prev_tag = action.tag;
        prev_row = static_cast<int>(action.tag);

        if (subgoal_satisfied(state, sg)) {
            attempt.success = true;
            break;
        }
        if (ev == StepEvent::Done) break;
        consecutive_api_fail = ev == StepEvent::ApiFail ? consecutive_api_fail + 1 : 0;
        if (consecutive_api_fail >= limits.max_consecutive_api_fail) break;
    }

    attempt.plw_score = attempt.success && attempt.steps_used >= 1
                            ? plw(1.0, sg.length, attempt.steps_used)
                            : 0.0;
    return attempt;
}

SubgoalReport subgoal_report_from(const std::vector<std::array<SubgoalAccum, kNumSubgoalKinds>>& parts) {
    std::array<SubgoalAccum, kNumSubgoalKinds> total{};
    for (const auto& part : parts)
        for (int k = 0; k < kNumSubgoalKinds; ++k) {
            total[k].attempts += part[k].attempts;
            total[k].successes += part[k].successes;
            total[k].plw_sum += part[k].plw_sum;
        }
    SubgoalReport rep;
    for (int k = 0; k < kNumSubgoalKinds; ++k) {
        SubgoalRow row;
        row.kind = static_cast<SubgoalKind>(k);
        row.attempts = total[k].attempts;
        row.success_rate =
            total[k].attempts ? static_cast<double>(total[k].successes) / total[k].attempts : 0.0;
        row.plw = total[k].attempts ? total[k].plw_sum / total[k].attempts : 0.0;
        rep.rows.push_back(row);
    }
    return rep;
}

}  // namespace

json SubgoalReport::to_json() const {
    json j = json::array();
    for (const auto& row : rows)
        j.push_back({{"subgoal", subgoal_kind_name(row.kind)},
                     {"attempts", row.attempts},
                     {"success_rate", row.success_rate},
                     {"plw", row.plw}});
    return j;
}

std::string SubgoalReport::table_text() const {
    std::ostringstream os;
    char buf[120];
    snprintf(buf, sizeof(buf), "%-10s %9s %10s %10s\n", "Subgoal", "Attempts", "Success", "PLW");
    os << buf;
    for (const auto& row : rows) {
        snprintf(buf, sizeof(buf), "%-10s %9d %9.1f%% %9.1f%%\n", subgoal_kind_name(row.kind),
                 row.attempts, 100 * row.success_rate, 100 * row.plw);
        os << buf;
    }
    return os.str();
}

SubgoalReport subgoal_eval(Model& model, const std::filesystem::path& dataset_dir,
                           const DatasetManifest& manifest, Split split, const EvalOptions& options,
                           const WorldSpec& spec) {
    const auto& metas = manifest.split(split);
    std::vector<std::array<SubgoalAccum, kNumSubgoalKinds>> parts(metas.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, options.jobs))
#endif
    for (int i = 0; i < static_cast<int>(metas.size()); ++i) {
        Trajectory traj = load_trajectory(dataset_dir, metas[i], /*with_observations=*/false, spec);
        parts[i] = {};
        for (const auto& sg : traj.subgoals) {
            SubgoalAttempt attempt = run_subgoal_attempt(&model, traj, sg, options.limits, spec);
            auto& acc = parts[i][static_cast<int>(sg.kind)];
            acc.attempts += 1;
            acc.successes += attempt.success ? 1 : 0;
            acc.plw_sum += attempt.plw_score;
        }
    }
    return subgoal_report_from(parts);
}

SubgoalReport subgoal_eval_expert(const std::filesystem::path& dataset_dir,
                                  const DatasetManifest& manifest, Split split,
                                  const EvalOptions& options, const WorldSpec& spec) {
    const auto& metas = manifest.split(split);
    std::vector<std::array<SubgoalAccum, kNumSubgoalKinds>> parts(metas.size());
    for (int i = 0; i < static_cast<int>(metas.size()); ++i) {
        Trajectory traj = load_trajectory(dataset_dir, metas[i], /*with_observations=*/false, spec);
        parts[i] = {};
        for (const auto& sg : traj.subgoals) {
            SubgoalAttempt attempt = run_subgoal_attempt(nullptr, traj, sg, options.limits, spec);
            auto& acc = parts[i][static_cast<int>(sg.kind)];
            acc.attempts += 1;
            acc.successes += attempt.success ? 1 : 0;
            acc.plw_sum += attempt.plw_score;
        }
    }
    return subgoal_report_from(parts);
}

// ---------------------------------------------------------------------------
// Ablation grid

namespace {

void set_table3_flags(ModelConfig& c, bool fpp, bool ocl, bool df, bool da) {
    c.factorized = fpp;
    c.ocl = ocl;
    c.dynamic_filters = df;
    c.augmentation = da;
}

}  // namespace

AblationRow ablation_row(const std::string& name, const ModelConfig& base) {
    AblationRow row;
    row.name = name;
    row.config = base;
    if (name == "a") {
        set_table3_flags(row.config, true, true, true, true);
        row.description = "full model";
    } else if (name == "b") {
        set_table3_flags(row.config, false, true, true, true);
        row.description = "single stream";
    } else if (name == "c") {
        set_table3_flags(row.config, true, true, true, false);
        row.description = "no augmentation";
    } else if (name == "d") {
        set_table3_flags(row.config, false, true, true, false);
        row.description = "single stream, no augmentation";
    } else if (name == "e") {
        set_table3_flags(row.config, true, true, false, false);
        row.description = "no dynamic filters";
    } else if (name == "f") {
        set_table3_flags(row.config, false, true, false, false);
        row.description = "single stream, no dynamic filters";
    } else if (name == "g") {
        set_table3_flags(row.config, true, false, true, false);
        row.description = "mask head instead of class prediction";
    } else if (name == "h") {
        set_table3_flags(row.config, false, false, true, false);
        row.description = "single stream with mask head";
    } else if (name == "no_ia") {
        row.config.instance_association = false;
        row.reuse_full_checkpoint = true;
        row.description = "random instance instead of association";
    } else if (name == "no_oe") {
        row.config.evasion = false;
        row.reuse_full_checkpoint = true;
        row.description = "no obstruction evasion";
    } else if (name == "no_language") {
        row.config.withhold_goal = true;
        row.config.withhold_instructions = true;
        row.reuse_full_checkpoint = true;
        row.description = "language zeroed at inference";
    } else if (name == "no_vision") {
        row.config.zero_vision = true;
        row.reuse_full_checkpoint = true;
        row.description = "visual features zeroed at inference";
    } else if (name == "goal_only") {
        row.config.withhold_instructions = true;
        row.reuse_full_checkpoint = true;
        row.description = "instructions withheld";
    } else if (name == "instructions_only") {
        row.config.withhold_goal = true;
        row.reuse_full_checkpoint = true;
        row.description = "goal statement withheld";
    } else if (name == "lang_gi_i") {
        row.config.ipm_language = StreamLanguage::Both;
        row.config.apm_language = StreamLanguage::Instructions;
        row.description = "stream inputs G,I / I";
    } else if (name == "lang_g_gi") {
        row.config.ipm_language = StreamLanguage::Goal;
        row.config.apm_language = StreamLanguage::Both;
        row.description = "stream inputs G / G,I";
    } else if (name == "lang_gi_gi") {
        row.config.ipm_language = StreamLanguage::Both;
        row.config.apm_language = StreamLanguage::Both;
        row.description = "stream inputs G,I / G,I";
    } else {
        throw std::invalid_argument("unknown ablation row: " + name);
    }
    return row;
}

std::vector<AblationRow> standard_ablation_rows(const ModelConfig& base) {
    std::vector<AblationRow> rows;
    for (const char* name : {"a", "b", "c", "d", "e", "f", "g", "h", "no_ia", "no_oe", "no_language",
                             "no_vision", "goal_only", "instructions_only", "lang_gi_i", "lang_g_gi",
                             "lang_gi_gi"})
        rows.push_back(ablation_row(name, base));
    return rows;
}

json GridReport::to_json() const {
    json j;
    j["seeds"] = seeds;
    j["rows"] = json::array();
    for (const auto& row : rows) {
        json rj;
        rj["name"] = row.name;
        rj["description"] = row.description;
        rj["mean"] = {{"seen", row.mean.seen.to_json()}, {"unseen", row.mean.unseen.to_json()}};
        rj["per_seed"] = json::array();
        for (const auto& cell : row.per_seed)
            rj["per_seed"].push_back(
                {{"seen", cell.seen.to_json()}, {"unseen", cell.unseen.to_json()}});
        j["rows"].push_back(rj);
    }
    return j;
}

std::string GridReport::table_text() const {
    std::ostringstream os;
    char buf[200];
    snprintf(buf, sizeof(buf), "%-20s %-36s %22s %24s\n", "#", "variant", "Val-Seen Task (PLW)",
             "Val-Unseen Task (PLW)");
    os << buf;
    for (const auto& row : rows) {
        snprintf(buf, sizeof(buf), "%-20s %-36s %13.2f (%5.2f) %15.2f (%5.2f)\n", row.name.c_str(),
                 row.description.c_str(), 100 * row.mean.seen.task_sr, 100 * row.mean.seen.plw_task_sr,
                 100 * row.mean.unseen.task_sr, 100 * row.mean.unseen.plw_task_sr);
        os << buf;
    }
    return os.str();
}

std::string GridReport::csv_text() const {
    std::ostringstream os;
    os << "row,description,seen_task,seen_plw_task,seen_goal_cond,seen_plw_goal_cond,"
          "unseen_task,unseen_plw_task,unseen_goal_cond,unseen_plw_goal_cond\n";
    for (const auto& row : rows) {
        os << row.name << ",\"" << row.description << "\"," << row.mean.seen.task_sr << ","
           << row.mean.seen.plw_task_sr << "," << row.mean.seen.goal_cond_sr << ","
           << row.mean.seen.plw_goal_cond_sr << "," << row.mean.unseen.task_sr << ","
           << row.mean.unseen.plw_task_sr << "," << row.mean.unseen.goal_cond_sr << ","
           << row.mean.unseen.plw_goal_cond_sr << "\n";
    }
    return os.str();
}

GridReport ablation_grid(const std::filesystem::path& dataset_dir, const std::vector<AblationRow>& rows,
                         const ModelConfig& base, const GridOptions& options, const WorldSpec& spec) {
    namespace fs = std::filesystem;
    DatasetManifest manifest = load_manifest(dataset_dir);
    const fs::path cache = options.run_dir / "checkpoints";
    fs::create_directories(cache);

    // train (or reuse) a checkpoint for a named training row and seed
    auto checkpoint_for = [&](const std::string& row_name, const ModelConfig& cfg,
                              int seed_index) -> fs::path {
        fs::path path = cache / (row_name + "_seed" + std::to_string(seed_index) + ".ckpt");
        if (fs::exists(path)) return path;
        ModelConfig train_cfg = cfg;
        train_cfg.seed = derive_seed(base.seed, "grid-" + row_name, seed_index);
        TrainOptions topt;
        topt.run_dir = cache / (row_name + "_seed" + std::to_string(seed_index) + ".run");
        topt.jobs = options.jobs;
        topt.quiet = options.quiet;
        TrainResult tr = train(dataset_dir, train_cfg, topt, spec);
        fs::copy_file(tr.checkpoint, path, fs::copy_options::overwrite_existing);
        return path;
    };

    GridReport report;
    report.seeds = options.seeds;
    for (const auto& row : rows) {
        GridRowResult rr;
        rr.name = row.name;
        rr.description = row.description;
        for (int s = 0; s < options.seeds; ++s) {
            fs::path ckpt;
            if (row.reuse_full_checkpoint) {
                ckpt = checkpoint_for("a", ablation_row("a", base).config, s);
            } else {
                ckpt = checkpoint_for(row.name, row.config, s);
            }
            auto model = Model::load(ckpt, spec);
            // inference-time flags come from the row config
            ModelConfig cfg = model->config();
            cfg.evasion = row.config.evasion;
            cfg.instance_association = row.config.instance_association;
            cfg.zero_vision = row.config.zero_vision;
            cfg.withhold_goal = row.config.withhold_goal;
            cfg.withhold_instructions = row.config.withhold_instructions;
            cfg.evasion_config = row.config.evasion_config;
            model->mutable_config() = cfg;

            EvalOptions eopt;
            eopt.limits = options.limits;
            eopt.jobs = options.jobs;
            GridCell cell;
            cell.seen = evaluate_split(*model, dataset_dir, manifest, Split::SeenEval, eopt, spec).metrics;
            cell.unseen =
                evaluate_split(*model, dataset_dir, manifest, Split::UnseenEval, eopt, spec).metrics;
            rr.per_seed.push_back(cell);
        }
        auto mean_of = [&](auto pick) {
            SplitMetrics m;
            for (const auto& cell : rr.per_seed) {
                const SplitMetrics& x = pick(cell);
                m.episodes = x.episodes;
                m.task_sr += x.task_sr / options.seeds;
                m.goal_cond_sr += x.goal_cond_sr / options.seeds;
                m.plw_task_sr += x.plw_task_sr / options.seeds;
                m.plw_goal_cond_sr += x.plw_goal_cond_sr / options.seeds;
            }
            return m;
        };
        rr.mean.seen = mean_of([](const GridCell& c) -> const SplitMetrics& { return c.seen; });
        rr.mean.unseen = mean_of([](const GridCell& c) -> const SplitMetrics& { return c.unseen; });
        report.rows.push_back(std::move(rr));
    }

    if (!options.run_dir.empty()) {
        write_file(options.run_dir / "grid.json", report.to_json().dump(1));
        write_file(options.run_dir / "grid.csv", report.csv_text());
        write_file(options.run_dir / "grid.txt", report.table_text());
    }
    return report;
}

}  // namespace gridagent
