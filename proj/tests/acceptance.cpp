// Acceptance suite: runs every acceptance criterion end to end against a
// freshly generated benchmark (200 train / 50 seen / 50 unseen episodes) and
// prints one PASS/FAIL line per criterion. Returns the number of failures.
//
// Usage: acceptance [criterion numbers...] [--work DIR]
// Without arguments all criteria run; artifacts are cached in the work dir so
// later criteria reuse earlier checkpoints.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

#include "gridagent/eval/evaluation.hpp"

using namespace gridagent;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double secs(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int criterion, const char* tag, bool pass, const std::string& detail) {
    printf("[%s] criterion %d%s: %s\n", pass ? "PASS" : "FAIL", criterion, tag, detail.c_str());
    fflush(stdout);
    if (!pass) ++g_failures;
}

std::string pct(double v) {
    char buf[32];
    snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * v);
    return buf;
}

// ---------------------------------------------------------------------------
// Shared benchmark configuration (pinned here, nowhere else)

constexpr uint64_t kBenchmarkSeed = 7;
constexpr int kGridSeeds = 3;
// Trained grid rows share an optimizer-step budget: augmented rows see the
// 200 originals through 5 variants, so they run a fifth of the epochs.
constexpr int kEpochsNoAugment = 30;
constexpr int kEpochsAugment = 6;

DatasetConfig benchmark_dataset_config() {
    DatasetConfig cfg;
    cfg.master_seed = kBenchmarkSeed;
    cfg.train_episodes = 200;
    cfg.seen_episodes = 50;
    cfg.unseen_episodes = 50;
    return cfg;
}

// Desk-scale dimensions for the ablation benchmark; module defaults stay the
// larger ones, these keep the full grid inside the runtime target.
ModelConfig benchmark_model_config() {
    ModelConfig c;
    c.dims.token_embed = 16;
    c.dims.lang_hidden = 16;
    c.dims.action_embed = 8;
    c.dims.visual_features = 16;
    c.dims.decoder_hidden = 32;
    c.dims.n_dynamic_filters = 4;
    c.dims.mask_head_channels = 8;
    c.learning_rate = 2e-3;
    c.epochs = kEpochsNoAugment;
    c.batch_size = 16;
    c.seed = kBenchmarkSeed;
    return c;
}

struct Context {
    std::filesystem::path work;
    std::filesystem::path dataset;
    DatasetManifest manifest;
    bool dataset_ready = false;
    std::vector<SplitMetrics> observed_reports;  // every report produced anywhere

    void ensure_dataset() {
        if (dataset_ready) return;
        dataset = work / "dataset";
        if (!std::filesystem::exists(dataset / "manifest.json")) {
            build_dataset(benchmark_dataset_config(), dataset);
        }
        manifest = load_manifest(dataset);
        dataset_ready = true;
    }
};

// ---------------------------------------------------------------------------
// 1. Expert validity

void criterion_1(Context& ctx) {
    auto t0 = Clock::now();
    ctx.ensure_dataset();
    int episodes = 0, blocked = 0, api_fail = 0, successes = 0;
    for (Split split : {Split::Train, Split::SeenEval, Split::UnseenEval}) {
        EvalReport rep = evaluate_expert_replay(ctx.dataset, ctx.manifest, split);
        episodes += rep.metrics.episodes;
        for (const auto& e : rep.episodes) {
            successes += e.task_success;
            for (const auto& log : e.logs) {
                blocked += log.event == StepEvent::Blocked;
                api_fail += log.event == StepEvent::ApiFail;
            }
        }
        ctx.observed_reports.push_back(rep.metrics);
    }
    const double dt = secs(t0);
    const bool pass =
        episodes == 300 && successes == 300 && blocked == 0 && api_fail == 0 && dt < 120.0;
    char buf[160];
    snprintf(buf, sizeof(buf),
             "expert replay Task SR %.3f over %d episodes, blocked=%d api_fail=%d (%.1fs, limit 120s)",
             episodes ? static_cast<double>(successes) / episodes : 0.0, episodes, blocked, api_fail,
             dt);
    report(1, "", pass, buf);
}

// ---------------------------------------------------------------------------
// 2. Instance-association oracle equivalence

int oracle_pick(int class_id, const std::vector<MaskInstance>& inst, const AssociationState& assoc) {
    if (inst.empty()) return -1;
    const bool assoc_branch = assoc.prev_class >= 0 && assoc.prev_class == class_id && assoc.has_center;
    int best = -1;
    for (int i = 0; i < static_cast<int>(inst.size()); ++i) {
        if (best < 0) {
            best = i;
            continue;
        }
        if (!assoc_branch) {
            if (inst[i].confidence > inst[best].confidence ||
                (inst[i].confidence == inst[best].confidence &&
                 inst[i].instance_id < inst[best].instance_id))
                best = i;
        } else {
            auto d2 = [&](const MaskInstance& m) {
                return (m.center_y - assoc.center_y) * (m.center_y - assoc.center_y) +
                       (m.center_x - assoc.center_x) * (m.center_x - assoc.center_x);
            };
            if (d2(inst[i]) < d2(inst[best])) {
                best = i;
            } else if (d2(inst[i]) == d2(inst[best])) {
                if (inst[i].confidence > inst[best].confidence ||
                    (inst[i].confidence == inst[best].confidence &&
                     inst[i].instance_id < inst[best].instance_id))
                    best = i;
            }
        }
    }
    return best;
}

void criterion_2(Context&) {
    Rng rng(20240);
    int agree = 0, total = 0, ties = 0, assoc_hits = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng.next_below(5));
        std::vector<MaskInstance> inst;
        for (int i = 0; i < n; ++i) {
            MaskInstance mi;
            mi.instance_id = static_cast<int>(rng.next_below(6));
            mi.confidence = static_cast<double>(rng.next_below(4)) / 4.0;
            mi.center_y = static_cast<double>(rng.next_below(3));
            mi.center_x = static_cast<double>(rng.next_below(3));
            inst.push_back(mi);
        }
        const int class_id = static_cast<int>(rng.next_below(3));
        AssociationState assoc;
        if (rng.next_bool()) {
            assoc.prev_class = rng.next_bool() ? class_id : static_cast<int>(rng.next_below(3));
            assoc.has_center = rng.next_below(4) != 0;
            assoc.center_y = static_cast<double>(rng.next_below(3));
            assoc.center_x = static_cast<double>(rng.next_below(3));
        }
        auto res = associate(class_id, inst, assoc);
        const int expect = oracle_pick(class_id, inst, assoc);
        ++total;
        if (res && res->index == expect) ++agree;
        if (res && res->branch == AssociationBranch::Association) ++assoc_hits;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) ties += inst[i].confidence == inst[j].confidence;
    }
    char buf[160];
    snprintf(buf, sizeof(buf),
             "associate() vs brute-force rule: %d/%d agree (%d tie pairs, %d association-branch calls)",
             agree, total, ties, assoc_hits);
    report(2, "", agree == total && ties > 100 && assoc_hits > 50, buf);
}

// ---------------------------------------------------------------------------
// 3. Obstruction-evasion unit behavior

void criterion_3(Context&) {
    Layout l;
    l.width = 10;
    l.height = 10;
    for (int x = 0; x < 10; ++x) {
        l.walls.push_back({x, 0});
        l.walls.push_back({x, 9});
    }
    for (int y = 1; y < 9; ++y) {
        l.walls.push_back({0, y});
        l.walls.push_back({9, y});
    }
    l.receptacles.push_back({"table", {5, 5}, false, false, 3});
    l.objects.push_back({"apple", true, {4, 4}, -1, 0, true, {0.5, 0.2, 0.2}});
    l.generator_version = "acceptance";
    GoalSpec goal{TaskType::PickAndPlace, {{Condition::Kind::In, "apple", "table", 1}}};

    nn::Tensor stub = nn::Tensor::zeros({kNumActions});
    stub.data[static_cast<int>(ActionTag::MoveAhead)] = 5.0;
    stub.data[static_cast<int>(ActionTag::RotateRight)] = 4.0;

    auto run = [&](bool enabled) {
        EpisodeState s = reset(l, goal, {1, 1, Heading::West, 0});
        EvasionConfig cfg;
        cfg.enabled = enabled;
        std::optional<ActionTag> prev;
        Observation v_prev;
        std::vector<ActionTag> taken;
        bool returned_prev_under_gate = false;
        for (int t = 0; t < 10; ++t) {
            Observation v = render(s);
            bool obstruction = false;
            if (prev) {
                nn::Tensor a{{v_prev.channels, v_prev.height, v_prev.width}, v_prev.data};
                nn::Tensor b{{v.channels, v.height, v.width}, v.data};
                obstruction = detect_obstruction(a, b, cfg.epsilon);
            }
            ActionChoice choice = select_action(stub, obstruction, prev, cfg);
            if (choice.excluded_prev && prev && choice.action == *prev) returned_prev_under_gate = true;
            taken.push_back(choice.action);
            step(s, {choice.action, {}});
            prev = choice.action;
            v_prev = v;
        }
        return std::pair{taken, returned_prev_under_gate};
    };

    auto [with_ev, bad_gate] = run(true);
    auto [without, bad2] = run(false);
    (void)bad2;
    bool evades_in_one = with_ev[0] == ActionTag::MoveAhead && with_ev[1] == ActionTag::RotateRight;
    bool repeats = true;
    for (ActionTag a : without) repeats = repeats && a == ActionTag::MoveAhead;
    char buf[160];
    snprintf(buf, sizeof(buf),
             "stub policy at a wall: evasion-on turns within 1 step (%s), never returns prev under "
             "gate (%s); evasion-off repeats MoveAhead 10/10 (%s)",
             evades_in_one ? "yes" : "no", bad_gate ? "violated" : "yes", repeats ? "yes" : "no");
    report(3, "", evades_in_one && !bad_gate && repeats, buf);
}

// ---------------------------------------------------------------------------
// 4. Numerical correctness

struct FdStats {
    double worst = 0.0;
    int checked = 0;
};

void criterion_4(Context& ctx) {
    ctx.ensure_dataset();
    Trajectory traj = load_trajectory(ctx.dataset, ctx.manifest.split(Split::Train)[0]);
    const int steps = std::min<int>(2, static_cast<int>(traj.steps.size()));

    ModelConfig tiny;
    tiny.dims.token_embed = 4;
    tiny.dims.lang_hidden = 3;
    tiny.dims.action_embed = 3;
    tiny.dims.visual_features = 4;
    tiny.dims.decoder_hidden = 5;
    tiny.dims.n_dynamic_filters = 2;
    tiny.dims.mask_head_channels = 4;
    tiny.seed = 5;

    // The full factorized model exercises encoders, filter generators, both
    // decoders and the class head; the mask-head variant covers the other head.
    // fd over the full model
    auto fd_model = [&](Model& model) {
        model.params().zero_grads();
        double base = 0;
        {
            auto c = model.begin_episode(traj.language, false, 0);
            std::vector<nn::Var> losses;
            int prev = kActionStartSentinel;
            for (int t = 0; t < steps; ++t) {
                auto out = model.step(*c, traj.steps[t].observation, prev);
                losses.push_back(c->graph().cross_entropy_logits(
                    out.action_logits, static_cast<int>(traj.steps[t].action.tag)));
                if (is_interaction(traj.steps[t].action.tag)) {
                    if (model.config().ocl) {
                        losses.push_back(c->graph().cross_entropy_logits(
                            out.class_logits, traj.steps[t].interaction_class));
                    } else {
                        nn::Var flat = c->graph().reshape(out.mask_logits,
                                                          {c->graph().value(out.mask_logits).numel()});
                        nn::Tensor targets =
                            nn::Tensor::zeros({static_cast<int>(traj.steps[t].action.mask.size())});
                        for (size_t i = 0; i < traj.steps[t].action.mask.size(); ++i)
                            targets.data[i] = traj.steps[t].action.mask[i];
                        losses.push_back(c->graph().bce_logits_mean(flat, targets));
                    }
                }
                prev = static_cast<int>(traj.steps[t].action.tag);
            }
            nn::Var loss = c->graph().sum(losses);
            base = c->graph().value(loss).data[0];
            c->graph().backward(loss);
            c->graph().accumulate_param_grads();
        }
        (void)base;
        auto value_of = [&]() {
            auto c = model.begin_episode(traj.language, false, 0);
            std::vector<nn::Var> losses;
            int prev = kActionStartSentinel;
            for (int t = 0; t < steps; ++t) {
                auto out = model.step(*c, traj.steps[t].observation, prev);
                losses.push_back(c->graph().cross_entropy_logits(
                    out.action_logits, static_cast<int>(traj.steps[t].action.tag)));
                if (is_interaction(traj.steps[t].action.tag)) {
                    if (model.config().ocl) {
                        losses.push_back(c->graph().cross_entropy_logits(
                            out.class_logits, traj.steps[t].interaction_class));
                    } else {
                        nn::Var flat = c->graph().reshape(out.mask_logits,
                                                          {c->graph().value(out.mask_logits).numel()});
                        nn::Tensor targets =
                            nn::Tensor::zeros({static_cast<int>(traj.steps[t].action.mask.size())});
                        for (size_t i = 0; i < traj.steps[t].action.mask.size(); ++i)
                            targets.data[i] = traj.steps[t].action.mask[i];
                        losses.push_back(c->graph().bce_logits_mean(flat, targets));
                    }
                }
                prev = static_cast<int>(traj.steps[t].action.tag);
            }
            nn::Var loss = c->graph().sum(losses);
            return c->graph().value(loss).data[0];
        };
        FdStats st;
        const double h = 1e-5;
        for (const auto& p : model.params().all()) {
            const size_t stride = std::max<size_t>(1, p->value.data.size() / 8);
            for (size_t i = 0; i < p->value.data.size(); i += stride) {
                const double saved = p->value.data[i];
                p->value.data[i] = saved + h;
                const double up = value_of();
                p->value.data[i] = saved - h;
                const double down = value_of();
                p->value.data[i] = saved;
                const double numeric = (up - down) / (2 * h);
                const double analytic = p->grad.data[i];
                const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
                st.worst = std::max(st.worst, std::abs(numeric - analytic) / denom);
                st.checked += 1;
            }
        }
        return st;
    };

    Model full(tiny, Vocabulary::standard());
    FdStats full_st = fd_model(full);
    ModelConfig masky_cfg = tiny;
    masky_cfg.ocl = false;
    Model masky(masky_cfg, Vocabulary::standard());
    FdStats mask_st = fd_model(masky);

    // dynamic-filter linearity and additivity at 1e-9
    Rng rng(99);
    nn::Tensor v = nn::Tensor::zeros({6, 5, 5});
    for (auto& x : v.data) x = rng.next_double(-1, 1);
    FilterBank ba, bb, bsum;
    ba.kernels = nn::Tensor::zeros({3, 6, 1, 1});
    bb.kernels = nn::Tensor::zeros({3, 6, 1, 1});
    for (auto& x : ba.kernels.data) x = rng.next_double(-1, 1);
    for (auto& x : bb.kernels.data) x = rng.next_double(-1, 1);
    bsum.kernels = ba.kernels;
    for (size_t i = 0; i < bsum.kernels.data.size(); ++i) bsum.kernels.data[i] += bb.kernels.data[i];
    nn::Tensor vs = v;
    const double alpha = -1.37;
    for (auto& x : vs.data) x *= alpha;
    double lin_err = 0, add_err = 0;
    {
        nn::Tensor r = apply_filters(v, ba);
        nn::Tensor rs = apply_filters(vs, ba);
        for (size_t i = 0; i < r.data.size(); ++i)
            lin_err = std::max(lin_err, std::abs(rs.data[i] - alpha * r.data[i]));
        nn::Tensor rb = apply_filters(v, bb);
        nn::Tensor rsum = apply_filters(v, bsum);
        for (size_t i = 0; i < r.data.size(); ++i)
            add_err = std::max(add_err, std::abs(rsum.data[i] - (r.data[i] + rb.data[i])));
    }

    // attention normalization over random batches
    double attn_err = 0;
    {
        nn::ParameterStore store;
        Rng arng(7);
        auto attn = AttentionParams::create(store, "attn", 5, 8, arng);
        for (int trial = 0; trial < 50; ++trial) {
            nn::Graph g;
            nn::Tensor rows = nn::Tensor::zeros({6, 8});
            for (auto& x : rows.data) x = arng.next_double(-2, 2);
            TokenFeatures tf;
            tf.features = g.input(rows);
            tf.valid.assign(6, 1);
            nn::Tensor q = nn::Tensor::zeros({5});
            for (auto& x : q.data) x = arng.next_double(-2, 2);
            AttendedLanguage att = attend(g, attn, tf, g.input(q));
            double sum = 0;
            for (double wv : g.value(att.weights).data) sum += wv;
            attn_err = std::max(attn_err, std::abs(sum - 1.0));
        }
    }

    const bool pass = full_st.worst < 1e-4 && mask_st.worst < 1e-4 && lin_err <= 1e-9 &&
                      add_err <= 1e-9 && attn_err < 1e-6;
    char buf[240];
    snprintf(buf, sizeof(buf),
             "finite differences: full model worst rel err %.2e (%d elems), mask-head variant %.2e "
             "(%d elems); filter linearity %.1e, additivity %.1e; attention sum err %.1e",
             full_st.worst, full_st.checked, mask_st.worst, mask_st.checked, lin_err, add_err,
             attn_err);
    report(4, "", pass, buf);
}

// ---------------------------------------------------------------------------
// 5. Metric exactness (the report-level invariants are re-checked at the end)

bool metric_invariants_hold(const std::vector<SplitMetrics>& reports, std::string& why) {
    for (const auto& m : reports) {
        if (m.goal_cond_sr < m.task_sr - 1e-12) {
            why = "goal_cond_sr < task_sr";
            return false;
        }
        if (m.plw_task_sr > m.task_sr + 1e-12 || m.plw_goal_cond_sr > m.goal_cond_sr + 1e-12) {
            why = "plw exceeds unweighted";
            return false;
        }
    }
    return true;
}

void criterion_5(Context& ctx) {
    bool exact = plw(1.0, 10, 10) == 1.0 && plw(1.0, 10, 20) == 0.5 && plw(0.0, 4, 123) == 0.0;
    bool throws = false;
    try {
        plw(1.0, 0, 3);
    } catch (const std::invalid_argument&) {
        throws = true;
    }
    std::string why;
    const bool invariants = metric_invariants_hold(ctx.observed_reports, why);
    char buf[200];
    snprintf(buf, sizeof(buf),
             "plw(1,10,10)=1, plw(1,10,20)=0.5, plw(0,.,.)=0 (%s); nonpositive lengths throw (%s); "
             "goal-cond >= task and plw <= unweighted on %zu observed reports (%s%s)",
             exact ? "exact" : "WRONG", throws ? "yes" : "no", ctx.observed_reports.size(),
             invariants ? "hold" : "violated: ", why.c_str());
    report(5, "", exact && throws && invariants, buf);
}

// ---------------------------------------------------------------------------
// 6. Overfit smoke test

void criterion_6(Context& ctx) {
    auto t0 = Clock::now();
    ctx.ensure_dataset();
    ModelConfig cfg;  // module-default dimensions
    cfg.seed = 11;
    cfg.epochs = 50;
    cfg.augmentation = false;
    cfg.learning_rate = 2e-3;
    TrainOptions opts;
    opts.run_dir = ctx.work / "overfit";
    opts.max_train_episodes = 5;
    TrainResult tr = train(ctx.dataset, cfg, opts);

    auto model = Model::load(tr.checkpoint);
    std::vector<Trajectory> five;
    for (int i = 0; i < 5; ++i)
        five.push_back(load_trajectory(ctx.dataset, ctx.manifest.split(Split::Train)[i]));
    TeacherForcedStats st = teacher_forced_eval(*model, five);
    const double dt = secs(t0);
    const bool pass = st.action_accuracy >= 0.99 && st.class_accuracy >= 0.99 && dt < 180.0;
    char buf[200];
    snprintf(buf, sizeof(buf),
             "5-episode overfit, 50 epochs: teacher-forced action acc %.3f, class acc %.3f "
             "(thresholds 0.99) in %.1fs (limit 180s)",
             st.action_accuracy, st.class_accuracy, dt);
    report(6, "", pass, buf);
}

// ---------------------------------------------------------------------------
// 7. Ordinal ablation reproduction

struct RowMeans {
    double seen = 0, unseen = 0;
};

void criterion_7(Context& ctx) {
    auto t0 = Clock::now();
    ctx.ensure_dataset();
    ModelConfig base = benchmark_model_config();

    std::vector<AblationRow> rows;
    for (const char* name : {"a", "b", "c", "e", "g", "no_ia", "no_oe", "no_language", "no_vision"}) {
        AblationRow row = ablation_row(name, base);
        row.config.epochs = row.config.augmentation ? kEpochsAugment : kEpochsNoAugment;
        rows.push_back(row);
    }

    GridOptions opts;
    opts.seeds = kGridSeeds;
    opts.run_dir = ctx.work / "grid";
    GridReport grid = ablation_grid(ctx.dataset, rows, base, opts);
    for (const auto& row : grid.rows)
        for (const auto& cell : row.per_seed) {
            ctx.observed_reports.push_back(cell.seen);
            ctx.observed_reports.push_back(cell.unseen);
        }

    auto mean = [&](const std::string& name) {
        for (const auto& row : grid.rows)
            if (row.name == name) return RowMeans{row.mean.seen.task_sr, row.mean.unseen.task_sr};
        throw std::runtime_error("missing grid row " + name);
    };
    RowMeans a = mean("a"), b = mean("b"), c = mean("c"), e = mean("e"), g = mean("g");
    RowMeans no_ia = mean("no_ia"), no_oe = mean("no_oe");
    RowMeans no_lang = mean("no_language"), no_vis = mean("no_vision");

    printf("  grid means (Task SR seen/unseen): a %s/%s  b %s/%s  c %s/%s  e %s/%s  g %s/%s\n",
           pct(a.seen).c_str(), pct(a.unseen).c_str(), pct(b.seen).c_str(), pct(b.unseen).c_str(),
           pct(c.seen).c_str(), pct(c.unseen).c_str(), pct(e.seen).c_str(), pct(e.unseen).c_str(),
           pct(g.seen).c_str(), pct(g.unseen).c_str());
    printf("  reuse rows: no_ia %s/%s  no_oe %s/%s  no_language %s/%s  no_vision %s/%s\n",
           pct(no_ia.seen).c_str(), pct(no_ia.unseen).c_str(), pct(no_oe.seen).c_str(),
           pct(no_oe.unseen).c_str(), pct(no_lang.seen).c_str(), pct(no_lang.unseen).c_str(),
           pct(no_vis.seen).c_str(), pct(no_vis.unseen).c_str());

    const bool i_pass = a.unseen > b.unseen;
    report(7, "(i)", i_pass,
           "factorized beats single-stream on unseen Task SR: a " + pct(a.unseen) + " > b " +
               pct(b.unseen));

    const bool ii_pass = c.seen > g.seen && (c.seen - g.seen) > (c.seen - e.seen);
    report(7, "(ii)", ii_pass,
           "object-centric localisation is the largest single-component drop on seen Task SR: c " +
               pct(c.seen) + " > g " + pct(g.seen) + ", drop " + pct(c.seen - g.seen) +
               " > dynamic-filter drop " + pct(c.seen - e.seen));

    const bool iii_pass = a.unseen >= no_ia.unseen && a.unseen >= no_oe.unseen;
    report(7, "(iii)", iii_pass,
           "full >= no-IA and full >= no-OE on unseen Task SR: a " + pct(a.unseen) + " vs no_ia " +
               pct(no_ia.unseen) + ", no_oe " + pct(no_oe.unseen));

    const bool iv_pass =
        a.seen > no_lang.seen && a.seen > no_vis.seen && a.seen >= a.unseen;
    report(7, "(iv)", iv_pass,
           "full beats input ablations on seen Task SR and seen >= unseen: a " + pct(a.seen) +
               " > no_language " + pct(no_lang.seen) + ", > no_vision " + pct(no_vis.seen) +
               "; unseen " + pct(a.unseen));

    // trained Goto competence improves over an untrained model (3 seeds)
    double trained_goto = 0, untrained_goto = 0;
    for (int s = 0; s < kGridSeeds; ++s) {
        auto trained = Model::load(ctx.work / "grid" / "checkpoints" /
                                   ("a_seed" + std::to_string(s) + ".ckpt"));
        SubgoalReport rep = subgoal_eval(*trained, ctx.dataset, ctx.manifest, Split::SeenEval);
        trained_goto += rep.rows[static_cast<int>(SubgoalKind::Goto)].plw / kGridSeeds;
        ModelConfig untrained_cfg = base;
        untrained_cfg.seed = derive_seed(base.seed, "untrained", s);
        Model fresh(untrained_cfg, Vocabulary::standard());
        SubgoalReport urep = subgoal_eval(fresh, ctx.dataset, ctx.manifest, Split::SeenEval);
        untrained_goto += urep.rows[static_cast<int>(SubgoalKind::Goto)].plw / kGridSeeds;
    }
    report(7, "(goto)", trained_goto > untrained_goto,
           "trained Goto PLW " + pct(trained_goto) + " > untrained " + pct(untrained_goto));

    const double dt = secs(t0);
    char buf[120];
    snprintf(buf, sizeof(buf), "grid (+subgoal probes) finished in %.1f min (target 45 min)",
             dt / 60.0);
    report(7, "(runtime)", dt < 45.0 * 60.0, buf);
}

// ---------------------------------------------------------------------------
// 8. Determinism

void criterion_8(Context& ctx) {
    ctx.ensure_dataset();
    // dataset manifest hash
    const auto dir_b = ctx.work / "dataset_rebuild";
    std::filesystem::remove_all(dir_b);
    build_dataset(benchmark_dataset_config(), dir_b);
    const bool manifest_same = manifest_hash(ctx.dataset) == manifest_hash(dir_b);
    std::filesystem::remove_all(dir_b);

    // checkpoint bytes
    ModelConfig cfg = benchmark_model_config();
    cfg.epochs = 2;
    cfg.augmentation = false;
    cfg.seed = 123;
    TrainOptions ta;
    ta.run_dir = ctx.work / "det_a";
    TrainOptions tb;
    tb.run_dir = ctx.work / "det_b";
    tb.jobs = 2;  // gradient workers must not perturb the bytes
    TrainResult ra = train(ctx.dataset, cfg, ta);
    TrainResult rb = train(ctx.dataset, cfg, tb);
    const bool ckpt_same = read_file(ra.checkpoint) == read_file(rb.checkpoint);

    // evaluation report bytes
    auto model = Model::load(ra.checkpoint);
    EvalReport e1 = evaluate_split(*model, ctx.dataset, ctx.manifest, Split::SeenEval);
    EvalReport e2 = evaluate_split(*model, ctx.dataset, ctx.manifest, Split::SeenEval);
    const bool report_same = e1.to_json().dump() == e2.to_json().dump();
    ctx.observed_reports.push_back(e1.metrics);

    char buf[200];
    snprintf(buf, sizeof(buf),
             "manifest hash reproducible (%s); checkpoint bytes identical across reruns and worker "
             "counts (%s); evaluation reports byte-identical (%s)",
             manifest_same ? "yes" : "no", ckpt_same ? "yes" : "no", report_same ? "yes" : "no");
    report(8, "", manifest_same && ckpt_same && report_same, buf);
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    std::filesystem::path work = "acceptance_work";
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--work" && i + 1 < argc) {
            work = argv[++i];
        } else {
            wanted.insert(std::atoi(arg.c_str()));
        }
    }
    auto want = [&](int c) { return wanted.empty() || wanted.count(c) > 0; };

    std::filesystem::create_directories(work);
    Context ctx;
    ctx.work = work;

    auto t0 = Clock::now();
    if (want(1)) criterion_1(ctx);
    if (want(2)) criterion_2(ctx);
    if (want(3)) criterion_3(ctx);
    if (want(4)) criterion_4(ctx);
    if (want(6)) criterion_6(ctx);
    if (want(7)) criterion_7(ctx);
    if (want(8)) criterion_8(ctx);
    if (want(5)) criterion_5(ctx);  // last: checks invariants on every observed report

    printf("acceptance: %d failure(s), total %.1f min\n", g_failures, secs(t0) / 60.0);
    return g_failures;
}
