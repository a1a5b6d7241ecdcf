#include "gridagent/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gridagent/npy.hpp"

namespace gridagent {

using nn::Graph;
using nn::Parameter;
using nn::Tensor;
using nn::Var;

// ---------------------------------------------------------------------------
// Augmentation

std::array<AugmentOp, 5> augment_plan(uint64_t seed) {
    // the 5 non-identity permutations of (r, g, b)
    static const std::array<std::array<int, 3>, 5> perms = {
        std::array<int, 3>{0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    Rng rng(derive_seed(seed, "augment"));
    const int first = static_cast<int>(rng.next_below(5));
    int second = static_cast<int>(rng.next_below(4));
    if (second >= first) ++second;

    std::array<AugmentOp, 5> plan;
    plan[0] = AugmentOp{};
    plan[1] = AugmentOp{perms[first], 0, 0.0};
    plan[2] = AugmentOp{perms[second], 0, 0.0};
    plan[3] = AugmentOp{{0, 1, 2}, derive_seed(seed, "perturb", 0), 0.1};
    plan[4] = AugmentOp{{0, 1, 2}, derive_seed(seed, "perturb", 1), 0.1};
    return plan;
}

Observation apply_augment(const Observation& obs, const AugmentOp& op, const WorldSpec& spec) {
    Observation out = obs;
    const int rgb0 = spec.channels() - 3;
    const size_t plane = static_cast<size_t>(obs.height) * obs.width;
    if (op.channel_perm != std::array<int, 3>{0, 1, 2}) {
        for (int c = 0; c < 3; ++c) {
            const double* src = obs.data.data() + (rgb0 + op.channel_perm[c]) * plane;
            double* dst = out.data.data() + (rgb0 + c) * plane;
            std::copy(src, src + plane, dst);
        }
    }
    if (op.noise_amplitude > 0) {
        for (int c = 0; c < 3; ++c) {
            double* dst = out.data.data() + (rgb0 + c) * plane;
            for (size_t i = 0; i < plane; ++i) {
                const double noise =
                    op.noise_amplitude * hash_unit(splitmix64(op.noise_seed + c * plane + i));
                dst[i] = std::clamp(dst[i] + noise, 0.0, 1.0);
            }
        }
    }
    return out;
}

std::vector<Trajectory> augment(const Trajectory& traj, uint64_t seed, const WorldSpec& spec) {
    auto plan = augment_plan(seed);
    std::vector<Trajectory> out;
    for (const auto& op : plan) {
        Trajectory v = traj;
        for (auto& ts : v.steps) ts.observation = apply_augment(ts.observation, op, spec);
        out.push_back(std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct LoadedEpisode {
    Trajectory traj;                 // metadata only; observations stay in u8
    std::vector<uint8_t> obs_stack;  // (T, C, H, W)
};

LoadedEpisode load_episode(const std::filesystem::path& dir, const EpisodeMeta& meta,
                           const WorldSpec& spec) {
    LoadedEpisode ep;
    ep.traj = load_trajectory(dir, meta, /*with_observations=*/false, spec);
    std::vector<int64_t> shape;
    npy::load(dir / (meta.file_prefix + ".npy"), ep.obs_stack, shape);
    return ep;
}

Observation materialize(const LoadedEpisode& ep, int t, const AugmentOp& op, const WorldSpec& spec) {
    const int C = spec.channels(), px = spec.obs_px();
    const size_t frame = static_cast<size_t>(C) * px * px;
    std::vector<uint8_t> one(ep.obs_stack.begin() + t * frame, ep.obs_stack.begin() + (t + 1) * frame);
    Observation obs = Observation::from_u8(one, C, px, px);
    return apply_augment(obs, op, spec);
}

struct PassStats {
    double loss = 0;
    int action_correct = 0;
    int action_total = 0;
    int class_correct = 0;
    int class_total = 0;
};

int argmax(const Tensor& t) {
    int best = 0;
    for (int i = 1; i < t.numel(); ++i)
        if (t.data[i] > t.data[best]) best = i;
    return best;
}

Tensor mask_targets(const PixelMask& mask) {
    Tensor t = Tensor::zeros({static_cast<int>(mask.size())});
    for (size_t i = 0; i < mask.size(); ++i) t.data[i] = mask[i] ? 1.0 : 0.0;
    return t;
}

// Teacher-forced unroll of one trajectory variant. When `grads` is non-null,
// backward runs and the graph's parameter gradients are copied out.
PassStats run_sample(Model& model, const LoadedEpisode& ep, const AugmentOp& op, bool training,
                     uint64_t dropout_seed, std::vector<std::pair<Parameter*, Tensor>>* grads,
                     const WorldSpec& spec) {
    PassStats stats;
    auto ctx = model.begin_episode(ep.traj.language, training, dropout_seed);
    Graph& g = ctx->graph();

    std::vector<Var> losses;
    int prev_row = kActionStartSentinel;
    for (size_t t = 0; t < ep.traj.steps.size(); ++t) {
        const auto& ts = ep.traj.steps[t];
        Observation obs = materialize(ep, static_cast<int>(t), op, spec);
        Model::StepOutput out = model.step(*ctx, obs, prev_row);

        const int action_label = static_cast<int>(ts.action.tag);
        losses.push_back(g.cross_entropy_logits(out.action_logits, action_label));
        if (argmax(g.value(out.action_logits)) == action_label) stats.action_correct++;
        stats.action_total++;

        if (is_interaction(ts.action.tag)) {
            if (model.config().ocl) {
                losses.push_back(g.scale(g.cross_entropy_logits(out.class_logits, ts.interaction_class),
                                         model.config().class_loss_weight));
                if (argmax(g.value(out.class_logits)) == ts.interaction_class) stats.class_correct++;
            } else {
                Var flat = g.reshape(out.mask_logits, {g.value(out.mask_logits).numel()});
                losses.push_back(
                    g.scale(g.bce_logits_mean(flat, mask_targets(ts.action.mask)),
                            model.config().class_loss_weight));
                // IoU >= 0.5 against the expert mask counts as correct
                const Tensor& logits = g.value(flat);
                int inter = 0, uni = 0;
                for (size_t i = 0; i < ts.action.mask.size(); ++i) {
                    const bool pred = logits.data[i] > 0.0;
                    const bool truth = ts.action.mask[i] != 0;
                    inter += pred && truth;
                    uni += pred || truth;
                }
                if (uni > 0 && 2 * inter >= uni) stats.class_correct++;
            }
            stats.class_total++;
        }
        prev_row = action_label;  // teacher forcing
    }

    Var total = g.sum(losses);
    stats.loss = g.value(total).data[0];
    if (grads) {
        g.backward(total);
        for (const auto& [param, id] : g.used_params()) grads->emplace_back(param, g.grad(Var{id}));
    }
    return stats;
}

}  // namespace

TrainResult train(const std::filesystem::path& dataset_dir, const ModelConfig& config,
                  const TrainOptions& options, const WorldSpec& spec) {
    namespace fs = std::filesystem;
    DatasetManifest manifest = load_manifest(dataset_dir);
    const Vocabulary& vocab = Vocabulary::standard();
    if (manifest.vocab_hash != vocab.hash())
        throw std::runtime_error("dataset vocabulary does not match the built-in templates");

    std::vector<EpisodeMeta> metas = manifest.split(Split::Train);
    if (options.max_train_episodes >= 0 &&
        static_cast<int>(metas.size()) > options.max_train_episodes)
        metas.resize(options.max_train_episodes);
    if (metas.empty()) throw std::runtime_error("train split is empty");

    std::vector<LoadedEpisode> episodes(metas.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, options.jobs))
#endif
    for (int i = 0; i < static_cast<int>(metas.size()); ++i)
        episodes[i] = load_episode(dataset_dir, metas[i], spec);

    Model model(config, vocab, spec);

    struct SampleRef {
        int episode;
        int variant;
    };
    std::vector<SampleRef> samples;
    const int variants = config.augmentation ? 5 : 1;
    std::vector<std::array<AugmentOp, 5>> plans(episodes.size());
    for (size_t e = 0; e < episodes.size(); ++e) {
        plans[e] = augment_plan(derive_seed(config.seed, "augment-episode", metas[e].layout_seed));
        for (int v = 0; v < variants; ++v) samples.push_back({static_cast<int>(e), v});
    }

    if (!options.run_dir.empty()) fs::create_directories(options.run_dir);

    TrainResult result;
    result.samples_per_epoch = static_cast<int>(samples.size());
    std::ofstream csv;
    if (!options.run_dir.empty()) {
        write_file(options.run_dir / "config.json", config.to_json().dump(1));
        csv.open(options.run_dir / "metrics.csv");
        csv << "epoch,loss,action_accuracy,class_accuracy\n";
    }

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(config.seed, "epoch-shuffle", epoch));
        shuffle_rng.shuffle(samples);

        double epoch_loss = 0;
        long action_correct = 0, action_total = 0, class_correct = 0, class_total = 0;

        for (size_t batch_start = 0; batch_start < samples.size();
             batch_start += config.batch_size) {
            const size_t batch_end = std::min(batch_start + config.batch_size, samples.size());
            const int bn = static_cast<int>(batch_end - batch_start);

            std::vector<PassStats> stats(bn);
            std::vector<std::vector<std::pair<Parameter*, Tensor>>> grads(bn);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, options.jobs))
#endif
            for (int b = 0; b < bn; ++b) {
                const SampleRef& ref = samples[batch_start + b];
                const uint64_t dropout_seed = derive_seed(
                    config.seed, "dropout",
                    (static_cast<uint64_t>(epoch) << 40) ^
                        (static_cast<uint64_t>(ref.episode) << 8) ^ static_cast<uint64_t>(ref.variant));
                stats[b] = run_sample(model, episodes[ref.episode], plans[ref.episode][ref.variant],
                                      /*training=*/true, dropout_seed, &grads[b], spec);
            }

            model.params().zero_grads();
            const double scale = 1.0 / bn;
            for (int b = 0; b < bn; ++b)
                for (auto& [param, grad] : grads[b])
                    for (size_t i = 0; i < grad.data.size(); ++i)
                        param->grad.data[i] += scale * grad.data[i];

            if (!model.params().grads_finite())
                throw std::runtime_error("training diverged: non-finite gradients at epoch " +
                                         std::to_string(epoch));
            model.params().adam_step(config.learning_rate);

            for (const auto& st : stats) {
                epoch_loss += st.loss;
                action_correct += st.action_correct;
                action_total += st.action_total;
                class_correct += st.class_correct;
                class_total += st.class_total;
            }
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.loss = epoch_loss / static_cast<double>(samples.size());
        em.action_accuracy = action_total ? static_cast<double>(action_correct) / action_total : 0;
        em.class_accuracy = class_total ? static_cast<double>(class_correct) / class_total : 0;
        result.metrics.push_back(em);
        if (csv.is_open())
            csv << em.epoch << "," << em.loss << "," << em.action_accuracy << ","
                << em.class_accuracy << "\n";
        if (!options.quiet)
            fprintf(stderr, "epoch %d loss %.4f act %.3f cls %.3f\n", em.epoch, em.loss,
                    em.action_accuracy, em.class_accuracy);
    }

    if (!options.run_dir.empty()) {
        result.checkpoint = options.run_dir / "model.ckpt";
        model.save(result.checkpoint);
    }
    return result;
}

TeacherForcedStats teacher_forced_eval(Model& model, const std::vector<Trajectory>& trajectories) {
    TeacherForcedStats out;
    long action_correct = 0, action_total = 0, class_correct = 0, class_total = 0;
    double loss = 0;
    for (const auto& traj : trajectories) {
        // pack observations back into a LoadedEpisode shim
        LoadedEpisode ep;
        ep.traj = traj;
        const WorldSpec& spec = WorldSpec::standard();
        for (const auto& ts : traj.steps) {
            auto u8 = ts.observation.to_u8();
            ep.obs_stack.insert(ep.obs_stack.end(), u8.begin(), u8.end());
        }
        PassStats st = run_sample(model, ep, AugmentOp{}, /*training=*/false, 0, nullptr, spec);
        loss += st.loss;
        action_correct += st.action_correct;
        action_total += st.action_total;
        class_correct += st.class_correct;
        class_total += st.class_total;
    }
    out.loss = loss / std::max<size_t>(1, trajectories.size());
    out.action_accuracy = action_total ? static_cast<double>(action_correct) / action_total : 0;
    out.class_accuracy = class_total ? static_cast<double>(class_correct) / class_total : 0;
    return out;
}

}  // namespace gridagent
