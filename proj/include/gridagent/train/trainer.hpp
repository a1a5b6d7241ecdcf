#pragma once

// Behavior cloning with teacher forcing: joint action + class cross-entropy
// (or per-pixel mask loss for the no-class-head variant), fixed trajectory
// augmentation, and deterministic parallel gradient accumulation.

#include <array>

#include "gridagent/agent/model.hpp"

namespace gridagent {

// One deterministic observation transform. Variant 0 is the identity; color
// swaps permute the three appearance channels; perturbations add bounded
// seeded noise to them.
struct AugmentOp {
    std::array<int, 3> channel_perm = {0, 1, 2};
    uint64_t noise_seed = 0;
    double noise_amplitude = 0.0;  // <= 0.1
};

// [original, swap, swap, perturb, perturb]; the two swaps are distinct
// non-identity permutations.
std::array<AugmentOp, 5> augment_plan(uint64_t seed);

Observation apply_augment(const Observation& obs, const AugmentOp& op,
                          const WorldSpec& spec = WorldSpec::standard());

// Materializes all five variants; labels, masks and language are shared.
std::vector<Trajectory> augment(const Trajectory& traj, uint64_t seed,
                                const WorldSpec& spec = WorldSpec::standard());

struct EpochMetrics {
    int epoch = 0;
    double loss = 0.0;
    double action_accuracy = 0.0;
    double class_accuracy = 0.0;  // interaction steps; mask IoU proxy for the mask-head variant
};

struct TrainOptions {
    std::filesystem::path run_dir;  // receives config.json, metrics.csv, model.ckpt
    int jobs = 1;
    int max_train_episodes = -1;  // cap for smoke tests; -1 uses the whole split
    bool quiet = true;
};

struct TrainResult {
    std::filesystem::path checkpoint;
    std::vector<EpochMetrics> metrics;
    int samples_per_epoch = 0;
};

TrainResult train(const std::filesystem::path& dataset_dir, const ModelConfig& config,
                  const TrainOptions& options, const WorldSpec& spec = WorldSpec::standard());

// Teacher-forced accuracy of a trained model over trajectories (dropout off).
struct TeacherForcedStats {
    double action_accuracy = 0.0;
    double class_accuracy = 0.0;
    double loss = 0.0;
};

TeacherForcedStats teacher_forced_eval(Model& model, const std::vector<Trajectory>& trajectories);

}  // namespace gridagent
