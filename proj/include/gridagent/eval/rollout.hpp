#pragma once

// Episode rollout drivers: the neural agent (perception + policy streams with
// inference-time localisation and obstruction evasion) and the expert-replay
// pseudo-model used to validate the harness.

#include "gridagent/agent/model.hpp"
#include "gridagent/agent/perception.hpp"

namespace gridagent {

struct RolloutLimits {
    int max_steps = 100;
    int max_consecutive_api_fail = 10;
};

struct StepLog {
    int step = 0;
    ActionTag action = ActionTag::Stop;
    StepEvent event = StepEvent::Ok;
    bool interactive = false;
    // policy-side record
    std::array<std::pair<int, double>, 3> top3{};  // (action id, logit)
    bool obstruction = false;
    int excluded_index = -1;
    // perception-side record
    LocaliseLog localisation;
    std::vector<int> mask_rle;

    json to_json() const;
};

struct EpisodeResult {
    bool task_success = false;
    int satisfied = 0;
    int total = 0;
    int agent_path_length = 0;
    int expert_path_length = 0;
    std::string failure_tag;  // stop | max-steps | api-fail-limit
    TaskType task_type = TaskType::PickAndPlace;
    int episode_index = 0;
    std::vector<StepLog> logs;

    json to_json(bool with_logs = true) const;
};

EpisodeResult rollout_model(Model& model, const Trajectory& episode, const RolloutLimits& limits = {},
                            const WorldSpec& spec = WorldSpec::standard());

EpisodeResult rollout_expert_replay(const Trajectory& episode, const RolloutLimits& limits = {},
                                    const WorldSpec& spec = WorldSpec::standard());

}  // namespace gridagent
