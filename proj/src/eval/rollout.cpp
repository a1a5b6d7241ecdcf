#include "gridagent/eval/rollout.hpp"

#include <algorithm>

namespace gridagent {

using nn::Tensor;

json StepLog::to_json() const {
    json j;
    j["step"] = step;
    j["action"] = action_name(action);
    j["event"] = step_event_name(event);
    j["top3"] = json::array();
    for (const auto& [k, v] : top3) j["top3"].push_back(json::array({action_name(static_cast<ActionTag>(k)), v}));
    j["obstruction"] = obstruction;
    if (excluded_index >= 0) j["excluded"] = action_name(static_cast<ActionTag>(excluded_index));
    if (interactive) {
        j["class"] = localisation.class_id;
        j["branch"] = association_branch_name(localisation.branch);
        j["instance"] = localisation.instance_id;
        j["confidence"] = localisation.confidence;
        j["mask_rle"] = mask_rle;
    }
    return j;
}

json EpisodeResult::to_json(bool with_logs) const {
    json j;
    j["episode"] = episode_index;
    j["task_type"] = task_type_name(task_type);
    j["task_success"] = task_success;
    j["satisfied"] = satisfied;
    j["total"] = total;
    j["agent_path_length"] = agent_path_length;
    j["expert_path_length"] = expert_path_length;
    j["failure_tag"] = failure_tag;
    if (with_logs) {
        j["steps"] = json::array();
        for (const auto& log : logs) j["steps"].push_back(log.to_json());
    }
    return j;
}

namespace {

std::array<std::pair<int, double>, 3> top3_of(const Tensor& logits) {
    std::array<std::pair<int, double>, 3> out{};
    std::vector<int> order(logits.numel());
    for (int i = 0; i < logits.numel(); ++i) order[i] = i;
    std::partial_sort(order.begin(), order.begin() + 3, order.end(),
                      [&](int a, int b) { return logits.data[a] > logits.data[b]; });
    for (int i = 0; i < 3; ++i) out[i] = {order[i], logits.data[order[i]]};
    return out;
}

}  // namespace

EpisodeResult rollout_model(Model& model, const Trajectory& episode, const RolloutLimits& limits,
                            const WorldSpec& spec) {
    EpisodeResult res;
    res.task_type = episode.goal.task_type;
    res.expert_path_length = static_cast<int>(episode.steps.size());

    EpisodeState state = reset(episode.layout, episode.goal, episode.start, episode.world_options, spec);
    auto ctx = model.begin_episode(episode.language, /*training=*/false, 0);
    nn::Graph& g = ctx->graph();

    const ModelConfig& cfg = model.config();
    EvasionConfig evasion = cfg.evasion_config;
    evasion.enabled = evasion.enabled && cfg.evasion;

    AssociationState assoc;
    Tensor v_prev;
    std::optional<ActionTag> prev_tag;
    int prev_row = kActionStartSentinel;
    int consecutive_api_fail = 0;

    for (int t = 0; t < limits.max_steps; ++t) {
        Observation obs = render(state);
        Model::StepOutput out = model.step(*ctx, obs, prev_row);
        const Tensor v_t = g.value(out.visual);
        const Tensor action_logits = g.value(out.action_logits);

        StepLog log;
        log.step = t;
        log.top3 = top3_of(action_logits);
        const bool obstruction =
            prev_tag.has_value() && evasion.enabled && detect_obstruction(v_prev, v_t, evasion.epsilon);
        log.obstruction = obstruction;

        ActionChoice choice = select_action(action_logits, obstruction, prev_tag, evasion);
        if (choice.excluded_prev) log.excluded_index = static_cast<int>(*prev_tag);

        Action action;
        action.tag = choice.action;
        log.action = action.tag;
        log.interactive = is_interaction(action.tag);
        if (log.interactive) {
            if (cfg.ocl) {
                const Tensor class_logits = g.value(out.class_logits);
                int c = 0;
                for (int i = 1; i < class_logits.numel(); ++i)
                    if (class_logits.data[i] > class_logits.data[c]) c = i;
                if (cfg.instance_association) {
                    action.mask = localise(c, state, assoc, &log.localisation);
                } else {
                    const uint64_t key =
                        derive_seed(episode.episode_seed, "random-instance", static_cast<uint64_t>(t));
                    action.mask = localise_random(c, state, key, &log.localisation);
                }
            } else {
                const Tensor mask_logits = g.value(out.mask_logits);
                action.mask.assign(mask_logits.data.size(), 0);
                for (size_t i = 0; i < mask_logits.data.size(); ++i)
                    action.mask[i] = mask_logits.data[i] > 0.0 ? 1 : 0;
                log.localisation.class_id = -1;
                log.localisation.found = true;
            }
            log.mask_rle = rle_encode(action.mask);
        }

        StepEvent ev = step(state, action);
        log.event = ev;
        res.logs.push_back(std::move(log));
        res.agent_path_length += 1;

        prev_tag = action.tag;
        prev_row = static_cast<int>(action.tag);
        v_prev = v_t;

        if (ev == StepEvent::Done) {
            res.failure_tag = "stop";
            break;
        }
        consecutive_api_fail = ev == StepEvent::ApiFail ? consecutive_api_fail + 1 : 0;
        if (consecutive_api_fail >= limits.max_consecutive_api_fail) {
            res.failure_tag = "api-fail-limit";
            break;
        }
    }
    if (res.failure_tag.empty()) res.failure_tag = "max-steps";

    GoalCheck gc = check_goal(state, episode.goal);
    res.task_success = gc.task_success;
    res.satisfied = gc.satisfied;
    res.total = gc.total;
    return res;
}

EpisodeResult rollout_expert_replay(const Trajectory& episode, const RolloutLimits& limits,
                                    const WorldSpec& spec) {
    EpisodeResult res;
    res.task_type = episode.goal.task_type;
    res.expert_path_length = static_cast<int>(episode.steps.size());

    EpisodeState state = reset(episode.layout, episode.goal, episode.start, episode.world_options, spec);
    int consecutive_api_fail = 0;
    for (int t = 0; t < limits.max_steps && t < static_cast<int>(episode.steps.size()); ++t) {
        const Action& action = episode.steps[t].action;
        StepLog log;
        log.step = t;
        log.action = action.tag;
        log.interactive = is_interaction(action.tag);
        if (log.interactive) log.mask_rle = rle_encode(action.mask);
        StepEvent ev = step(state, action);
        log.event = ev;
        res.logs.push_back(std::move(log));
        res.agent_path_length += 1;
        if (ev == StepEvent::Done) {
            res.failure_tag = "stop";
            break;
        }
        consecutive_api_fail = ev == StepEvent::ApiFail ? consecutive_api_fail + 1 : 0;
        if (consecutive_api_fail >= limits.max_consecutive_api_fail) {
            res.failure_tag = "api-fail-limit";
            break;
        }
    }
    if (res.failure_tag.empty()) res.failure_tag = "max-steps";

    GoalCheck gc = check_goal(state, episode.goal);
    res.task_success = gc.task_success;
    res.satisfied = gc.satisfied;
    res.total = gc.total;
    return res;
}

}  // namespace gridagent
