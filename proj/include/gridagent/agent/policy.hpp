#pragma once

// Inference-time obstruction evasion: when consecutive visual features are
// closer than a tolerance, the previous action is removed from the action
// space for exactly one argmax.

#include "gridagent/gridworld.hpp"
#include "gridagent/nn/tensor.hpp"

namespace gridagent {

struct EvasionConfig {
    double epsilon = 1e-6;       // squared-distance tolerance, >= 0
    bool enabled = true;
    bool navigation_only = true; // gate only fires after navigation actions

    json to_json() const;
    static EvasionConfig from_json(const json& j);
};

// True iff ||v_prev - v_t||_2^2 < epsilon (strict). Throws on shape mismatch.
bool detect_obstruction(const nn::Tensor& v_prev, const nn::Tensor& v_t, double epsilon);

struct ActionChoice {
    ActionTag action = ActionTag::Stop;
    bool excluded_prev = false;  // the gate fired and prev_action was masked out
};

// Plain argmax over the 13 action logits unless the evasion gate fires, in
// which case the previous action's index is excluded for this step only.
ActionChoice select_action(const nn::Tensor& logits, bool obstruction,
                           std::optional<ActionTag> prev_action, const EvasionConfig& config);

}  // namespace gridagent
