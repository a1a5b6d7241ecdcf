#pragma once

// Object-centric localisation: target-class prediction feeds a two-way
// instance selection. A new class picks the highest-confidence instance; a
// repeated class picks the instance whose center is nearest the previously
// chosen one.

#include <optional>

#include "gridagent/gridworld.hpp"

namespace gridagent {

struct AssociationState {
    int prev_class = -1;      // class id of the previous associate() call, -1 before any
    bool has_center = false;  // center recorded with prev_class
    double center_y = 0.0;
    double center_x = 0.0;
};

enum class AssociationBranch : int { Confidence = 0, Association = 1 };
const char* association_branch_name(AssociationBranch b);

struct AssociationResult {
    int index = -1;  // into the instances vector
    AssociationBranch branch = AssociationBranch::Confidence;
};

// Pure selection rule. Branch choice: confidence when class_id differs from
// assoc.prev_class (or there is no previous), association otherwise.
// Tie-breaks: confidence branch by lower instance id; association branch by
// higher confidence, then lower instance id.
std::optional<AssociationResult> associate(int class_id, const std::vector<MaskInstance>& instances,
                                           const AssociationState& assoc);

// Applies `associate` and records the chosen center into `assoc`.
std::optional<AssociationResult> associate_and_update(int class_id,
                                                      const std::vector<MaskInstance>& instances,
                                                      AssociationState& assoc);

struct LocaliseLog {
    int class_id = -1;
    AssociationBranch branch = AssociationBranch::Confidence;
    int instance_id = -1;
    double confidence = 0.0;
    bool found = false;
};

// Queries the mask generator stand-in for the predicted class, associates,
// and returns the chosen instance's mask. An empty mask signals localisation
// failure (the interaction will api_fail downstream).
PixelMask localise(int class_id, const EpisodeState& state, AssociationState& assoc,
                   LocaliseLog* log = nullptr);

// Variant used by the no-instance-association ablation: picks a seeded random
// instance of the class instead of applying the two-way rule.
PixelMask localise_random(int class_id, const EpisodeState& state, uint64_t key,
                          LocaliseLog* log = nullptr);

}  // namespace gridagent
