#include "gridagent/agent/perception.hpp"

#include <cmath>

namespace gridagent {

const char* association_branch_name(AssociationBranch b) {
    return b == AssociationBranch::Confidence ? "confidence" : "association";
}

std::optional<AssociationResult> associate(int class_id, const std::vector<MaskInstance>& instances,
                                           const AssociationState& assoc) {
    if (instances.empty()) return std::nullopt;

    AssociationResult res;
    const bool same_class = assoc.prev_class == class_id && assoc.prev_class >= 0 && assoc.has_center;
    if (!same_class) {
        res.branch = AssociationBranch::Confidence;
        int best = 0;
        for (int i = 1; i < static_cast<int>(instances.size()); ++i) {
            if (instances[i].confidence > instances[best].confidence) {
                best = i;
            } else if (instances[i].confidence == instances[best].confidence &&
                       instances[i].instance_id < instances[best].instance_id) {
                best = i;
            }
        }
        res.index = best;
    } else {
        res.branch = AssociationBranch::Association;
        auto dist = [&](const MaskInstance& mi) {
            const double dy = mi.center_y - assoc.center_y;
            const double dx = mi.center_x - assoc.center_x;
            return std::sqrt(dy * dy + dx * dx);
        };
        int best = 0;
        for (int i = 1; i < static_cast<int>(instances.size()); ++i) {
            const double di = dist(instances[i]);
            const double db = dist(instances[best]);
            if (di < db) {
                best = i;
            } else if (di == db) {
                if (instances[i].confidence > instances[best].confidence) {
                    best = i;
                } else if (instances[i].confidence == instances[best].confidence &&
                           instances[i].instance_id < instances[best].instance_id) {
                    best = i;
                }
            }
        }
        res.index = best;
    }
    return res;
}

std::optional<AssociationResult> associate_and_update(int class_id,
                                                      const std::vector<MaskInstance>& instances,
                                                      AssociationState& assoc) {
    auto res = associate(class_id, instances, assoc);
    assoc.prev_class = class_id;
    if (res) {
        assoc.has_center = true;
        assoc.center_y = instances[res->index].center_y;
        assoc.center_x = instances[res->index].center_x;
    } else {
        assoc.has_center = false;
    }
    return res;
}

namespace {

std::vector<MaskInstance> instances_for_class(int class_id, const EpisodeState& state) {
    const WorldSpec& spec = *state.spec;
    if (class_id < 0 || class_id >= spec.no_object_class()) return {};  // no-object or invalid
    return ground_truth_instances(state, spec.class_name(class_id));
}

}  // namespace

PixelMask localise(int class_id, const EpisodeState& state, AssociationState& assoc,
                   LocaliseLog* log) {
    auto instances = instances_for_class(class_id, state);
    auto res = associate_and_update(class_id, instances, assoc);
    if (log) {
        log->class_id = class_id;
        log->found = res.has_value();
        if (res) {
            log->branch = res->branch;
            log->instance_id = instances[res->index].instance_id;
            log->confidence = instances[res->index].confidence;
        }
    }
    if (!res) return {};
    return instances[res->index].mask;
}

PixelMask localise_random(int class_id, const EpisodeState& state, uint64_t key, LocaliseLog* log) {
    auto instances = instances_for_class(class_id, state);
    if (log) {
        log->class_id = class_id;
        log->found = !instances.empty();
    }
    if (instances.empty()) return {};
    const size_t pick = splitmix64(key) % instances.size();
    if (log) {
        log->branch = AssociationBranch::Confidence;
        log->instance_id = instances[pick].instance_id;
        log->confidence = instances[pick].confidence;
    }
    return instances[pick].mask;
}

}  // namespace gridagent
