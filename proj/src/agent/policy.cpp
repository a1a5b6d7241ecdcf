#include "gridagent/agent/policy.hpp"

#include <stdexcept>

namespace gridagent {

json EvasionConfig::to_json() const {
    return {{"epsilon", epsilon}, {"enabled", enabled}, {"navigation_only", navigation_only}};
}

EvasionConfig EvasionConfig::from_json(const json& j) {
    EvasionConfig c;
    c.epsilon = j.value("epsilon", c.epsilon);
    c.enabled = j.value("enabled", c.enabled);
    c.navigation_only = j.value("navigation_only", c.navigation_only);
    return c;
}

bool detect_obstruction(const nn::Tensor& v_prev, const nn::Tensor& v_t, double epsilon) {
    if (!v_prev.same_shape(v_t)) throw std::invalid_argument("detect_obstruction: shape mismatch");
    double d2 = 0.0;
    for (size_t i = 0; i < v_prev.data.size(); ++i) {
        const double d = v_prev.data[i] - v_t.data[i];
        d2 += d * d;
    }
    return d2 < epsilon;
}

ActionChoice select_action(const nn::Tensor& logits, bool obstruction,
                           std::optional<ActionTag> prev_action, const EvasionConfig& config) {
    if (logits.numel() != kNumActions) throw std::invalid_argument("select_action: expects 13 logits");

    bool exclude = obstruction && config.enabled && prev_action.has_value() &&
                   (!config.navigation_only || is_navigation(*prev_action));
    const int excluded_index = exclude ? static_cast<int>(*prev_action) : -1;

    int best = -1;
    for (int k = 0; k < kNumActions; ++k) {
        if (k == excluded_index) continue;
        if (best < 0 || logits.data[k] > logits.data[best]) best = k;
    }
    return {static_cast<ActionTag>(best), exclude};
}

}  // namespace gridagent
