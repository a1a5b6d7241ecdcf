#pragma once

// Deterministic household-style grid simulator: egocentric multi-channel
// observations, a 13-action interface with pixel-mask interactions,
// ground-truth instance segmentation and goal-condition checking.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridagent/util.hpp"

namespace gridagent {

// ---------------------------------------------------------------------------
// Geometry

enum class Heading : int { North = 0, East = 1, South = 2, West = 3 };

struct Cell {
    int x = 0;
    int y = 0;
    bool operator==(const Cell&) const = default;
};

inline Cell forward_of(Heading h) {
    switch (h) {
        case Heading::North: return {0, -1};
        case Heading::East: return {1, 0};
        case Heading::South: return {0, 1};
        case Heading::West: return {-1, 0};
    }
    return {0, 0};
}

inline Cell right_of(Heading h) {
    return forward_of(static_cast<Heading>((static_cast<int>(h) + 1) % 4));
}

struct AgentPose {
    int x = 0;
    int y = 0;
    Heading heading = Heading::North;
    int pitch = 0;  // clamped to [-1, 1]
    bool operator==(const AgentPose&) const = default;
};

// ---------------------------------------------------------------------------
// Actions

enum class ActionTag : int {
    MoveAhead = 0,
    RotateRight = 1,
    RotateLeft = 2,
    LookUp = 3,
    LookDown = 4,
    Pickup = 5,
    Put = 6,
    Open = 7,
    Close = 8,
    ToggleOn = 9,
    ToggleOff = 10,
    Slice = 11,
    Stop = 12,
};

constexpr int kNumActions = 13;
constexpr int kActionStartSentinel = 13;  // embedding row for "no previous action"

inline bool is_interaction(ActionTag t) {
    int k = static_cast<int>(t);
    return k >= static_cast<int>(ActionTag::Pickup) && k <= static_cast<int>(ActionTag::Slice);
}

inline bool is_navigation(ActionTag t) {
    int k = static_cast<int>(t);
    return k <= static_cast<int>(ActionTag::LookDown);
}

const char* action_name(ActionTag t);
std::optional<ActionTag> action_from_name(const std::string& name);

using PixelMask = std::vector<uint8_t>;  // flat row-major H_px * W_px

struct Action {
    ActionTag tag = ActionTag::Stop;
    PixelMask mask;  // non-empty iff tag is an interaction
};

// ---------------------------------------------------------------------------
// World vocabulary and observation layout

struct WorldSpec {
    std::vector<std::string> object_classes;
    std::vector<std::string> receptacle_classes;
    std::vector<uint8_t> object_sliceable;      // per object class
    std::vector<uint8_t> receptacle_openable;   // per receptacle class
    std::vector<uint8_t> receptacle_toggleable; // per receptacle class
    std::string knife_class = "knife";
    int window_cells = 7;  // D: egocentric window is D x D cells
    int px_per_cell = 4;   // R: raster resolution per cell

    static const WorldSpec& standard();

    int num_object_classes() const { return static_cast<int>(object_classes.size()); }
    int num_receptacle_classes() const { return static_cast<int>(receptacle_classes.size()); }
    // object classes, receptacle classes, plus the no-object class
    int num_classes() const { return num_object_classes() + num_receptacle_classes() + 1; }
    int no_object_class() const { return num_object_classes() + num_receptacle_classes(); }
    int channels() const { return num_object_classes() + num_receptacle_classes() + 4 + 1 + 3; }
    int obs_px() const { return window_cells * px_per_cell; }

    int object_class_index(const std::string& name) const;      // -1 if unknown
    int receptacle_class_index(const std::string& name) const;  // -1 if unknown
    // global class id: objects first, then receptacles
    int class_id(const std::string& name) const;
    const std::string& class_name(int id) const;
    bool is_object_class_id(int id) const { return id >= 0 && id < num_object_classes(); }
    bool is_receptacle_class_id(int id) const {
        return id >= num_object_classes() && id < no_object_class();
    }

    std::vector<std::string> channel_manifest() const;
};

// ---------------------------------------------------------------------------
// Layout

struct Color {
    double r = 0, g = 0, b = 0;  // multiples of 1/255 in [0, 1]
    bool operator==(const Color&) const = default;
};

struct ReceptacleSpec {
    std::string cls;
    Cell cell;
    bool openable = false;
    bool toggleable = false;
    int capacity = 1;
};

struct ObjectSpec {
    std::string cls;
    bool on_floor = true;
    Cell cell;           // valid when on_floor
    int receptacle = -1; // valid when !on_floor
    int slot = 0;        // slot within receptacle
    bool sliceable = false;
    Color color;
};

struct Layout {
    int width = 10;
    int height = 10;
    std::vector<Cell> walls;
    std::vector<ReceptacleSpec> receptacles;
    std::vector<ObjectSpec> objects;
    uint64_t seed = 0;
    int arrangement_id = 0;
    std::string generator_version;

    bool is_wall(int x, int y) const;
    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
    int receptacle_at(int x, int y) const;  // -1 if none
    // walkable: in bounds, not wall, not a receptacle cell
    bool walkable(int x, int y) const;
    void validate(const WorldSpec& spec) const;  // throws on invariant violation

    json to_json() const;
    static Layout from_json(const json& j);
};

// ---------------------------------------------------------------------------
// Goals

enum class TaskType : int {
    PickAndPlace = 0,
    PickTwoAndPlace = 1,
    OpenAndPlace = 2,
    SliceAndPlace = 3,
    Examine = 4,
};

const char* task_type_name(TaskType t);
std::optional<TaskType> task_type_from_name(const std::string& name);

struct Condition {
    enum class Kind { In, Sliced, Toggled, Holding, CountIn } kind = Kind::In;
    std::string object_class;      // In/Sliced/Holding/CountIn
    std::string receptacle_class;  // In/Toggled/CountIn
    int count = 1;                 // CountIn
};

struct GoalSpec {
    TaskType task_type = TaskType::PickAndPlace;
    std::vector<Condition> conditions;

    json to_json() const;
    static GoalSpec from_json(const json& j);
};

struct GoalCheck {
    bool task_success = false;
    int satisfied = 0;
    int total = 0;
};

// ---------------------------------------------------------------------------
// Episode state

enum class StepEvent : int { Ok = 0, Blocked = 1, ApiFail = 2, Done = 3 };
const char* step_event_name(StepEvent e);

struct ObjectLocation {
    bool on_floor = true;
    Cell cell;
    int receptacle = -1;
    int slot = 0;
    bool operator==(const ObjectLocation&) const = default;
};

struct WorldOptions {
    double confidence_noise_amplitude = 0.05;  // zero-mean noise added to confidences
    bool mask_noise = false;                   // erode/dilate ground-truth masks by <= 1 px
    uint64_t episode_seed = 0;                 // seeds the confidence/mask noise
};

struct EpisodeState {
    const WorldSpec* spec = nullptr;
    Layout layout;
    GoalSpec goal;
    AgentPose pose;
    int holding = -1;  // object index or -1
    std::vector<uint8_t> open_state;   // per receptacle
    std::vector<uint8_t> on_state;     // per receptacle
    std::vector<uint8_t> sliced;       // per object
    std::vector<ObjectLocation> object_location;
    int step_count = 0;
    bool terminated = false;
    WorldOptions options;

    Cell ahead() const {
        Cell f = forward_of(pose.heading);
        return {pose.x + f.x, pose.y + f.y};
    }
};

// Dense egocentric raster; channel layout given by WorldSpec::channel_manifest.
struct Observation {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;  // [c][y][x]

    double at(int c, int y, int x) const { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
    bool operator==(const Observation&) const = default;

    std::vector<uint8_t> to_u8() const;
    static Observation from_u8(const std::vector<uint8_t>& bytes, int channels, int height, int width);
};

struct MaskInstance {
    int instance_id = -1;  // receptacles first, then objects
    std::string cls;
    PixelMask mask;
    double confidence = 0.0;
    double center_y = 0.0;  // centroid of mask pixels, pixel coordinates
    double center_x = 0.0;
};

// ---------------------------------------------------------------------------
// Operations

EpisodeState reset(const Layout& layout, const GoalSpec& goal, const AgentPose& start,
                   const WorldOptions& options = {}, const WorldSpec& spec = WorldSpec::standard());

StepEvent step(EpisodeState& state, const Action& action);

Observation render(const EpisodeState& state);

// One MaskInstance per visible instance of `cls` (object or receptacle class).
// Throws on unknown class names.
std::vector<MaskInstance> ground_truth_instances(const EpisodeState& state, const std::string& cls);

// All visible instances regardless of class (used for mask resolution).
std::vector<MaskInstance> all_visible_instances(const EpisodeState& state);

// Instance ids index receptacles first, then objects.
int num_instances(const EpisodeState& state);
Cell instance_cell(const EpisodeState& state, int instance_id);
const std::string& instance_class(const EpisodeState& state, int instance_id);

// Largest-pixel-overlap resolution against the visible ground-truth masks,
// ties broken by smallest instance id; -1 when the mask overlaps nothing.
int resolve_interaction_mask(const EpisodeState& state, const PixelMask& mask);

GoalCheck check_goal(const EpisodeState& state, const GoalSpec& goal);

// ---------------------------------------------------------------------------
// Layout generation

enum class Split : int { Train = 0, SeenEval = 1, UnseenEval = 2 };
const char* split_name(Split s);

struct GeneratorConfig {
    int width = 10;
    int height = 10;
    int train_arrangements = 8;
    int unseen_arrangements = 4;
    uint64_t arrangement_pool_seed = 0x9042A11CEull;
    int min_objects = 6;
    int max_objects = 7;
    std::string version = "layoutgen-1";

    json to_json() const;
    static GeneratorConfig from_json(const json& j);
};

// Deterministic in (seed, split, config). Seen-eval layouts reuse the train
// arrangement pool with fresh object placements; unseen-eval layouts draw from
// a disjoint arrangement pool.
Layout generate_layout(uint64_t seed, Split split, const GeneratorConfig& cfg = {},
                       const WorldSpec& spec = WorldSpec::standard());

}  // namespace gridagent
