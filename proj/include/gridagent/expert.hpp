#pragma once

// Expert demonstrations: solvable-task sampling, shortest-path planning with
// scripted interactions, templated language, and the on-disk dataset.

#include <filesystem>
#include <optional>

#include "gridagent/gridworld.hpp"

namespace gridagent {

// ---------------------------------------------------------------------------
// Subgoals and trajectories

enum class SubgoalKind : int { Goto = 0, Pickup, Put, Open, Close, Toggle, Slice };
constexpr int kNumSubgoalKinds = 7;
const char* subgoal_kind_name(SubgoalKind k);

struct Subgoal {
    SubgoalKind kind = SubgoalKind::Goto;
    std::string target_class;
    Cell target_cell;
    int target_instance = -1;  // instance id (receptacles first, then objects)
    int object_instance = -1;  // for Put: the instance being placed
    int start = 0;             // first step index of this subgoal's segment
    int length = 0;            // number of actions in the segment
};

struct TrajectoryStep {
    Observation observation;     // rendered before the action
    Action action;               // ground-truth mask attached for interactions
    int interaction_class = -1;  // class id, or -1 for navigation/Stop
};

struct InstructionPair {
    std::vector<std::string> goal_tokens;
    std::vector<std::vector<std::string>> instr_sentences;  // one per subgoal
    std::vector<std::string> instr_tokens;                  // sentences joined with "then"
    std::vector<int> goal_ids;
    std::vector<int> instr_ids;
};

struct Trajectory {
    Layout layout;
    GoalSpec goal;
    AgentPose start;
    uint64_t episode_seed = 0;
    WorldOptions world_options;
    std::vector<TrajectoryStep> steps;
    std::vector<Subgoal> subgoals;
    InstructionPair language;
};

// ---------------------------------------------------------------------------
// Vocabulary (closed: the templates enumerate every token)

struct Vocabulary {
    std::vector<std::string> tokens;

    int id(const std::string& token) const;
    int require_id(const std::string& token) const;  // throws on unknown token
    uint64_t hash() const;
    static const Vocabulary& standard();

    json to_json() const;
    static Vocabulary from_json(const json& j);
};

// ---------------------------------------------------------------------------
// Navigation search (breadth-first over x, y, heading; unit cost)

struct NavPlan {
    std::vector<ActionTag> actions;
    AgentPose end;
};

// Shortest action sequence to a pose whose ahead-cell is `target`.
std::optional<NavPlan> shortest_path_to_face(const EpisodeState& state, Cell target);

// BFS distance from the agent pose to the nearest pose facing `target`;
// returns nullopt when unreachable.
std::optional<int> face_distance(const EpisodeState& state, Cell target);

// ---------------------------------------------------------------------------
// Planning and language

// Optimal expert trajectory for the goal, or nullopt when unsolvable or over
// `max_steps`. The returned trajectory has no language; see templatize.
std::optional<Trajectory> plan(const Layout& layout, const GoalSpec& goal, const AgentPose& start,
                               const WorldOptions& options = {}, int max_steps = 60,
                               const WorldSpec& spec = WorldSpec::standard());

InstructionPair templatize(const Trajectory& trajectory, uint64_t rng_seed,
                           const Vocabulary& vocab = Vocabulary::standard(),
                           const WorldSpec& spec = WorldSpec::standard());

// Samples a goal satisfiable in this layout, or nullopt if no task type fits.
std::optional<GoalSpec> sample_goal(const Layout& layout, Rng& rng,
                                    const WorldSpec& spec = WorldSpec::standard());

AgentPose sample_start(const Layout& layout, Rng& rng);

// ---------------------------------------------------------------------------
// Replay

struct ReplayReport {
    bool task_success = false;
    int satisfied = 0;
    int total = 0;
    int blocked_events = 0;
    int api_fail_events = 0;
    bool observations_match = true;  // stored observations equal re-rendered ones
};

ReplayReport replay_trajectory(const Trajectory& traj, bool check_observations = true,
                               const WorldSpec& spec = WorldSpec::standard());

// ---------------------------------------------------------------------------
// Dataset

struct DatasetConfig {
    uint64_t master_seed = 0;
    int train_episodes = 200;
    int seen_episodes = 50;
    int unseen_episodes = 50;
    GeneratorConfig generator;
    double confidence_noise_amplitude = 0.05;
    bool mask_noise = false;
    int max_steps = 60;
    int retry_cap = 50;
    int jobs = 1;

    json to_json() const;
    static DatasetConfig from_json(const json& j);
};

struct EpisodeMeta {
    int index = 0;
    std::string file_prefix;  // e.g. "train/ep_000012"
    uint64_t layout_seed = 0;
    uint64_t episode_seed = 0;
    int arrangement_id = 0;
    TaskType task_type = TaskType::PickAndPlace;
    int num_steps = 0;
};

struct DatasetManifest {
    DatasetConfig config;
    uint64_t vocab_hash = 0;
    std::vector<EpisodeMeta> splits[3];  // indexed by Split

    const std::vector<EpisodeMeta>& split(Split s) const { return splits[static_cast<int>(s)]; }
};

const char* dataset_split_dir(Split s);  // train / valid_seen / valid_unseen

// Writes manifest.json, vocab.json and one (json, npy) pair per episode.
// Deterministic in the config.
DatasetManifest build_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir,
                              const WorldSpec& spec = WorldSpec::standard());

DatasetManifest load_manifest(const std::filesystem::path& dataset_dir);

Trajectory load_trajectory(const std::filesystem::path& dataset_dir, const EpisodeMeta& meta,
                           bool with_observations = true,
                           const WorldSpec& spec = WorldSpec::standard());

uint64_t manifest_hash(const std::filesystem::path& dataset_dir);

}  // namespace gridagent
