#pragma once

// Metric suite: task and goal-condition success rates with path-length
// weighting, per-task-type and per-subgoal tables, and the ablation grid.

#include "gridagent/eval/rollout.hpp"
#include "gridagent/train/trainer.hpp"

namespace gridagent {

// s * L_expert / max(L_expert, L_agent); throws on nonpositive lengths.
double plw(double success, int expert_length, int agent_length);

struct SplitMetrics {
    int episodes = 0;
    double task_sr = 0.0;
    double goal_cond_sr = 0.0;       // per-episode k/n, averaged
    double plw_task_sr = 0.0;
    double plw_goal_cond_sr = 0.0;

    json to_json() const;
};

SplitMetrics aggregate(const std::vector<EpisodeResult>& results);

struct EvalReport {
    std::string split;
    SplitMetrics metrics;
    std::vector<std::pair<std::string, SplitMetrics>> per_task_type;
    std::vector<EpisodeResult> episodes;

    json to_json(bool with_episodes = true) const;
    std::string table_text() const;
};

struct EvalOptions {
    RolloutLimits limits;
    int jobs = 1;
    std::filesystem::path log_path;  // optional line-delimited JSON step logs
};

EvalReport evaluate_split(Model& model, const std::filesystem::path& dataset_dir,
                          const DatasetManifest& manifest, Split split, const EvalOptions& options = {},
                          const WorldSpec& spec = WorldSpec::standard());

EvalReport evaluate_expert_replay(const std::filesystem::path& dataset_dir,
                                  const DatasetManifest& manifest, Split split,
                                  const EvalOptions& options = {},
                                  const WorldSpec& spec = WorldSpec::standard());

// ---------------------------------------------------------------------------
// Subgoal evaluation: replay the expert prefix teacher-forced, hand control to
// the model at the subgoal boundary, and score completion with PLW against the
// expert segment length.

struct SubgoalRow {
    SubgoalKind kind = SubgoalKind::Goto;
    int attempts = 0;
    double success_rate = 0.0;
    double plw = 0.0;
};

struct SubgoalReport {
    std::vector<SubgoalRow> rows;  // exactly the 7 kinds, fixed order
    json to_json() const;
    std::string table_text() const;
};

SubgoalReport subgoal_eval(Model& model, const std::filesystem::path& dataset_dir,
                           const DatasetManifest& manifest, Split split,
                           const EvalOptions& options = {},
                           const WorldSpec& spec = WorldSpec::standard());

// Oracle ceiling: the expert's own actions drive every subgoal attempt.
SubgoalReport subgoal_eval_expert(const std::filesystem::path& dataset_dir,
                                  const DatasetManifest& manifest, Split split,
                                  const EvalOptions& options = {},
                                  const WorldSpec& spec = WorldSpec::standard());

// Scores one subgoal attempt; exposed for the oracle-ceiling test.
struct SubgoalAttempt {
    bool success = false;
    int steps_used = 0;
    double plw_score = 0.0;
};

// ---------------------------------------------------------------------------
// Ablation grid

struct AblationRow {
    std::string name;
    std::string description;
    ModelConfig config;              // seed filled per grid seed
    bool reuse_full_checkpoint = false;  // inference-only variants reuse row `a`
};

// Component rows a..h, the inference ablations (instance association,
// obstruction evasion, input zeroing) and the stream-language rows.
std::vector<AblationRow> standard_ablation_rows(const ModelConfig& base);
AblationRow ablation_row(const std::string& name, const ModelConfig& base);

struct GridCell {
    SplitMetrics seen;
    SplitMetrics unseen;
};

struct GridRowResult {
    std::string name;
    std::string description;
    std::vector<GridCell> per_seed;
    GridCell mean;
};

struct GridReport {
    std::vector<GridRowResult> rows;
    int seeds = 0;
    json to_json() const;
    std::string table_text() const;
    std::string csv_text() const;
};

struct GridOptions {
    int seeds = 3;
    int jobs = 1;
    RolloutLimits limits;
    std::filesystem::path run_dir;  // checkpoints cached under run_dir/checkpoints
    bool quiet = true;
};

GridReport ablation_grid(const std::filesystem::path& dataset_dir, const std::vector<AblationRow>& rows,
                         const ModelConfig& base, const GridOptions& options,
                         const WorldSpec& spec = WorldSpec::standard());

}  // namespace gridagent
