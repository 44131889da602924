#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gtn/rng.hpp"
#include "gtn/tensor.hpp"

namespace gtn {

// One toy shooter task. The three tiers encode nested strategy requirements:
//   tier 1: every column holds a good target; shooting continuously scores.
//   tier 2: targets are sparse; the agent must aim (move under a target).
//   tier 3: some targets are bad; the agent must aim at good targets only.
struct TaskSpec {
    int tier = 1;
    int grid_width = 12;
    int grid_height = 12;
    double target_density = 1.0;     // fraction of columns holding a target
    double bad_target_fraction = 0.0; // tier 3 only
    double penalty = -1.0;           // reward for destroying a bad target
    int episode_cap = 400;
    int action_count = 4; // 0=no-op, 1=shoot, 2=left, 3=right, >=4 alias no-op
    int render_side = 42;
    std::string name = "task";

    void validate() const; // throws ConfigError
};

// Canonical task family used by the experiments.
TaskSpec tier_preset(int tier);

// Mutable world state. At most one target per column; when a target is
// destroyed a replacement of the same kind spawns in a random empty column,
// so the field's composition is stationary. The wave counter advances every
// time a full field's worth of targets has turned over.
struct EnvState {
    int agent_col = 0;
    std::vector<int> target_row;      // per column; -1 = empty
    std::vector<uint8_t> target_bad;  // per column; valid when target_row >= 0
    long wave = 0;
    long destroyed_total = 0;
    int step_count = 0;
    long episode_index = 0;
    Rng rng{0};
};

struct StepResult {
    Tensor observation; // [1, render_side, render_side], values in [0,1]
    double reward = 0.0;
    bool done = false;
};

class Env {
public:
    Env(TaskSpec spec, uint64_t seed);

    // Deterministic fresh layout; returns the initial observation.
    Tensor reset(uint64_t seed);

    // Applies one action. Throws UsageError if action is outside
    // [0, action_count).
    StepResult step(int action);

    const TaskSpec& spec() const { return spec_; }
    const EnvState& state() const { return state_; }

    Tensor render() const;

private:
    void spawn_initial_field();
    void respawn_one(bool bad);

    TaskSpec spec_;
    EnvState state_;
};

// Scripted policy embodying tier `oracle_tier` knowledge, applied to any
// task's state. Falls back to shoot/no-op when the task's action space has no
// movement actions.
int oracle_action(int oracle_tier, const TaskSpec& spec, const EnvState& state);

// The task's own oracle.
inline int oracle_policy(const TaskSpec& spec, const EnvState& state) {
    return oracle_action(spec.tier, spec, state);
}

// Mean undiscounted episode score of uniform-random actions.
double random_baseline_score(const TaskSpec& spec, int episodes, uint64_t seed);

} // namespace gtn
