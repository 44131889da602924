#include "gtn/env.hpp"

#include <algorithm>
#include <cmath>

#include "gtn/errors.hpp"

namespace gtn {

void TaskSpec::validate() const {
    if (tier < 1 || tier > 3) throw ConfigError("tier must be 1, 2 or 3");
    if (grid_width < 2 || grid_height < 1) throw ConfigError("grid must be at least 2x1");
    if (target_density <= 0.0 || target_density > 1.0)
        throw ConfigError("target_density must be in (0,1]");
    if (bad_target_fraction < 0.0 || bad_target_fraction >= 1.0)
        throw ConfigError("bad_target_fraction must be in [0,1)");
    if (tier != 3 && bad_target_fraction != 0.0)
        throw ConfigError("bad targets only exist in tier 3 tasks");
    if (tier == 1 && target_density < 0.8)
        throw ConfigError("tier 1 requires target_density >= 0.8 so blind shooting scores");
    if (penalty > 0.0) throw ConfigError("penalty must be <= 0");
    if (episode_cap < 1) throw ConfigError("episode_cap must be >= 1");
    if (action_count < 2 || action_count > 18)
        throw ConfigError("action_count must be within [2,18]");
    if (render_side < 1) throw ConfigError("render_side must be >= 1");
}

TaskSpec tier_preset(int tier) {
    TaskSpec s;
    s.tier = tier;
    switch (tier) {
    case 1:
        s.target_density = 1.0;
        s.bad_target_fraction = 0.0;
        s.action_count = 4;
        s.name = "shoot";
        break;
    case 2:
        s.target_density = 0.25;
        s.bad_target_fraction = 0.0;
        s.action_count = 5;
        s.name = "aim-shoot";
        break;
    case 3:
        s.target_density = 0.5;
        s.bad_target_fraction = 0.5;
        s.penalty = -1.0;
        s.action_count = 6;
        s.name = "aim-valid-shoot";
        break;
    default:
        throw ConfigError("tier must be 1, 2 or 3");
    }
    s.validate();
    return s;
}

namespace {

int target_count(const TaskSpec& spec) {
    int n = static_cast<int>(std::lround(spec.target_density * spec.grid_width));
    return std::clamp(n, 1, spec.grid_width);
}

int bad_count(const TaskSpec& spec) {
    int n = target_count(spec);
    int bad = static_cast<int>(std::lround(spec.bad_target_fraction * n));
    return std::clamp(bad, 0, n - 1); // at least one good target always exists
}

} // namespace

Env::Env(TaskSpec spec, uint64_t seed) : spec_(std::move(spec)) {
    spec_.validate();
    reset(seed);
}

void Env::spawn_initial_field() {
    const int w = spec_.grid_width;
    state_.target_row.assign(static_cast<size_t>(w), -1);
    state_.target_bad.assign(static_cast<size_t>(w), 0);

    std::vector<int> cols(static_cast<size_t>(w));
    for (int i = 0; i < w; ++i) cols[static_cast<size_t>(i)] = i;
    // partial Fisher-Yates driven by the episode rng
    int n = target_count(spec_);
    for (int i = 0; i < n; ++i) {
        int j = i + state_.rng.uniform_int(w - i);
        std::swap(cols[static_cast<size_t>(i)], cols[static_cast<size_t>(j)]);
    }
    int n_bad = bad_count(spec_);
    for (int i = 0; i < n; ++i) {
        int col = cols[static_cast<size_t>(i)];
        state_.target_row[static_cast<size_t>(col)] = state_.rng.uniform_int(spec_.grid_height);
        state_.target_bad[static_cast<size_t>(col)] = (i < n_bad) ? 1 : 0;
    }
}

Tensor Env::reset(uint64_t seed) {
    long next_episode = state_.episode_index + 1;
    state_ = EnvState{};
    state_.rng = Rng(seed);
    state_.episode_index = next_episode;
    state_.agent_col = state_.rng.uniform_int(spec_.grid_width);
    spawn_initial_field();
    return render();
}

void Env::respawn_one(bool bad) {
    std::vector<int> empty;
    for (int c = 0; c < spec_.grid_width; ++c)
        if (state_.target_row[static_cast<size_t>(c)] < 0) empty.push_back(c);
    // the column just vacated guarantees at least one slot
    int col = empty[static_cast<size_t>(state_.rng.uniform_int(static_cast<int>(empty.size())))];
    state_.target_row[static_cast<size_t>(col)] = state_.rng.uniform_int(spec_.grid_height);
    state_.target_bad[static_cast<size_t>(col)] = bad ? 1 : 0;
}

StepResult Env::step(int action) {
    if (action < 0 || action >= spec_.action_count)
        throw UsageError("action " + std::to_string(action) + " outside [0," +
                         std::to_string(spec_.action_count) + ")");
    double reward = 0.0;
    switch (action) {
    case 1: { // shoot straight up
        int col = state_.agent_col;
        if (state_.target_row[static_cast<size_t>(col)] >= 0) {
            bool bad = state_.target_bad[static_cast<size_t>(col)] != 0;
            reward = bad ? spec_.penalty : 1.0;
            state_.target_row[static_cast<size_t>(col)] = -1;
            state_.destroyed_total += 1;
            if (state_.destroyed_total % target_count(spec_) == 0) state_.wave += 1;
            respawn_one(bad);
        }
        break;
    }
    case 2:
        state_.agent_col = std::max(0, state_.agent_col - 1);
        break;
    case 3:
        state_.agent_col = std::min(spec_.grid_width - 1, state_.agent_col + 1);
        break;
    default: // 0 and aliases
        break;
    }
    state_.step_count += 1;
    StepResult res;
    res.reward = reward;
    res.done = state_.step_count >= spec_.episode_cap;
    res.observation = render();
    return res;
}

Tensor Env::render() const {
    const int side = spec_.render_side;
    const int w = spec_.grid_width;
    const int rows = spec_.grid_height + 1; // grid plus the agent band
    Tensor obs = Tensor::zeros({1, side, side});

    auto fill_cell = [&](int row, int col, double level) {
        int y0 = row * side / rows, y1 = (row + 1) * side / rows;
        int x0 = col * side / w, x1 = (col + 1) * side / w;
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) obs.at3(0, y, x) = level;
    };

    for (int c = 0; c < w; ++c) {
        int r = state_.target_row[static_cast<size_t>(c)];
        if (r < 0) continue;
        fill_cell(r, c, state_.target_bad[static_cast<size_t>(c)] ? 0.6 : 1.0);
    }
    fill_cell(spec_.grid_height, state_.agent_col, 0.3);
    return obs;
}

int oracle_action(int oracle_tier, const TaskSpec& spec, const EnvState& state) {
    if (oracle_tier == 1) return 1;

    const int w = spec.grid_width;
    auto is_candidate = [&](int c) {
        if (state.target_row[static_cast<size_t>(c)] < 0) return false;
        if (oracle_tier >= 3 && state.target_bad[static_cast<size_t>(c)]) return false;
        return true;
    };

    if (is_candidate(state.agent_col)) return 1;
    int best = -1, best_dist = 1 << 30;
    for (int c = 0; c < w; ++c) {
        if (!is_candidate(c)) continue;
        int d = std::abs(c - state.agent_col);
        if (d < best_dist) {
            best_dist = d;
            best = c;
        }
    }
    if (best < 0) return 0; // nothing to aim at
    int move = best < state.agent_col ? 2 : 3;
    if (move >= spec.action_count) {
        // no movement actions in this task; shoot if something is overhead
        return state.target_row[static_cast<size_t>(state.agent_col)] >= 0 ? 1 : 0;
    }
    return move;
}

double random_baseline_score(const TaskSpec& spec, int episodes, uint64_t seed) {
    if (episodes < 1) throw UsageError("episodes must be >= 1");
    Rng actions(Rng(seed).fork(1));
    Env env(spec, seed);
    double total = 0.0;
    for (int ep = 0; ep < episodes; ++ep) {
        env.reset(Rng(seed).fork(100 + static_cast<uint64_t>(ep)).seed());
        bool done = false;
        while (!done) {
            StepResult r = env.step(actions.uniform_int(spec.action_count));
            total += r.reward;
            done = r.done;
        }
    }
    return total / episodes;
}

} // namespace gtn
