#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <vector>

#include "gtn/env.hpp"
#include "gtn/model.hpp"
#include "gtn/optimizer.hpp"

namespace gtn {

// Experiences gathered in Stage 2: {o_t, f_{t-1}, a_t, r_t} per step plus the
// terminal flag and the bootstrap value used by the return computation.
struct RolloutStep {
    Tensor observation;
    std::vector<LstmState> recurrent_before;
    int action = 0;
    double reward = 0.0; // normalized when a normalizer was active
};

struct RolloutBuffer {
    std::vector<RolloutStep> steps;
    bool terminal = false;
    double bootstrap_value = 0.0; // 0 when terminal
    int action_count = 0;         // selects the policy head
};

struct EpisodeRecord {
    int task_id = 0;
    long episode = 0;
    uint64_t update_counter = 0;
    double raw_score = 0.0;
    double normalized_return = 0.0;
};

struct TrainConfig {
    GtnConfig model;
    std::vector<TaskSpec> tasks;
    int workers = 1;
    int t_max = 20;
    double gamma = 0.99;
    long episodes_per_task = 1000;
    double learning_rate = 7e-4;
    double rms_decay = 0.99;
    double rms_epsilon = 0.1;
    uint64_t seed = 1;
    double epsilon_greedy = 0.0; // optional uniform-exploration mix, default off
    long max_updates = 0;        // auxiliary stop condition; 0 = unlimited
    long checkpoint_every = 0;   // episodes (all tasks) between snapshot callbacks
    std::function<void(long, const ParameterSet&)> on_checkpoint;
    std::function<void(const EpisodeRecord&)> on_episode;

    void validate() const;

    bool operator==(const TrainConfig& o) const {
        return model == o.model && tasks_equal(o) && workers == o.workers && t_max == o.t_max &&
               gamma == o.gamma && episodes_per_task == o.episodes_per_task &&
               learning_rate == o.learning_rate && rms_decay == o.rms_decay &&
               rms_epsilon == o.rms_epsilon && seed == o.seed &&
               epsilon_greedy == o.epsilon_greedy && max_updates == o.max_updates &&
               checkpoint_every == o.checkpoint_every;
    }

private:
    bool tasks_equal(const TrainConfig& o) const;
};

// Thread-shared parameter server: a single lock serializes snapshots and
// updates, so every snapshot observes the store at one update-counter value.
class GlobalStore {
public:
    GlobalStore(const GtnConfig& cfg, uint64_t seed, size_t task_count, double lr, double decay,
                double eps);

    // Stage 1: copy current values into dst; returns the update counter the
    // copy corresponds to. Throws UsageError if the counter moves mid-copy.
    uint64_t snapshot(ParameterSet& dst) const;

    // Stage 3: one RMSProp step from grads' gradient slots. Updates carrying
    // any non-finite gradient are rejected: parameters and counter stay
    // untouched and the rejection counter advances.
    void apply_update(const ParameterSet& grads);

    uint64_t update_count() const;
    uint64_t rejected_count() const;
    ParameterSet params_copy() const;

    long episode_count(size_t task) const;
    // Registers a finished episode; returns (per-task episode index, total).
    std::pair<long, long> add_episode(size_t task);
    long total_episodes() const;

private:
    mutable std::mutex mu_;
    ParameterSet params_;
    OptimizerState opt_;
    uint64_t updates_ = 0;
    uint64_t rejected_ = 0;
    std::vector<long> task_episodes_;
    long total_episodes_ = 0;
};

struct TrainResult {
    GtnConfig model;
    ParameterSet final_params;
    uint64_t updates = 0;
    uint64_t rejected_updates = 0;
    std::vector<long> episodes_per_task;
    std::vector<EpisodeRecord> log;
};

// Runs the full asynchronous loop: `workers` threads, worker i pinned to task
// (i mod tasks), each repeating snapshot -> rollout -> update until the
// per-task episode budget (or max_updates) is exhausted. Any worker failure
// aborts the run with the worker's diagnostic.
TrainResult train(const TrainConfig& cfg);

// ---- Stage building blocks (exposed for tests and tools) --------------------

// R_t = r_t + gamma * R_{t+1}, seeded with the bootstrap value.
std::vector<double> discounted_returns(const std::vector<double>& rewards, double bootstrap,
                                       double gamma);

// Categorical draw from a probability vector.
int sample_action(const Tensor& policy, Rng& rng);

// argmax with lowest-index tie break.
int greedy_action(const Tensor& policy);

// Per-task step-reward normalization: the first two episodes pass rewards
// through while recording max |r|; afterwards rewards are divided by the
// frozen recorded maximum (1.0 when nothing scored).
struct RewardNormalizer {
    long episodes_completed = 0;
    double recorded_max = 0.0;
    double scale = 1.0;
    bool frozen = false;

    double apply(double r) {
        if (!frozen) {
            recorded_max = std::max(recorded_max, std::fabs(r));
            return r;
        }
        return r / scale;
    }
    void end_episode() {
        episodes_completed += 1;
        if (!frozen && episodes_completed >= 2) {
            scale = recorded_max > 0.0 ? recorded_max : 1.0;
            frozen = true;
        }
    }
};

// Stage 2. Steps the local net (advancing its stored recurrent state) and the
// environment from `current_obs`, for up to t_max steps or episode end.
// Mutates current_obs to the next unconsumed observation; on a non-terminal
// cutoff the bootstrap value is the local net's V at that observation.
// Accumulates raw/normalized episode scores into the two optional sinks.
RolloutBuffer collect_rollout(GtnNetwork& local, Env& env, Tensor& current_obs, int t_max,
                              Rng& rng, RewardNormalizer* normalizer = nullptr,
                              double* episode_raw = nullptr, double* episode_norm = nullptr,
                              double epsilon_greedy = 0.0);

// Stage 3 gradient accumulation (Eq. objective: policy term with detached
// advantage, squared value error, entropy bonus beta), backpropagated through
// time across the whole buffer into the local set's gradient slots. Callers
// zero the slots beforehand.
void accumulate_gradients(const RolloutBuffer& buffer, GtnNetwork& local, double beta,
                          double gamma);

} // namespace gtn
