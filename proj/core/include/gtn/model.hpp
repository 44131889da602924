#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gtn/graph.hpp"
#include "gtn/param_set.hpp"
#include "gtn/rng.hpp"

namespace gtn {

// Topology hyperparameters for a tower network: `levels` stacked conv+LSTM
// streams of `conv_layers` convolutions each, merged through per-level
// projections into one concatenation layer that feeds the heads.
struct GtnConfig {
    int levels = 4;      // vertical streams (M)
    int conv_layers = 4; // convs per stream (N)
    int channels = 32;   // kernels per conv
    int kernel = 3;
    int stride = 2;
    int lstm_size = 288;  // S
    int concat_size = 288; // A
    int input_side = 42;
    std::vector<int> action_space_sizes = {4};
    double entropy_coeff = 0.01;

    void validate() const; // throws ConfigError
    bool operator==(const GtnConfig&) const = default;
};

// Spatial bookkeeping for one level's conv chain.
struct LevelGeometry {
    int input_side = 0;
    int input_channels = 0;
    std::vector<int> conv_sides; // output side after each conv
    int flatten_width = 0;
};

// Geometry of every level under `cfg`; level m>=2 consumes the feature map
// produced by the first conv of level m-1.
std::vector<LevelGeometry> level_geometries(const GtnConfig& cfg);

enum class ParamKind { ConvWeight, LstmWx, LstmWh, ConcatProj, HeadWeight, Bias, LstmBias };

struct ParamSpec {
    std::string name;
    std::vector<int> shape;
    ParamKind kind;
};

// The exact parameter names and shapes a config implies; the structural audit
// used by construction, checkpoint loading and tests.
std::vector<ParamSpec> expected_parameter_shapes(const GtnConfig& cfg);

// One forward step's outputs.
struct ForwardResult {
    std::map<int, Tensor> policies; // action-space size -> probability vector
    double value = 0.0;
    std::vector<LstmState> new_recurrent;
    std::vector<Tensor> level_activations; // clean LSTM outputs a_1..a_M
};

class GtnNetwork {
public:
    GtnNetwork(GtnConfig cfg, uint64_t seed);
    static GtnNetwork from_parts(GtnConfig cfg, ParameterSet params);

    const GtnConfig& config() const { return cfg_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

    std::vector<LstmState>& recurrent() { return recurrent_; }
    const std::vector<LstmState>& recurrent() const { return recurrent_; }
    void reset_recurrent();

    // Pure forward: does not touch the stored recurrent slots. Draws from the
    // per-level noise samplers when enabled.
    ForwardResult forward(const Tensor& obs, const std::vector<LstmState>& rec_in);

    // Convenience stepping against the stored recurrent state.
    ForwardResult step(const Tensor& obs);

    // Tape-building forward for gradient work. rec_in holds (hidden, cell)
    // handles per level; policies are post-softmax nodes.
    struct GraphForward {
        std::map<int, Value> policies;
        Value value;
        std::vector<std::pair<Value, Value>> recurrent;
        std::vector<Value> activations;
    };
    GraphForward forward_graph(Graph& g, Value obs,
                               const std::vector<std::pair<Value, Value>>& rec_in);

    // While enabled, every forward adds i.i.d. N(0,1) (or custom sampler)
    // noise elementwise to level `level`'s LSTM activation before it enters
    // the concatenation layer. `level` is 1-based.
    void set_level_noise(int level, bool enabled, Rng& rng);
    void set_level_noise(int level, std::function<double()> sampler); // empty fn disables

private:
    GtnNetwork() = default;

    GtnConfig cfg_;
    std::vector<LevelGeometry> geom_;
    ParameterSet params_;
    std::vector<LstmState> recurrent_;
    std::vector<std::function<double()>> noise_;
};

// Stage-1 parameter copy. Configs must match; dst recurrent state untouched.
void copy_parameters(const GtnNetwork& src, GtnNetwork& dst);

// Binary checkpoint ("GTN1" magic, versioned, per-tensor records) plus a JSON
// sidecar at <path>.json carrying the config. f32 mode halves the payload at
// reduced precision; f64 round-trips bitwise.
void save_checkpoint(const GtnNetwork& net, const std::string& path, bool use_f32 = false);
GtnNetwork load_checkpoint(const std::string& path);

} // namespace gtn
