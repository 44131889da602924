#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gtn/param_set.hpp"
#include "gtn/tensor.hpp"

namespace gtn {

// ---- Plain forward kernels -------------------------------------------------

// Strided convolution with "same"-style zero padding: output side is
// ceil(input/stride). x: [C_in,H,W], w: [C_out,C_in,k,k], b: [C_out].
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride);

// y = xW + b with x: [D], W: [D,A], b: [A].
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b);

// Elementwise max(0, x).
Tensor relu(const Tensor& x);

// Numerically stable softmax over a vector; strictly positive, sums to 1.
Tensor softmax(const Tensor& x);

// Output side of one same-padded strided conv.
inline int conv_out_side(int in, int stride) { return (in + stride - 1) / stride; }

// ---- Reverse-mode tape -----------------------------------------------------

class Graph;

// Handle to a node in a Graph. Cheap to copy; only meaningful with its graph.
struct Value {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Eager tape: every op computes its output at construction and records enough
// to run reverse-mode accumulation later. backward() adds parameter gradients
// into the bound ParameterSet gradient slots (+=); callers zero the slots.
// Not internally synchronized; one graph per thread.
class Graph {
public:
    // Constant leaf (observations, targets, noise draws).
    Value constant(Tensor t);

    // Parameter leaf; repeated requests for the same (set, name) return the
    // same node so each parameter appears once per graph.
    Value param(ParameterSet& ps, const std::string& name);

    Value conv2d(Value x, Value w, Value b, int stride);
    Value matvec(Value x, Value w); // x:[D], w:[D,A] -> [A]
    Value add(Value a, Value b);    // same shape
    Value mul(Value a, Value b);    // elementwise
    Value relu(Value x);
    Value sigmoid(Value x);
    Value tanh(Value x);
    Value softmax(Value x);
    Value slice(Value x, int offset, int len);
    Value reshape(Value x, std::vector<int> shape);
    Value pick(Value x, int index); // -> scalar
    Value log(Value x);
    Value sum(Value x); // -> scalar
    Value scale(Value x, double k);

    Value linear(Value x, Value w, Value b) { return add(matvec(x, w), b); }

    const Tensor& value(Value v) const;
    size_t node_count() const { return nodes_.size(); }

    // Reverse pass from a scalar root. Parameter gradients accumulate into
    // their ParameterSet slots. Throws UsageError on an empty graph or a
    // non-scalar root.
    void backward(Value root);

private:
    enum class Op {
        Constant,
        Param,
        Conv2d,
        MatVec,
        Add,
        Mul,
        Relu,
        Sigmoid,
        Tanh,
        Softmax,
        Slice,
        Reshape,
        Pick,
        Log,
        Sum,
        Scale,
    };

    struct Node {
        Op op;
        Tensor out;
        int a = -1, b = -1, c = -1;
        int stride = 0, pad_top = 0, pad_left = 0;
        int offset = 0, index = 0;
        double k = 0.0;
        ParameterSet* ps = nullptr;
        std::string pname;
    };

    int push(Node n);

    std::vector<Node> nodes_;
    std::unordered_map<ParameterSet*, std::unordered_map<std::string, int>> param_nodes_;
};

// One LSTM cell update composed from tape primitives. Input x: [D], packed
// weights wx: [D,4S], wh: [S,4S], bias: [4S] with gate order [i|f|o|g].
// Returns (output, (hidden, cell)); output aliases the new hidden state.
struct LstmNodes {
    Value output;
    Value hidden;
    Value cell;
};
LstmNodes lstm_step_graph(Graph& g, Value x, Value h_prev, Value c_prev, Value wx, Value wh,
                          Value bias, int state_size);

// Plain-tensor LSTM step over a throwaway graph; the nn-core surface used by
// code that does not need gradients.
std::pair<Tensor, LstmState> lstm_step(const Tensor& x, const LstmState& state, const Tensor& wx,
                                       const Tensor& wh, const Tensor& bias);

} // namespace gtn
