#include "gtn/graph.hpp"

#include <algorithm>
#include <cmath>

namespace gtn {

namespace {

struct ConvGeom {
    int c_in, h, w;
    int c_out, k;
    int out_h, out_w;
    int pad_top, pad_left;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
    if (x.shape.size() != 3) throw ConfigError("conv input must be [C,H,W], got " + shape_str(x.shape));
    if (w.shape.size() != 4) throw ConfigError("conv weights must be [C_out,C_in,k,k], got " + shape_str(w.shape));
    if (stride < 1) throw ConfigError("conv stride must be >= 1");
    ConvGeom g;
    g.c_in = x.shape[0];
    g.h = x.shape[1];
    g.w = x.shape[2];
    g.c_out = w.shape[0];
    g.k = w.shape[2];
    if (w.shape[1] != g.c_in)
        throw ConfigError("conv weight C_in " + std::to_string(w.shape[1]) +
                          " does not match input channels " + std::to_string(g.c_in));
    if (w.shape[3] != g.k) throw ConfigError("conv kernel must be square");
    if (b.shape.size() != 1 || b.shape[0] != g.c_out)
        throw ConfigError("conv bias must be [C_out]");
    g.out_h = conv_out_side(g.h, stride);
    g.out_w = conv_out_side(g.w, stride);
    int pad_h = std::max((g.out_h - 1) * stride + g.k - g.h, 0);
    int pad_w = std::max((g.out_w - 1) * stride + g.k - g.w, 0);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
    return g;
}

Tensor conv2d_run(const Tensor& x, const Tensor& w, const Tensor& b, int stride, const ConvGeom& g) {
    Tensor out = Tensor::zeros({g.c_out, g.out_h, g.out_w});
    for (int co = 0; co < g.c_out; ++co) {
        for (int oy = 0; oy < g.out_h; ++oy) {
            for (int ox = 0; ox < g.out_w; ++ox) {
                double acc = b[static_cast<size_t>(co)];
                for (int ci = 0; ci < g.c_in; ++ci) {
                    for (int ky = 0; ky < g.k; ++ky) {
                        int iy = oy * stride + ky - g.pad_top;
                        if (iy < 0 || iy >= g.h) continue;
                        for (int kx = 0; kx < g.k; ++kx) {
                            int ix = ox * stride + kx - g.pad_left;
                            if (ix < 0 || ix >= g.w) continue;
                            acc += w.data[static_cast<size_t>(((co * g.c_in + ci) * g.k + ky) * g.k + kx)] *
                                   x.at3(ci, iy, ix);
                        }
                    }
                }
                out.at3(co, oy, ox) = acc;
            }
        }
    }
    return out;
}

} // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
    ConvGeom g = conv_geometry(x, w, b, stride);
    return conv2d_run(x, w, b, stride, g);
}

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.shape.size() != 1 || w.shape.size() != 2 || b.shape.size() != 1)
        throw ConfigError("linear expects x:[D], W:[D,A], b:[A]");
    int d = x.shape[0], a = w.shape[1];
    if (w.shape[0] != d || b.shape[0] != a)
        throw ConfigError("linear shape mismatch: x " + shape_str(x.shape) + " W " +
                          shape_str(w.shape) + " b " + shape_str(b.shape));
    Tensor y = Tensor::zeros({a});
    for (int i = 0; i < d; ++i) {
        double xi = x[static_cast<size_t>(i)];
        if (xi == 0.0) continue;
        for (int j = 0; j < a; ++j) y[static_cast<size_t>(j)] += xi * w.at2(i, j);
    }
    for (int j = 0; j < a; ++j) y[static_cast<size_t>(j)] += b[static_cast<size_t>(j)];
    return y;
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor softmax(const Tensor& x) {
    Tensor y = x;
    double mx = *std::max_element(x.data.begin(), x.data.end());
    double z = 0.0;
    for (auto& v : y.data) {
        v = std::exp(v - mx);
        z += v;
    }
    for (auto& v : y.data) v /= z;
    return y;
}

// ---- Graph -----------------------------------------------------------------

int Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

const Tensor& Graph::value(Value v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
        throw UsageError("value handle does not belong to this graph");
    return nodes_[static_cast<size_t>(v.id)].out;
}

Value Graph::constant(Tensor t) {
    Node n;
    n.op = Op::Constant;
    n.out = std::move(t);
    return {push(std::move(n))};
}

Value Graph::param(ParameterSet& ps, const std::string& name) {
    auto& cache = param_nodes_[&ps];
    auto it = cache.find(name);
    if (it != cache.end()) return {it->second};
    Node n;
    n.op = Op::Param;
    n.out = ps.value(name);
    n.ps = &ps;
    n.pname = name;
    int id = push(std::move(n));
    cache[name] = id;
    return {id};
}

Value Graph::conv2d(Value x, Value w, Value b, int stride) {
    const Tensor& xt = value(x);
    const Tensor& wt = value(w);
    const Tensor& bt = value(b);
    ConvGeom g = conv_geometry(xt, wt, bt, stride);
    Node n;
    n.op = Op::Conv2d;
    n.a = x.id;
    n.b = w.id;
    n.c = b.id;
    n.stride = stride;
    n.pad_top = g.pad_top;
    n.pad_left = g.pad_left;
    n.out = conv2d_run(xt, wt, bt, stride, g);
    return {push(std::move(n))};
}

Value Graph::matvec(Value x, Value w) {
    const Tensor& xt = value(x);
    const Tensor& wt = value(w);
    if (xt.shape.size() != 1 || wt.shape.size() != 2 || wt.shape[0] != xt.shape[0])
        throw ConfigError("matvec shape mismatch: x " + shape_str(xt.shape) + " W " +
                          shape_str(wt.shape));
    int d = xt.shape[0], a = wt.shape[1];
    Node n;
    n.op = Op::MatVec;
    n.a = x.id;
    n.b = w.id;
    n.out = Tensor::zeros({a});
    for (int i = 0; i < d; ++i) {
        double xi = xt[static_cast<size_t>(i)];
        if (xi == 0.0) continue;
        for (int j = 0; j < a; ++j) n.out[static_cast<size_t>(j)] += xi * wt.at2(i, j);
    }
    return {push(std::move(n))};
}

Value Graph::add(Value a, Value b) {
    const Tensor& at = value(a);
    const Tensor& bt = value(b);
    if (!at.same_shape(bt))
        throw ConfigError("add shape mismatch: " + shape_str(at.shape) + " vs " + shape_str(bt.shape));
    Node n;
    n.op = Op::Add;
    n.a = a.id;
    n.b = b.id;
    n.out = at;
    for (size_t i = 0; i < n.out.data.size(); ++i) n.out.data[i] += bt.data[i];
    return {push(std::move(n))};
}

Value Graph::mul(Value a, Value b) {
    const Tensor& at = value(a);
    const Tensor& bt = value(b);
    if (!at.same_shape(bt))
        throw ConfigError("mul shape mismatch: " + shape_str(at.shape) + " vs " + shape_str(bt.shape));
    Node n;
    n.op = Op::Mul;
    n.a = a.id;
    n.b = b.id;
    n.out = at;
    for (size_t i = 0; i < n.out.data.size(); ++i) n.out.data[i] *= bt.data[i];
    return {push(std::move(n))};
}

Value Graph::relu(Value x) {
    Node n;
    n.op = Op::Relu;
    n.a = x.id;
    n.out = gtn::relu(value(x));
    return {push(std::move(n))};
}

Value Graph::sigmoid(Value x) {
    Node n;
    n.op = Op::Sigmoid;
    n.a = x.id;
    n.out = value(x);
    for (auto& v : n.out.data) v = 1.0 / (1.0 + std::exp(-v));
    return {push(std::move(n))};
}

Value Graph::tanh(Value x) {
    Node n;
    n.op = Op::Tanh;
    n.a = x.id;
    n.out = value(x);
    for (auto& v : n.out.data) v = std::tanh(v);
    return {push(std::move(n))};
}

Value Graph::softmax(Value x) {
    Node n;
    n.op = Op::Softmax;
    n.a = x.id;
    n.out = gtn::softmax(value(x));
    return {push(std::move(n))};
}

Value Graph::slice(Value x, int offset, int len) {
    const Tensor& xt = value(x);
    if (xt.shape.size() != 1 || offset < 0 || len < 1 || offset + len > xt.shape[0])
        throw UsageError("slice out of range");
    Node n;
    n.op = Op::Slice;
    n.a = x.id;
    n.offset = offset;
    n.out = Tensor::zeros({len});
    std::copy(xt.data.begin() + offset, xt.data.begin() + offset + len, n.out.data.begin());
    return {push(std::move(n))};
}

Value Graph::reshape(Value x, std::vector<int> shape) {
    const Tensor& xt = value(x);
    if (Tensor::numel_of(shape) != xt.numel()) throw ConfigError("reshape element count mismatch");
    Node n;
    n.op = Op::Reshape;
    n.a = x.id;
    n.out = Tensor(std::move(shape), xt.data);
    return {push(std::move(n))};
}

Value Graph::pick(Value x, int index) {
    const Tensor& xt = value(x);
    if (index < 0 || index >= xt.numel()) throw UsageError("pick index out of range");
    Node n;
    n.op = Op::Pick;
    n.a = x.id;
    n.index = index;
    n.out = Tensor::scalar(xt[static_cast<size_t>(index)]);
    return {push(std::move(n))};
}

Value Graph::log(Value x) {
    Node n;
    n.op = Op::Log;
    n.a = x.id;
    n.out = value(x);
    for (auto& v : n.out.data) v = std::log(v);
    return {push(std::move(n))};
}

Value Graph::sum(Value x) {
    Node n;
    n.op = Op::Sum;
    n.a = x.id;
    n.out = Tensor::scalar(value(x).sum());
    return {push(std::move(n))};
}

Value Graph::scale(Value x, double k) {
    Node n;
    n.op = Op::Scale;
    n.a = x.id;
    n.k = k;
    n.out = value(x);
    for (auto& v : n.out.data) v *= k;
    return {push(std::move(n))};
}

void Graph::backward(Value root) {
    if (nodes_.empty()) throw UsageError("backward called before any forward computation");
    if (!root.valid() || root.id >= static_cast<int>(nodes_.size()))
        throw UsageError("backward root does not belong to this graph");
    if (nodes_[static_cast<size_t>(root.id)].out.numel() != 1)
        throw UsageError("backward root must be scalar");

    // Lazily allocated cotangents; empty vector means "no gradient reached".
    std::vector<std::vector<double>> grad(nodes_.size());
    auto ensure = [&](int id) -> std::vector<double>& {
        auto& g = grad[static_cast<size_t>(id)];
        if (g.empty()) g.assign(nodes_[static_cast<size_t>(id)].out.data.size(), 0.0);
        return g;
    };
    ensure(root.id)[0] = 1.0;

    for (int id = root.id; id >= 0; --id) {
        auto& g = grad[static_cast<size_t>(id)];
        if (g.empty()) continue;
        Node& n = nodes_[static_cast<size_t>(id)];
        switch (n.op) {
        case Op::Constant:
            break;
        case Op::Param: {
            Tensor& slot = n.ps->grad(n.pname);
            for (size_t i = 0; i < g.size(); ++i) slot.data[i] += g[i];
            break;
        }
        case Op::Conv2d: {
            const Tensor& x = nodes_[static_cast<size_t>(n.a)].out;
            const Tensor& w = nodes_[static_cast<size_t>(n.b)].out;
            auto& gx = ensure(n.a);
            auto& gw = ensure(n.b);
            auto& gb = ensure(n.c);
            int c_in = x.shape[0], h = x.shape[1], wd = x.shape[2];
            int c_out = w.shape[0], k = w.shape[2];
            int out_h = n.out.shape[1], out_w = n.out.shape[2];
            for (int co = 0; co < c_out; ++co) {
                for (int oy = 0; oy < out_h; ++oy) {
                    for (int ox = 0; ox < out_w; ++ox) {
                        double go = g[static_cast<size_t>((co * out_h + oy) * out_w + ox)];
                        if (go == 0.0) continue;
                        gb[static_cast<size_t>(co)] += go;
                        for (int ci = 0; ci < c_in; ++ci) {
                            for (int ky = 0; ky < k; ++ky) {
                                int iy = oy * n.stride + ky - n.pad_top;
                                if (iy < 0 || iy >= h) continue;
                                for (int kx = 0; kx < k; ++kx) {
                                    int ix = ox * n.stride + kx - n.pad_left;
                                    if (ix < 0 || ix >= wd) continue;
                                    size_t wi = static_cast<size_t>(((co * c_in + ci) * k + ky) * k + kx);
                                    size_t xi = static_cast<size_t>((ci * h + iy) * wd + ix);
                                    gw[wi] += go * x.data[xi];
                                    gx[xi] += go * w.data[wi];
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
        case Op::MatVec: {
            const Tensor& x = nodes_[static_cast<size_t>(n.a)].out;
            const Tensor& w = nodes_[static_cast<size_t>(n.b)].out;
            auto& gx = ensure(n.a);
            auto& gw = ensure(n.b);
            int d = x.shape[0], a = w.shape[1];
            for (int i = 0; i < d; ++i) {
                double xi = x[static_cast<size_t>(i)];
                double acc = 0.0;
                for (int j = 0; j < a; ++j) {
                    double gj = g[static_cast<size_t>(j)];
                    acc += gj * w.at2(i, j);
                    gw[static_cast<size_t>(i * a + j)] += gj * xi;
                }
                gx[static_cast<size_t>(i)] += acc;
            }
            break;
        }
        case Op::Add: {
            auto& ga = ensure(n.a);
            auto& gb = ensure(n.b);
            for (size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] += g[i];
            }
            break;
        }
        case Op::Mul: {
            const Tensor& a = nodes_[static_cast<size_t>(n.a)].out;
            const Tensor& b = nodes_[static_cast<size_t>(n.b)].out;
            auto& ga = ensure(n.a);
            auto& gb = ensure(n.b);
            for (size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * b.data[i];
                gb[i] += g[i] * a.data[i];
            }
            break;
        }
        case Op::Relu: {
            const Tensor& x = nodes_[static_cast<size_t>(n.a)].out;
            auto& gx = ensure(n.a);
            for (size_t i = 0; i < g.size(); ++i)
                if (x.data[i] > 0.0) gx[i] += g[i];
            break;
        }
        case Op::Sigmoid: {
            auto& gx = ensure(n.a);
            for (size_t i = 0; i < g.size(); ++i) {
                double s = n.out.data[i];
                gx[i] += g[i] * s * (1.0 - s);
            }
            break;
        }
        case Op::Tanh: {
            auto& gx = ensure(n.a);
            for (size_t i = 0; i < g.size(); ++i) {
                double t = n.out.data[i];
                gx[i] += g[i] * (1.0 - t * t);
            }
            break;
        }
        case Op::Softmax: {
            auto& gx = ensure(n.a);
            double dot = 0.0;
            for (size_t i = 0; i < g.size(); ++i) dot += g[i] * n.out.data[i];
            for (size_t i = 0; i < g.size(); ++i) gx[i] += n.out.data[i] * (g[i] - dot);
            break;
        }
        case Op::Slice: {
            auto& gx = ensure(n.a);
            for (size_t i = 0; i < g.size(); ++i) gx[static_cast<size_t>(n.offset) + i] += g[i];
            break;
        }
        case Op::Reshape: {
            auto& gx = ensure(n.a);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            break;
        }
        case Op::Pick: {
            auto& gx = ensure(n.a);
            gx[static_cast<size_t>(n.index)] += g[0];
            break;
        }
        case Op::Log: {
            const Tensor& x = nodes_[static_cast<size_t>(n.a)].out;
            auto& gx = ensure(n.a);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / x.data[i];
            break;
        }
        case Op::Sum: {
            auto& gx = ensure(n.a);
            for (auto& v : gx) v += g[0];
            break;
        }
        case Op::Scale: {
            auto& gx = ensure(n.a);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.k;
            break;
        }
        }
    }
}

LstmNodes lstm_step_graph(Graph& g, Value x, Value h_prev, Value c_prev, Value wx, Value wh,
                          Value bias, int state_size) {
    const int s = state_size;
    if (g.value(h_prev).numel() != s || g.value(c_prev).numel() != s)
        throw ConfigError("lstm state width does not match configured size " + std::to_string(s));
    if (g.value(wx).shape[1] != 4 * s || g.value(wh).shape[0] != s || g.value(wh).shape[1] != 4 * s ||
        g.value(bias).shape[0] != 4 * s)
        throw ConfigError("lstm parameter widths do not match state size " + std::to_string(s));
    Value z = g.add(g.add(g.matvec(x, wx), g.matvec(h_prev, wh)), bias);
    Value i = g.sigmoid(g.slice(z, 0, s));
    Value f = g.sigmoid(g.slice(z, s, s));
    Value o = g.sigmoid(g.slice(z, 2 * s, s));
    Value cand = g.tanh(g.slice(z, 3 * s, s));
    Value c_new = g.add(g.mul(f, c_prev), g.mul(i, cand));
    Value h_new = g.mul(o, g.tanh(c_new));
    return {h_new, h_new, c_new};
}

std::pair<Tensor, LstmState> lstm_step(const Tensor& x, const LstmState& state, const Tensor& wx,
                                       const Tensor& wh, const Tensor& bias) {
    if (wx.shape.size() != 2 || wx.shape[0] != x.shape[0])
        throw ConfigError("lstm input width " + shape_str(x.shape) + " does not match wx " +
                          shape_str(wx.shape));
    int s = state.size();
    Graph g;
    LstmNodes nodes = lstm_step_graph(g, g.constant(x), g.constant(state.hidden),
                                      g.constant(state.cell), g.constant(wx), g.constant(wh),
                                      g.constant(bias), s);
    return {g.value(nodes.output), {g.value(nodes.hidden), g.value(nodes.cell)}};
}

} // namespace gtn
