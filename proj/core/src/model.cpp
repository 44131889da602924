#include "gtn/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace gtn {

void GtnConfig::validate() const {
    if (levels < 1) throw ConfigError("levels must be >= 1");
    if (conv_layers < 1) throw ConfigError("conv_layers must be >= 1");
    if (channels < 1) throw ConfigError("channels must be >= 1");
    if (kernel < 1) throw ConfigError("kernel must be >= 1");
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (lstm_size < 1) throw ConfigError("lstm_size must be >= 1");
    if (concat_size < 1) throw ConfigError("concat_size must be >= 1");
    if (input_side < 1) throw ConfigError("input_side must be >= 1");
    if (action_space_sizes.empty()) throw ConfigError("action_space_sizes must be nonempty");
    std::set<int> distinct;
    for (int a : action_space_sizes) {
        if (a < 1) throw ConfigError("action space sizes must be positive");
        if (!distinct.insert(a).second)
            throw ConfigError("duplicate action space size " + std::to_string(a));
    }
    if (entropy_coeff < 0.0) throw ConfigError("entropy_coeff must be >= 0");
    level_geometries(*this); // validates the spatial chain
}

std::vector<LevelGeometry> level_geometries(const GtnConfig& cfg) {
    std::vector<LevelGeometry> out;
    int side = cfg.input_side;
    int ch = 1;
    for (int m = 1; m <= cfg.levels; ++m) {
        LevelGeometry g;
        g.input_side = side;
        g.input_channels = ch;
        int s = side;
        for (int n = 1; n <= cfg.conv_layers; ++n) {
            s = conv_out_side(s, cfg.stride);
            if (s < 1)
                throw ConfigError("conv chain collapses below 1x1 at level " + std::to_string(m) +
                                  " layer " + std::to_string(n));
            g.conv_sides.push_back(s);
        }
        g.flatten_width = g.conv_sides.back() * g.conv_sides.back() * cfg.channels;
        out.push_back(std::move(g));
        // next level consumes this level's first conv output
        side = out.back().conv_sides.front();
        ch = cfg.channels;
    }
    return out;
}

std::vector<ParamSpec> expected_parameter_shapes(const GtnConfig& cfg) {
    std::vector<ParamSpec> specs;
    auto geoms = level_geometries(cfg);
    for (int m = 1; m <= cfg.levels; ++m) {
        const LevelGeometry& g = geoms[static_cast<size_t>(m - 1)];
        int in_ch = g.input_channels;
        std::string lvl = "level" + std::to_string(m);
        for (int n = 1; n <= cfg.conv_layers; ++n) {
            std::string base = lvl + ".conv" + std::to_string(n);
            specs.push_back({base + ".weight", {cfg.channels, in_ch, cfg.kernel, cfg.kernel},
                             ParamKind::ConvWeight});
            specs.push_back({base + ".bias", {cfg.channels}, ParamKind::Bias});
            in_ch = cfg.channels;
        }
        specs.push_back({lvl + ".lstm.wx", {g.flatten_width, 4 * cfg.lstm_size}, ParamKind::LstmWx});
        specs.push_back({lvl + ".lstm.wh", {cfg.lstm_size, 4 * cfg.lstm_size}, ParamKind::LstmWh});
        specs.push_back({lvl + ".lstm.bias", {4 * cfg.lstm_size}, ParamKind::LstmBias});
    }
    for (int m = 1; m <= cfg.levels; ++m)
        specs.push_back({"concat.level" + std::to_string(m), {cfg.lstm_size, cfg.concat_size},
                         ParamKind::ConcatProj});
    specs.push_back({"concat.bias", {cfg.concat_size}, ParamKind::Bias});
    std::vector<int> sizes = cfg.action_space_sizes;
    std::sort(sizes.begin(), sizes.end());
    for (int a : sizes) {
        std::string base = "policy" + std::to_string(a);
        specs.push_back({base + ".weight", {cfg.concat_size, a}, ParamKind::HeadWeight});
        specs.push_back({base + ".bias", {a}, ParamKind::Bias});
    }
    specs.push_back({"value.weight", {cfg.concat_size, 1}, ParamKind::HeadWeight});
    specs.push_back({"value.bias", {1}, ParamKind::Bias});
    return specs;
}

namespace {

int fan_in_of(const ParamSpec& spec) {
    switch (spec.kind) {
    case ParamKind::ConvWeight: return spec.shape[1] * spec.shape[2] * spec.shape[3];
    case ParamKind::LstmWx:
    case ParamKind::LstmWh:
    case ParamKind::ConcatProj:
    case ParamKind::HeadWeight: return spec.shape[0];
    default: return 1;
    }
}

Tensor init_tensor(const ParamSpec& spec, int lstm_size, Rng& rng) {
    Tensor t = Tensor::zeros(spec.shape);
    switch (spec.kind) {
    case ParamKind::Bias:
        break;
    case ParamKind::LstmBias: {
        // forget-gate block starts open
        for (int i = lstm_size; i < 2 * lstm_size; ++i) t[static_cast<size_t>(i)] = 1.0;
        break;
    }
    default: {
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in_of(spec)));
        for (auto& v : t.data) v = rng.uniform(-bound, bound);
        break;
    }
    }
    return t;
}

} // namespace

GtnNetwork::GtnNetwork(GtnConfig cfg, uint64_t seed) {
    cfg.validate();
    cfg_ = std::move(cfg);
    geom_ = level_geometries(cfg_);
    Rng rng(seed);
    for (const auto& spec : expected_parameter_shapes(cfg_))
        params_.add(spec.name, init_tensor(spec, cfg_.lstm_size, rng));
    recurrent_.assign(static_cast<size_t>(cfg_.levels), LstmState::zeros(cfg_.lstm_size));
    noise_.assign(static_cast<size_t>(cfg_.levels), nullptr);
}

GtnNetwork GtnNetwork::from_parts(GtnConfig cfg, ParameterSet params) {
    cfg.validate();
    GtnNetwork net;
    net.cfg_ = std::move(cfg);
    net.geom_ = level_geometries(net.cfg_);
    auto specs = expected_parameter_shapes(net.cfg_);
    if (specs.size() != params.size())
        throw ConfigError("parameter set does not match topology: expected " +
                          std::to_string(specs.size()) + " tensors, got " +
                          std::to_string(params.size()));
    for (const auto& spec : specs) {
        if (!params.has(spec.name)) throw ConfigError("missing parameter " + spec.name);
        if (params.value(spec.name).shape != spec.shape)
            throw ConfigError("parameter " + spec.name + " has shape " +
                              shape_str(params.value(spec.name).shape) + ", expected " +
                              shape_str(spec.shape));
    }
    net.params_ = std::move(params);
    net.recurrent_.assign(static_cast<size_t>(net.cfg_.levels),
                          LstmState::zeros(net.cfg_.lstm_size));
    net.noise_.assign(static_cast<size_t>(net.cfg_.levels), nullptr);
    return net;
}

void GtnNetwork::reset_recurrent() {
    recurrent_.assign(static_cast<size_t>(cfg_.levels), LstmState::zeros(cfg_.lstm_size));
}

void GtnNetwork::set_level_noise(int level, bool enabled, Rng& rng) {
    if (!enabled) {
        set_level_noise(level, std::function<double()>());
        return;
    }
    set_level_noise(level, [&rng]() { return rng.normal(); });
}

void GtnNetwork::set_level_noise(int level, std::function<double()> sampler) {
    if (level < 1 || level > cfg_.levels)
        throw UsageError("noise level " + std::to_string(level) + " out of range 1.." +
                         std::to_string(cfg_.levels));
    noise_[static_cast<size_t>(level - 1)] = std::move(sampler);
}

GtnNetwork::GraphForward GtnNetwork::forward_graph(
    Graph& g, Value obs, const std::vector<std::pair<Value, Value>>& rec_in) {
    if (rec_in.size() != static_cast<size_t>(cfg_.levels))
        throw UsageError("expected " + std::to_string(cfg_.levels) + " recurrent states, got " +
                         std::to_string(rec_in.size()));
    const Tensor& obs_t = g.value(obs);
    if (obs_t.shape != std::vector<int>{1, cfg_.input_side, cfg_.input_side})
        throw UsageError("observation shape " + shape_str(obs_t.shape) + " does not match config [1," +
                         std::to_string(cfg_.input_side) + "," + std::to_string(cfg_.input_side) + "]");

    GraphForward out;
    Value level_input = obs;
    Value concat_acc;
    for (int m = 1; m <= cfg_.levels; ++m) {
        std::string lvl = "level" + std::to_string(m);
        Value x = level_input;
        Value tap;
        for (int n = 1; n <= cfg_.conv_layers; ++n) {
            std::string base = lvl + ".conv" + std::to_string(n);
            x = g.relu(g.conv2d(x, g.param(params_, base + ".weight"),
                                g.param(params_, base + ".bias"), cfg_.stride));
            if (n == 1) tap = x;
        }
        const LevelGeometry& geom = geom_[static_cast<size_t>(m - 1)];
        Value flat = g.reshape(x, {geom.flatten_width});
        LstmNodes lstm = lstm_step_graph(
            g, flat, rec_in[static_cast<size_t>(m - 1)].first,
            rec_in[static_cast<size_t>(m - 1)].second, g.param(params_, lvl + ".lstm.wx"),
            g.param(params_, lvl + ".lstm.wh"), g.param(params_, lvl + ".lstm.bias"),
            cfg_.lstm_size);
        out.recurrent.emplace_back(lstm.hidden, lstm.cell);
        out.activations.push_back(lstm.output);

        Value activation = lstm.output;
        const auto& sampler = noise_[static_cast<size_t>(m - 1)];
        if (sampler) {
            Tensor noise = Tensor::zeros({cfg_.lstm_size});
            for (auto& v : noise.data) v = sampler();
            activation = g.add(activation, g.constant(std::move(noise)));
        }
        Value proj = g.matvec(activation, g.param(params_, "concat.level" + std::to_string(m)));
        concat_acc = (m == 1) ? proj : g.add(concat_acc, proj);
        level_input = tap;
    }

    Value merged = g.relu(g.add(concat_acc, g.param(params_, "concat.bias")));
    for (int a : cfg_.action_space_sizes) {
        std::string base = "policy" + std::to_string(a);
        Value logits = g.linear(merged, g.param(params_, base + ".weight"),
                                g.param(params_, base + ".bias"));
        out.policies[a] = g.softmax(logits);
    }
    out.value = g.pick(
        g.linear(merged, g.param(params_, "value.weight"), g.param(params_, "value.bias")), 0);
    return out;
}

ForwardResult GtnNetwork::forward(const Tensor& obs, const std::vector<LstmState>& rec_in) {
    Graph g;
    std::vector<std::pair<Value, Value>> rec_nodes;
    rec_nodes.reserve(rec_in.size());
    for (const auto& st : rec_in)
        rec_nodes.emplace_back(g.constant(st.hidden), g.constant(st.cell));
    GraphForward gf = forward_graph(g, g.constant(obs), rec_nodes);

    ForwardResult res;
    for (const auto& [size, node] : gf.policies) res.policies[size] = g.value(node);
    res.value = g.value(gf.value)[0];
    for (size_t m = 0; m < gf.recurrent.size(); ++m)
        res.new_recurrent.push_back({g.value(gf.recurrent[m].first), g.value(gf.recurrent[m].second)});
    for (const auto& act : gf.activations) res.level_activations.push_back(g.value(act));
    return res;
}

ForwardResult GtnNetwork::step(const Tensor& obs) {
    ForwardResult res = forward(obs, recurrent_);
    recurrent_ = res.new_recurrent;
    return res;
}

void copy_parameters(const GtnNetwork& src, GtnNetwork& dst) {
    if (!(src.config() == dst.config()))
        throw UsageError("copy_parameters requires identical configs");
    dst.params().copy_values_from(src.params());
}

// ---- Checkpoint I/O ---------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'G', 'T', 'N', '1'};
constexpr uint16_t kVersion = 1;

void put_u16(std::ostream& os, uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
}
void put_u32(std::ostream& os, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}
void put_u64(std::ostream& os, uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}
uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    if (!is) throw IoError("checkpoint truncated while reading u16");
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}
uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("checkpoint truncated while reading u32");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}
uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw IoError("checkpoint truncated while reading u64");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

std::string sizes_to_text(const std::vector<int>& sizes) {
    std::string s;
    for (size_t i = 0; i < sizes.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(sizes[i]);
    }
    return s;
}

std::vector<int> sizes_from_text(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

std::string config_block(const GtnConfig& c) {
    std::ostringstream os;
    os << "levels=" << c.levels << "\n"
       << "conv_layers=" << c.conv_layers << "\n"
       << "channels=" << c.channels << "\n"
       << "kernel=" << c.kernel << "\n"
       << "stride=" << c.stride << "\n"
       << "lstm_size=" << c.lstm_size << "\n"
       << "concat_size=" << c.concat_size << "\n"
       << "input_side=" << c.input_side << "\n"
       << "action_space_sizes=" << sizes_to_text(c.action_space_sizes) << "\n";
    os.precision(17);
    os << "entropy_coeff=" << c.entropy_coeff << "\n";
    return os.str();
}

GtnConfig config_from_block(const std::string& text) {
    GtnConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("malformed config line in checkpoint: " + line);
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        if (key == "levels") c.levels = std::stoi(val);
        else if (key == "conv_layers") c.conv_layers = std::stoi(val);
        else if (key == "channels") c.channels = std::stoi(val);
        else if (key == "kernel") c.kernel = std::stoi(val);
        else if (key == "stride") c.stride = std::stoi(val);
        else if (key == "lstm_size") c.lstm_size = std::stoi(val);
        else if (key == "concat_size") c.concat_size = std::stoi(val);
        else if (key == "input_side") c.input_side = std::stoi(val);
        else if (key == "action_space_sizes") c.action_space_sizes = sizes_from_text(val);
        else if (key == "entropy_coeff") c.entropy_coeff = std::stod(val);
        else throw IoError("unknown config key in checkpoint: " + key);
    }
    return c;
}

} // namespace

void save_checkpoint(const GtnNetwork& net, const std::string& path, bool use_f32) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 4);
    put_u16(os, kVersion);
    std::string cfg = config_block(net.config());
    put_u32(os, static_cast<uint32_t>(cfg.size()));
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

    const ParameterSet& ps = net.params();
    for (size_t i = 0; i < ps.size(); ++i) {
        const std::string& name = ps.name_at(i);
        const Tensor& t = ps.value_at(i);
        put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        os.put(use_f32 ? 4 : 8);
        put_u32(os, static_cast<uint32_t>(t.shape.size()));
        for (int d : t.shape) put_u32(os, static_cast<uint32_t>(d));
        if (use_f32) {
            for (double v : t.data) put_u32(os, std::bit_cast<uint32_t>(static_cast<float>(v)));
        } else {
            for (double v : t.data) put_u64(os, std::bit_cast<uint64_t>(v));
        }
    }
    if (!os) throw IoError("write failure on checkpoint: " + path);
    os.close();

    nlohmann::json j;
    const GtnConfig& c = net.config();
    j["levels"] = c.levels;
    j["conv_layers"] = c.conv_layers;
    j["channels"] = c.channels;
    j["kernel"] = c.kernel;
    j["stride"] = c.stride;
    j["lstm_size"] = c.lstm_size;
    j["concat_size"] = c.concat_size;
    j["input_side"] = c.input_side;
    j["action_space_sizes"] = c.action_space_sizes;
    j["entropy_coeff"] = c.entropy_coeff;
    j["format_version"] = kVersion;
    j["dtype"] = use_f32 ? "f32" : "f64";
    std::ofstream js(path + ".json", std::ios::trunc);
    if (!js) throw IoError("cannot open checkpoint sidecar for writing: " + path + ".json");
    js << j.dump(2) << "\n";
}

GtnNetwork load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("bad checkpoint magic (expected GTN1): " + path);
    uint16_t version = get_u16(is);
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    uint32_t cfg_len = get_u32(is);
    std::string cfg_text(cfg_len, '\0');
    is.read(cfg_text.data(), cfg_len);
    if (!is) throw IoError("checkpoint truncated in config block");
    GtnConfig cfg = config_from_block(cfg_text);
    cfg.validate();

    ParameterSet ps;
    while (true) {
        int probe = is.peek();
        if (probe == std::char_traits<char>::eof()) break;
        uint32_t name_len = get_u32(is);
        if (name_len > 4096) throw IoError("implausible parameter name length in checkpoint");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw IoError("checkpoint truncated in tensor name");
        int dtype = is.get();
        if (dtype != 4 && dtype != 8) throw IoError("bad dtype tag in checkpoint for " + name);
        uint32_t rank = get_u32(is);
        if (rank > 8) throw IoError("implausible tensor rank in checkpoint for " + name);
        std::vector<int> shape;
        for (uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<int>(get_u32(is)));
        long n = Tensor::numel_of(shape);
        Tensor t = Tensor::zeros(shape);
        if (dtype == 4) {
            for (long i = 0; i < n; ++i)
                t.data[static_cast<size_t>(i)] = std::bit_cast<float>(get_u32(is));
        } else {
            for (long i = 0; i < n; ++i)
                t.data[static_cast<size_t>(i)] = std::bit_cast<double>(get_u64(is));
        }
        ps.add(name, std::move(t));
    }

    // Structural audit: the file must enumerate exactly the topology's tensors.
    auto specs = expected_parameter_shapes(cfg);
    if (specs.size() != ps.size())
        throw IoError("checkpoint parameter audit failed: expected " +
                      std::to_string(specs.size()) + " tensors, found " + std::to_string(ps.size()));
    for (const auto& spec : specs) {
        if (!ps.has(spec.name)) throw IoError("checkpoint missing parameter " + spec.name);
        if (ps.value(spec.name).shape != spec.shape)
            throw IoError("checkpoint parameter " + spec.name + " has shape " +
                          shape_str(ps.value(spec.name).shape) + ", expected " +
                          shape_str(spec.shape));
    }
    return GtnNetwork::from_parts(std::move(cfg), std::move(ps));
}

} // namespace gtn
