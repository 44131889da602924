#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "gtn/errors.hpp"
#include "gtn/tensor.hpp"

namespace gtn {

// Named collection of tensors with a parallel gradient slot per entry.
// Iteration order is insertion order and therefore deterministic.
class ParameterSet {
public:
    void add(const std::string& name, Tensor init) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        index_[name] = names_.size();
        names_.push_back(name);
        grads_.push_back(Tensor::zeros(init.shape));
        values_.push_back(std::move(init));
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

    Tensor& value(const std::string& name) { return values_[at(name)]; }
    const Tensor& value(const std::string& name) const { return values_[at(name)]; }
    Tensor& grad(const std::string& name) { return grads_[at(name)]; }
    const Tensor& grad(const std::string& name) const { return grads_[at(name)]; }

    Tensor& value_at(size_t i) { return values_[i]; }
    const Tensor& value_at(size_t i) const { return values_[i]; }
    Tensor& grad_at(size_t i) { return grads_[i]; }
    const Tensor& grad_at(size_t i) const { return grads_[i]; }
    const std::string& name_at(size_t i) const { return names_[i]; }

    void zero_grads() {
        for (auto& g : grads_)
            for (auto& v : g.data) v = 0.0;
    }

    long scalar_count() const {
        long n = 0;
        for (const auto& v : values_) n += v.numel();
        return n;
    }

    // True when both sets have identical names, shapes and insertion order.
    bool same_layout(const ParameterSet& o) const {
        if (names_ != o.names_) return false;
        for (size_t i = 0; i < values_.size(); ++i)
            if (values_[i].shape != o.values_[i].shape) return false;
        return true;
    }

    // Copies values (not gradients) from src; layouts must match.
    void copy_values_from(const ParameterSet& src) {
        if (!same_layout(src)) throw UsageError("parameter set layout mismatch in copy");
        for (size_t i = 0; i < values_.size(); ++i) values_[i].data = src.values_[i].data;
    }

    bool values_all_finite() const {
        for (const auto& v : values_)
            if (!v.all_finite()) return false;
        return true;
    }
    bool grads_all_finite() const {
        for (const auto& g : grads_)
            if (!g.all_finite()) return false;
        return true;
    }

    double max_value_diff(const ParameterSet& o) const {
        if (!same_layout(o)) throw UsageError("parameter set layout mismatch in diff");
        double m = 0.0;
        for (size_t i = 0; i < values_.size(); ++i)
            m = std::max(m, values_[i].max_abs_diff(o.values_[i]));
        return m;
    }

private:
    size_t at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw UsageError("unknown parameter: " + name);
        return it->second;
    }

    std::vector<std::string> names_;
    std::unordered_map<std::string, size_t> index_;
    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;
};

// Hidden/cell pair for one LSTM layer.
struct LstmState {
    Tensor hidden;
    Tensor cell;

    static LstmState zeros(int size) {
        return {Tensor::zeros({size}), Tensor::zeros({size})};
    }
    int size() const { return hidden.shape.empty() ? 0 : hidden.shape[0]; }
};

} // namespace gtn
