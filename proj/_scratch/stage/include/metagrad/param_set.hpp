#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "metagrad/tensor.hpp"

namespace metagrad {

/// Named, ordered collection of tensors: all trainable parameters of a model.
/// Order is stable across every operation, so gradient i always corresponds
/// to parameter i.
class ParamSet {
public:
    ParamSet() = default;

    void add(std::string name, Tensor t);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    const Tensor& at(const std::string& name) const;
    /// Replace the tensor of an existing entry (shape may change only via rebuild).
    void set(const std::string& name, Tensor t);

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::pair<std::string, Tensor>& entry(std::size_t i) const { return entries_[i]; }

    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    /// Names, order, and shapes all match.
    bool compatible_with(const ParamSet& other) const;
    void require_compatible(const ParamSet& other, const char* context) const;

    std::vector<Tensor> tensors() const;
    std::vector<std::string> names() const;
    std::int64_t total_elements() const;

    ParamSet map(const std::function<Tensor(const std::string&, const Tensor&)>& fn) const;
    static ParamSet zip(const ParamSet& a, const ParamSet& b, const char* context,
                        const std::function<Tensor(const std::string&, const Tensor&, const Tensor&)>& fn);

    ParamSet zeros_like() const;
    ParamSet detached() const;
    /// Deep value copy (fresh payloads, no provenance).
    ParamSet clone_values() const;
    ParamSet cast(DType dt) const;

    /// Concatenate two sets with disjoint names.
    static ParamSet concat(const ParamSet& a, const ParamSet& b);

    double l2_norm() const;
    bool all_finite() const;

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// d(loss)/d(param) for every entry of wrt, ordered like wrt. When
/// create_graph is true the results remain differentiable (second order).
ParamSet gradients(const Tensor& loss, const ParamSet& wrt, bool create_graph);

} // namespace metagrad
