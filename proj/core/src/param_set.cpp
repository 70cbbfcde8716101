#include "metagrad/param_set.hpp"

#include <cmath>
#include <cstring>

#include "metagrad/autodiff.hpp"

namespace metagrad {

void ParamSet::add(std::string name, Tensor t) {
    if (index_.count(name)) throw ShapeError("ParamSet: duplicate name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(t));
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ShapeError("ParamSet: no entry named '" + name + "'");
    return entries_[it->second].second;
}

void ParamSet::set(const std::string& name, Tensor t) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ShapeError("ParamSet: no entry named '" + name + "'");
    if (t.shape() != entries_[it->second].second.shape())
        throw ShapeError("ParamSet: set('" + name + "') changes shape " +
                         shape_str(entries_[it->second].second.shape()) + " -> " +
                         shape_str(t.shape()));
    entries_[it->second].second = std::move(t);
}

bool ParamSet::compatible_with(const ParamSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].first != other.entries_[i].first) return false;
        if (entries_[i].second.shape() != other.entries_[i].second.shape()) return false;
    }
    return true;
}

void ParamSet::require_compatible(const ParamSet& other, const char* context) const {
    if (!compatible_with(other))
        throw ShapeError(std::string(context) + ": structurally incompatible ParamSets");
}

std::vector<Tensor> ParamSet::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& [_, t] : entries_) out.push_back(t);
    return out;
}

std::vector<std::string> ParamSet::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [n, _] : entries_) out.push_back(n);
    return out;
}

std::int64_t ParamSet::total_elements() const {
    std::int64_t n = 0;
    for (const auto& [_, t] : entries_) n += t.numel();
    return n;
}

ParamSet ParamSet::map(const std::function<Tensor(const std::string&, const Tensor&)>& fn) const {
    ParamSet out;
    for (const auto& [n, t] : entries_) out.add(n, fn(n, t));
    return out;
}

ParamSet ParamSet::zip(const ParamSet& a, const ParamSet& b, const char* context,
                       const std::function<Tensor(const std::string&, const Tensor&, const Tensor&)>& fn) {
    a.require_compatible(b, context);
    ParamSet out;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& [n, t] = a.entry(i);
        out.add(n, fn(n, t, b.entry(i).second));
    }
    return out;
}

ParamSet ParamSet::zeros_like() const {
    return map([](const std::string&, const Tensor& t) { return Tensor::zeros(t.shape(), t.dtype()); });
}

ParamSet ParamSet::detached() const {
    return map([](const std::string&, const Tensor& t) { return t.detached(); });
}

ParamSet ParamSet::clone_values() const {
    return map([](const std::string&, const Tensor& t) {
        Tensor c = Tensor::uninitialized(t.shape(), t.dtype());
        std::memcpy(c.impl()->data->data(), t.impl()->data->data(), t.impl()->data->size());
        return c;
    });
}

ParamSet ParamSet::cast(DType dt) const {
    return map([dt](const std::string&, const Tensor& t) { return t.cast(dt); });
}

ParamSet ParamSet::concat(const ParamSet& a, const ParamSet& b) {
    ParamSet out = a;
    for (const auto& [n, t] : b) out.add(n, t);
    return out;
}

double ParamSet::l2_norm() const {
    double acc = 0.0;
    for (const auto& [_, t] : entries_)
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            double v = t.at_flat(i);
            acc += v * v;
        }
    return std::sqrt(acc);
}

bool ParamSet::all_finite() const {
    for (const auto& [_, t] : entries_)
        if (!t.all_finite()) return false;
    return true;
}

ParamSet gradients(const Tensor& loss, const ParamSet& wrt, bool create_graph) {
    std::vector<Tensor> grads = autodiff::grad(loss, wrt.tensors(), create_graph);
    ParamSet out;
    for (std::size_t i = 0; i < wrt.size(); ++i) out.add(wrt.entry(i).first, grads[i]);
    return out;
}

} // namespace metagrad
