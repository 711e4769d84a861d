#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "trip/autodiff/tensor.hpp"
#include "trip/core/error.hpp"

namespace trip::model {

// Named parameter tensors in a stable creation order, each assigned to a
// layer group. Group order is the freezing order: "freeze the first n
// groups" walks groups as they were registered.
class ParamStore {
public:
    struct Entry {
        std::string name;
        std::string group;
        ad::Tensor<float> value;
    };

    ad::Tensor<float>& add(const std::string& group, const std::string& name,
                           ad::Tensor<float> value) {
        if (index_.count(name)) throw internal_error("duplicate parameter: " + name);
        if (!group_index_.count(group)) {
            group_index_[group] = groups_.size();
            groups_.push_back(group);
        }
        index_[name] = entries_.size();
        entries_.push_back(Entry{name, group, std::move(value)});
        return entries_.back().value;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    ad::Tensor<float>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw internal_error("unknown parameter: " + name);
        return entries_[it->second].value;
    }

    const ad::Tensor<float>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw internal_error("unknown parameter: " + name);
        return entries_[it->second].value;
    }

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }

    const std::vector<std::string>& groups() const { return groups_; }

    std::vector<std::string> names_in_group(const std::string& group) const {
        std::vector<std::string> out;
        for (const auto& e : entries_)
            if (e.group == group) out.push_back(e.name);
        return out;
    }

    size_t total_elements() const {
        size_t n = 0;
        for (const auto& e : entries_) n += e.value.numel();
        return n;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
    std::vector<std::string> groups_;
    std::unordered_map<std::string, size_t> group_index_;
};

}  // namespace trip::model
