#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "trip/autodiff/tensor.hpp"
#include "trip/core/error.hpp"

namespace trip::ad {

template <class S>
class Tape;

// Lightweight handle into a tape. Copyable; the tape owns all storage.
template <class S>
struct Var {
    Tape<S>* tape = nullptr;
    uint32_t id = 0;

    const Tensor<S>& val() const { return tape->value(id); }
    const Tensor<S>& grad() const { return tape->grad(id); }
    const Shape& shape() const { return val().shape; }
    size_t numel() const { return val().numel(); }
};

// Reverse-mode tape. Nodes are appended in forward order and own their
// value, gradient buffer, and a backward closure that scatters the node's
// gradient into its inputs. backward() seeds a scalar root with 1 and
// walks the nodes in reverse creation order.
template <class S>
class Tape {
public:
    Var<S> leaf(Tensor<S> value, bool requires_grad = true) {
        return push(std::move(value), requires_grad, nullptr);
    }

    Var<S> constant(Tensor<S> value) { return push(std::move(value), false, nullptr); }

    Var<S> make(Tensor<S> value, bool requires_grad, std::function<void(Tape&, uint32_t)> bw) {
        return push(std::move(value), requires_grad, std::move(bw));
    }

    Tensor<S>& value(uint32_t id) { return nodes_[id].value; }
    const Tensor<S>& value(uint32_t id) const { return nodes_[id].value; }

    Tensor<S>& grad(uint32_t id) {
        Node& n = nodes_[id];
        if (n.grad.numel() == 0) n.grad = Tensor<S>(n.value.shape);
        return n.grad;
    }

    bool wants_grad(uint32_t id) const { return nodes_[id].requires_grad; }
    bool wants_grad(const Var<S>& v) const { return nodes_[v.id].requires_grad; }

    void backward(const Var<S>& root) {
        if (root.val().numel() != 1) throw internal_error("backward root must be scalar");
        grad(root.id)[0] = S(1);
        for (uint32_t i = root.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.requires_grad && n.bw) n.bw(*this, i);
        }
    }

    size_t size() const { return nodes_.size(); }

    void clear() { nodes_.clear(); }

private:
    struct Node {
        Tensor<S> value;
        Tensor<S> grad;
        bool requires_grad = true;
        std::function<void(Tape&, uint32_t)> bw;
    };

    Var<S> push(Tensor<S> value, bool requires_grad, std::function<void(Tape&, uint32_t)> bw) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        n.bw = std::move(bw);
        nodes_.push_back(std::move(n));
        return Var<S>{this, uint32_t(nodes_.size() - 1)};
    }

    std::vector<Node> nodes_;
};

}  // namespace trip::ad
