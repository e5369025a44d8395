#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "capnet/params.hpp"
#include "capnet/tensor.hpp"

namespace capnet::ad {

class Tape;

// Lightweight handle to a tape node.
struct Value {
    Tape* tape = nullptr;
    std::uint32_t id = 0;
    const Tensor& val() const;
    bool valid() const { return tape != nullptr; }
};

// Reverse-mode arena. Creation order is topological order, so the backward
// sweep is a single reverse pass. One tape per sample/loss evaluation.
class Tape {
public:
    Value constant(Tensor v) { return make(std::move(v), false); }
    Value leaf(Tensor v, bool needs_grad) { return make(std::move(v), needs_grad); }

    // Copies the parameter value in; after backward() the leaf gradient is
    // flushed into p.grad (accumulating).
    Value param(Parameter& p);

    void backward(Value loss);

    Value make(Tensor v, bool needs_grad);
    void set_back(Value v, std::function<void(Tape&)> back);

    const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
    bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
    bool has_grad(std::uint32_t id) const { return !nodes_[id].grad.empty(); }
    // Gradient buffer, zero-allocated on first touch.
    Tensor& grad(std::uint32_t id);
    // Gradient of a value after backward(); zeros if it never received one.
    Tensor grad_of(Value v) const;

    void clear();
    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        std::function<void(Tape&)> back;
    };
    std::vector<Node> nodes_;
    std::vector<std::pair<std::uint32_t, Parameter*>> bound_;
};

// ---- primitive ops (each registers its analytic backward) ----

Value matmul(Value a, Value b);
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);  // elementwise
Value scale(Value a, double c);
Value mul_scalar(Value a, Value s);  // s has a single element
Value one_minus(Value a);
Value concat(const std::vector<Value>& parts);  // rank-1 pieces
Value slice(Value a, std::size_t begin, std::size_t len);
Value elementwise(Value x, Elt mode);
Value clamp(Value x, double lo, double hi);
Value softmax(Value z);  // rank-1
Value cross_entropy_logits(Value logits, std::size_t target);
Value sum(Value a);
Value mean(Value a);
Value dot(Value a, Value b);
Value add_rows(Value m, Value v);  // broadcast v over the rows of m
Value embed_row(Value table, std::size_t row);
Value reshape(Value a, std::vector<std::size_t> shape);
Value transpose(Value a);

inline Value sigmoid(Value x) { return elementwise(x, Elt::sigmoid); }
inline Value tanh_(Value x) { return elementwise(x, Elt::tanh); }
inline Value relu(Value x) { return elementwise(x, Elt::relu); }
inline Value exp_(Value x) { return elementwise(x, Elt::exp); }
inline Value log_(Value x) { return elementwise(x, Elt::log); }

inline Value operator+(Value a, Value b) { return add(a, b); }
inline Value operator-(Value a, Value b) { return sub(a, b); }
inline Value operator*(Value a, Value b) { return mul(a, b); }

// ---- spatial ops ----

// x: (c,h,w); kernels: (o,c,kh,kw); bias: (o). Valid cross-correlation over
// the zero-padded input.
Value conv2d(Value x, Value kernels, Value bias, int stride_h, int stride_w, int pad_h,
             int pad_w);
Value maxpool2d(Value x, int win_h, int win_w, int stride_h, int stride_w);
// PyTorch-style adaptive windows; every input cell belongs to >=1 window.
Value adaptive_avg_pool(Value x, std::size_t out_h, std::size_t out_w);

}  // namespace capnet::ad
