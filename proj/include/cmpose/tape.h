#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmpose/tensor.h"

namespace cmpose {

// Handle to a node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Ops record their backward rule at execution time;
// backward() replays the records in reverse order, accumulating adjoints.
// A tape lives for one forward/backward episode; trainable parameters are
// external Tensors bound via param(), whose .grad fields accumulate across
// backward() calls until the caller zeroes them.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // --- leaves ---
    Var constant(Tensor value);             // never differentiated
    Var leaf(Tensor value);                 // honors value.requires_grad; grad readable via grad_of
    Var param(Tensor& external);            // external trainable tensor; deduplicated per tape

    // --- elementwise / scalar ---
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var add_rowvec(Var a, Var v);           // a: (m,n), v: n entries broadcast over rows
    Var gelu(Var a);

    // --- linear algebra ---
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var reshape(Var a, Shape s);
    Var permute3(Var a, int p0, int p1, int p2);

    // --- structure ---
    Var concat_rows(std::span<const Var> parts);
    Var concat_cols(Var a, Var b);
    Var slice_rows(Var a, int r0, int r1);
    Var slice_cols(Var a, int c0, int c1);
    Var gather_rows(Var a, std::vector<int> idx);

    // --- normalization / attention ---
    Var softmax_rows(Var a);
    Var layer_norm_rows(Var x, Var gain, Var bias);  // epsilon fixed at 1e-5
    // fused multi-head self-attention over independent row segments:
    // qkv is (R, 3*D) with R divisible by seg_len and D by heads; each
    // segment of seg_len rows attends only within itself.
    Var mha_segments(Var qkv, int seg_len, int heads, double scale);

    // --- reductions ---
    Var sum_all(Var a);
    Var mean_all(Var a);
    Var div_by_scalar(Var a, Var s);        // s: 1-element tensor

    // --- convenience compositions ---
    Var linear(Var x, Var w, Var b) { return add_rowvec(matmul(x, w), b); }
    Var mse(Var a, Var b) {
        Var d = sub(a, b);
        return mean_all(mul(d, d));
    }

    void backward(Var loss);

    const Tensor& value(Var v) const { return node(v.id).val; }
    // adjoint of any node, valid after backward()
    std::vector<double> grad_of(Var v) const;
    size_t num_ops() const { return recs_.size(); }
    bool grad_enabled() const { return grad_enabled_; }

    static constexpr double kLayerNormEps = 1e-5;

    // Test fixture: multiplies the named op's pulled gradients by `factor`
    // during backward. Used as a negative control for gradient checks.
    static void debug_set_backward_corruption(const std::string& op_name, double factor);
    static void debug_clear_backward_corruption();

private:
    struct Node {
        Tensor val;
        std::vector<double> grad;
        bool needs_grad = false;
        Tensor* external = nullptr;
    };
    struct Rec {
        const char* op;
        int out;
        std::function<void(Tape&)> pull;
    };

    Node& node(int id) {
        if (id < 0 || id >= static_cast<int>(nodes_.size()))
            throw ContractError("invalid Var");
        return nodes_[static_cast<size_t>(id)];
    }
    const Node& node(int id) const {
        if (id < 0 || id >= static_cast<int>(nodes_.size()))
            throw ContractError("invalid Var");
        return nodes_[static_cast<size_t>(id)];
    }

    bool needs(Var v) const { return node(v.id).needs_grad; }
    Var push(Tensor val, bool needs_grad);
    void record(const char* op, Var out, std::function<void(Tape&)> pull);
    // grad buffer of a node, allocated and zeroed on first access
    double* grad_buf(int id);
    const std::vector<double>& grad_ref(int id);

    // deque: references from value() stay valid as later ops are recorded
    std::deque<Node> nodes_;
    std::vector<Rec> recs_;
    std::unordered_map<const Tensor*, int> param_ids_;
    bool grad_enabled_;
};

}  // namespace cmpose
