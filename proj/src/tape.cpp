#include "cmpose/tape.h"

#include <algorithm>
#include <cmath>
#include <memory>

#include "cmpose/kernels.h"

namespace cmpose {

namespace {
std::string g_corrupt_op;
double g_corrupt_factor = 1.0;
}  // namespace

void Tape::debug_set_backward_corruption(const std::string& op_name, double factor) {
    g_corrupt_op = op_name;
    g_corrupt_factor = factor;
}
void Tape::debug_clear_backward_corruption() {
    g_corrupt_op.clear();
    g_corrupt_factor = 1.0;
}

Var Tape::push(Tensor val, bool needs_grad) {
    Node n;
    n.val = std::move(val);
    n.needs_grad = needs_grad && grad_enabled_;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::record(const char* op, Var out, std::function<void(Tape&)> pull) {
    if (!grad_enabled_ || !node(out.id).needs_grad) return;
    recs_.push_back(Rec{op, out.id, std::move(pull)});
}

double* Tape::grad_buf(int id) {
    Node& n = node(id);
    if (n.grad.size() != n.val.data.size()) n.grad.assign(n.val.data.size(), 0.0);
    return n.grad.data();
}

const std::vector<double>& Tape::grad_ref(int id) {
    grad_buf(id);
    return node(id).grad;
}

std::vector<double> Tape::grad_of(Var v) const {
    const Node& n = node(v.id);
    if (n.grad.size() == n.val.data.size()) return n.grad;
    return std::vector<double>(n.val.data.size(), 0.0);
}

// --- leaves ---

Var Tape::constant(Tensor value) { return push(std::move(value), false); }

Var Tape::leaf(Tensor value) {
    const bool rg = value.requires_grad;
    return push(std::move(value), rg);
}

Var Tape::param(Tensor& external) {
    auto it = param_ids_.find(&external);
    if (it != param_ids_.end()) return Var{it->second};
    Tensor copy;
    copy.shape = external.shape;
    copy.data = external.data;
    Var v = push(std::move(copy), external.requires_grad);
    node(v.id).external = &external;
    param_ids_.emplace(&external, v.id);
    return v;
}

// --- elementwise ---

Var Tape::add(Var a, Var b) {
    const Tensor& ta = node(a.id).val;
    const Tensor& tb = node(b.id).val;
    if (!same_shape(ta, tb))
        throw ShapeError("add: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    Tensor out(ta.shape);
    kernels::add(ta.data.data(), tb.data.data(), out.data.data(), out.numel());
    Var o = push(std::move(out), needs(a) || needs(b));
    record("add", o, [a, b, o](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        if (t.needs(a)) kernels::axpy(1.0, g.data(), t.grad_buf(a.id), g.size());
        if (t.needs(b)) kernels::axpy(1.0, g.data(), t.grad_buf(b.id), g.size());
    });
    return o;
}

Var Tape::sub(Var a, Var b) {
    const Tensor& ta = node(a.id).val;
    const Tensor& tb = node(b.id).val;
    if (!same_shape(ta, tb))
        throw ShapeError("sub: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    Tensor out(ta.shape);
    kernels::sub(ta.data.data(), tb.data.data(), out.data.data(), out.numel());
    Var o = push(std::move(out), needs(a) || needs(b));
    record("sub", o, [a, b, o](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        if (t.needs(a)) kernels::axpy(1.0, g.data(), t.grad_buf(a.id), g.size());
        if (t.needs(b)) kernels::axpy(-1.0, g.data(), t.grad_buf(b.id), g.size());
    });
    return o;
}

Var Tape::mul(Var a, Var b) {
    const Tensor& ta = node(a.id).val;
    const Tensor& tb = node(b.id).val;
    if (!same_shape(ta, tb))
        throw ShapeError("mul: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    Tensor out(ta.shape);
    kernels::mul(ta.data.data(), tb.data.data(), out.data.data(), out.numel());
    Var o = push(std::move(out), needs(a) || needs(b));
    record("mul", o, [a, b, o](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        const std::int64_t n = static_cast<std::int64_t>(g.size());
        if (t.needs(a)) {
            const double* vb = t.node(b.id).val.data.data();
            double* da = t.grad_buf(a.id);
            for (std::int64_t i = 0; i < n; ++i) da[i] += g[i] * vb[i];
        }
        if (t.needs(b)) {
            const double* va = t.node(a.id).val.data.data();
            double* db = t.grad_buf(b.id);
            for (std::int64_t i = 0; i < n; ++i) db[i] += g[i] * va[i];
        }
    });
    return o;
}

Var Tape::scale(Var a, double c) {
    const Tensor& ta = node(a.id).val;
    Tensor out(ta.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] * c;
    Var o = push(std::move(out), needs(a));
    record("scale", o, [a, o, c](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        kernels::axpy(c, g.data(), t.grad_buf(a.id), g.size());
    });
    return o;
}

Var Tape::add_scalar(Var a, double c) {
    const Tensor& ta = node(a.id).val;
    Tensor out(ta.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] + c;
    Var o = push(std::move(out), needs(a));
    record("add_scalar", o, [a, o](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        kernels::axpy(1.0, g.data(), t.grad_buf(a.id), g.size());
    });
    return o;
}

Var Tape::add_rowvec(Var a, Var v) {
    const Tensor& ta = node(a.id).val;
    const Tensor& tv = node(v.id).val;
    const int m = ta.rows(), n = ta.cols();
    if (tv.numel() != n)
        throw ShapeError("add_rowvec: " + shape_str(ta.shape) + " vs " + shape_str(tv.shape));
    Tensor out(ta.shape);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out.data[static_cast<size_t>(i) * n + j] =
                ta.data[static_cast<size_t>(i) * n + j] + tv.data[j];
    Var o = push(std::move(out), needs(a) || needs(v));
    record("add_rowvec", o, [a, v, o, m, n](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        if (t.needs(a)) kernels::axpy(1.0, g.data(), t.grad_buf(a.id), g.size());
        if (t.needs(v)) {
            double* dv = t.grad_buf(v.id);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) dv[j] += g[static_cast<size_t>(i) * n + j];
        }
    });
    return o;
}

Var Tape::gelu(Var a) {
    const Tensor& ta = node(a.id).val;
    Tensor out(ta.shape);
    kernels::gelu(ta.data.data(), out.data.data(), out.numel());
    Var o = push(std::move(out), needs(a));
    record("gelu", o, [a, o](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        kernels::gelu_grad_acc(t.node(a.id).val.data.data(), g.data(), t.grad_buf(a.id),
                               static_cast<std::int64_t>(g.size()));
    });
    return o;
}

// --- linear algebra ---

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = node(a.id).val;
    const Tensor& tb = node(b.id).val;
    if (ta.ndim() != 2 || tb.ndim() != 2 || ta.cols() != tb.rows())
        throw ShapeError("matmul: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    const int m = ta.rows(), k = ta.cols(), n = tb.cols();
    Tensor out({m, n});
    kernels::matmul_nn(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
    Var o = push(std::move(out), needs(a) || needs(b));
    record("matmul", o, [a, b, o, m, k, n](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        if (t.needs(a))
            kernels::matmul_nt_acc(g.data(), t.node(b.id).val.data.data(), t.grad_buf(a.id), m, n,
                                   k);
        if (t.needs(b))
            kernels::matmul_tn_acc(t.node(a.id).val.data.data(), g.data(), t.grad_buf(b.id), m, k,
                                   n);
    });
    return o;
}

Var Tape::transpose(Var a) {
    const Tensor& ta = node(a.id).val;
    if (ta.ndim() != 2) throw ShapeError("transpose: need 2-d, got " + shape_str(ta.shape));
    const int m = ta.rows(), n = ta.cols();
    Tensor out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out.data[static_cast<size_t>(j) * m + i] = ta.data[static_cast<size_t>(i) * n + j];
    Var o = push(std::move(out), needs(a));
    record("transpose", o, [a, o, m, n](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        double* da = t.grad_buf(a.id);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < m; ++i)
                da[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
    });
    return o;
}

Var Tape::reshape(Var a, Shape s) {
    const Tensor& ta = node(a.id).val;
    if (shape_numel(s) != ta.numel())
        throw ShapeError("reshape: " + shape_str(ta.shape) + " to " + shape_str(s));
    Tensor out;
    out.shape = std::move(s);
    out.data = ta.data;
    Var o = push(std::move(out), needs(a));
    record("reshape", o, [a, o](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        kernels::axpy(1.0, g.data(), t.grad_buf(a.id), g.size());
    });
    return o;
}

Var Tape::permute3(Var a, int p0, int p1, int p2) {
    const Tensor& ta = node(a.id).val;
    if (ta.ndim() != 3) throw ShapeError("permute3: need 3-d, got " + shape_str(ta.shape));
    const int perm[3] = {p0, p1, p2};
    {
        bool seen[3] = {false, false, false};
        for (int p : perm) {
            if (p < 0 || p > 2 || seen[p]) throw ContractError("permute3: bad permutation");
            seen[p] = true;
        }
    }
    const int d[3] = {ta.shape[0], ta.shape[1], ta.shape[2]};
    Shape os{d[p0], d[p1], d[p2]};
    Tensor out(os);
    const std::int64_t s_in[3] = {static_cast<std::int64_t>(d[1]) * d[2], d[2], 1};
    std::int64_t pos = 0;
    for (int i0 = 0; i0 < os[0]; ++i0)
        for (int i1 = 0; i1 < os[1]; ++i1)
            for (int i2 = 0; i2 < os[2]; ++i2) {
                std::int64_t src = static_cast<std::int64_t>(i0) * s_in[p0] + i1 * s_in[p1] +
                                   i2 * s_in[p2];
                out.data[pos++] = ta.data[src];
            }
    Var o = push(std::move(out), needs(a));
    Shape osc = os;
    record("permute3", o, [a, o, p0, p1, p2, osc, s_in](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        double* da = t.grad_buf(a.id);
        const int perm[3] = {p0, p1, p2};
        std::int64_t pos = 0;
        for (int i0 = 0; i0 < osc[0]; ++i0)
            for (int i1 = 0; i1 < osc[1]; ++i1)
                for (int i2 = 0; i2 < osc[2]; ++i2) {
                    std::int64_t src = static_cast<std::int64_t>(i0) * s_in[perm[0]] +
                                       i1 * s_in[perm[1]] + i2 * s_in[perm[2]];
                    da[src] += g[pos++];
                }
    });
    return o;
}

// --- structure ---

Var Tape::concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty");
    const int n = node(parts[0].id).val.cols();
    int m = 0;
    bool ng = false;
    for (Var p : parts) {
        const Tensor& tp = node(p.id).val;
        if (tp.ndim() != 2 || tp.cols() != n)
            throw ShapeError("concat_rows: width mismatch at " + shape_str(tp.shape));
        m += tp.rows();
        ng = ng || needs(p);
    }
    Tensor out({m, n});
    std::int64_t pos = 0;
    for (Var p : parts) {
        const Tensor& tp = node(p.id).val;
        std::copy(tp.data.begin(), tp.data.end(), out.data.begin() + pos);
        pos += tp.numel();
    }
    Var o = push(std::move(out), ng);
    std::vector<Var> ps(parts.begin(), parts.end());
    record("concat_rows", o, [ps, o](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        std::int64_t pos = 0;
        for (Var p : ps) {
            const std::int64_t len = t.node(p.id).val.numel();
            if (t.needs(p)) kernels::axpy(1.0, g.data() + pos, t.grad_buf(p.id), len);
            pos += len;
        }
    });
    return o;
}

Var Tape::concat_cols(Var a, Var b) {
    const Tensor& ta = node(a.id).val;
    const Tensor& tb = node(b.id).val;
    if (ta.rows() != tb.rows())
        throw ShapeError("concat_cols: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    const int m = ta.rows(), na = ta.cols(), nb = tb.cols();
    Tensor out({m, na + nb});
    for (int i = 0; i < m; ++i) {
        std::copy_n(ta.data.begin() + static_cast<std::int64_t>(i) * na, na,
                    out.data.begin() + static_cast<std::int64_t>(i) * (na + nb));
        std::copy_n(tb.data.begin() + static_cast<std::int64_t>(i) * nb, nb,
                    out.data.begin() + static_cast<std::int64_t>(i) * (na + nb) + na);
    }
    Var o = push(std::move(out), needs(a) || needs(b));
    record("concat_cols", o, [a, b, o, m, na, nb](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        if (t.needs(a)) {
            double* da = t.grad_buf(a.id);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < na; ++j)
                    da[static_cast<std::int64_t>(i) * na + j] +=
                        g[static_cast<std::int64_t>(i) * (na + nb) + j];
        }
        if (t.needs(b)) {
            double* db = t.grad_buf(b.id);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < nb; ++j)
                    db[static_cast<std::int64_t>(i) * nb + j] +=
                        g[static_cast<std::int64_t>(i) * (na + nb) + na + j];
        }
    });
    return o;
}

Var Tape::slice_rows(Var a, int r0, int r1) {
    const Tensor& ta = node(a.id).val;
    if (r0 < 0 || r1 > ta.rows() || r0 >= r1)
        throw ContractError("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) +
                            ") of " + shape_str(ta.shape));
    const int n = ta.cols();
    Tensor out({r1 - r0, n});
    std::copy_n(ta.data.begin() + static_cast<std::int64_t>(r0) * n, out.numel(),
                out.data.begin());
    Var o = push(std::move(out), needs(a));
    record("slice_rows", o, [a, o, r0, n](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        kernels::axpy(1.0, g.data(), t.grad_buf(a.id) + static_cast<std::int64_t>(r0) * n,
                      g.size());
    });
    return o;
}

Var Tape::slice_cols(Var a, int c0, int c1) {
    const Tensor& ta = node(a.id).val;
    if (c0 < 0 || c1 > ta.cols() || c0 >= c1)
        throw ContractError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                            ") of " + shape_str(ta.shape));
    const int m = ta.rows(), n = ta.cols(), w = c1 - c0;
    Tensor out({m, w});
    for (int i = 0; i < m; ++i)
        std::copy_n(ta.data.begin() + static_cast<std::int64_t>(i) * n + c0, w,
                    out.data.begin() + static_cast<std::int64_t>(i) * w);
    Var o = push(std::move(out), needs(a));
    record("slice_cols", o, [a, o, c0, m, n, w](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        double* da = t.grad_buf(a.id);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
                da[static_cast<std::int64_t>(i) * n + c0 + j] +=
                    g[static_cast<std::int64_t>(i) * w + j];
    });
    return o;
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
    const Tensor& ta = node(a.id).val;
    const int n = ta.cols();
    for (int r : idx)
        if (r < 0 || r >= ta.rows())
            throw ContractError("gather_rows: index " + std::to_string(r) + " out of " +
                                shape_str(ta.shape));
    Tensor out({static_cast<int>(idx.size()), n});
    for (size_t i = 0; i < idx.size(); ++i)
        std::copy_n(ta.data.begin() + static_cast<std::int64_t>(idx[i]) * n, n,
                    out.data.begin() + static_cast<std::int64_t>(i) * n);
    Var o = push(std::move(out), needs(a));
    record("gather_rows", o, [a, o, idx = std::move(idx), n](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        double* da = t.grad_buf(a.id);
        for (size_t i = 0; i < idx.size(); ++i)
            kernels::serial::axpy(1.0, g.data() + static_cast<std::int64_t>(i) * n,
                                  da + static_cast<std::int64_t>(idx[i]) * n, n);
    });
    return o;
}

// --- normalization / attention ---

Var Tape::softmax_rows(Var a) {
    const Tensor& ta = node(a.id).val;
    if (ta.ndim() != 2) throw ShapeError("softmax_rows: need 2-d, got " + shape_str(ta.shape));
    const int m = ta.rows(), n = ta.cols();
    Tensor out(ta.shape);
    kernels::softmax_rows(ta.data.data(), out.data.data(), m, n);
    Var o = push(std::move(out), needs(a));
    record("softmax_rows", o, [a, o, m, n](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        const double* y = t.node(o.id).val.data.data();
        double* da = t.grad_buf(a.id);
        for (int i = 0; i < m; ++i) {
            const double* yi = y + static_cast<std::int64_t>(i) * n;
            const double* gi = g.data() + static_cast<std::int64_t>(i) * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += gi[j] * yi[j];
            double* di = da + static_cast<std::int64_t>(i) * n;
            for (int j = 0; j < n; ++j) di[j] += yi[j] * (gi[j] - dot);
        }
    });
    return o;
}

Var Tape::layer_norm_rows(Var x, Var gain, Var bias) {
    const Tensor& tx = node(x.id).val;
    const Tensor& tg = node(gain.id).val;
    const Tensor& tb = node(bias.id).val;
    const int m = tx.rows(), n = tx.cols();
    if (tg.numel() != n || tb.numel() != n)
        throw ShapeError("layer_norm_rows: widths " + shape_str(tx.shape) + " / " +
                         shape_str(tg.shape) + " / " + shape_str(tb.shape));
    Tensor out(tx.shape);
    auto mean = std::make_shared<std::vector<double>>(m);
    auto rstd = std::make_shared<std::vector<double>>(m);
    kernels::layer_norm_rows(tx.data.data(), tg.data.data(), tb.data.data(), out.data.data(),
                             mean->data(), rstd->data(), m, n, kLayerNormEps);
    Var o = push(std::move(out), needs(x) || needs(gain) || needs(bias));
    record("layer_norm_rows", o, [x, gain, bias, o, m, n, mean, rstd](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        const double* xv = t.node(x.id).val.data.data();
        const double* gv = t.node(gain.id).val.data.data();
        const bool nx = t.needs(x), ng = t.needs(gain), nb = t.needs(bias);
        double* dx = nx ? t.grad_buf(x.id) : nullptr;
        double* dg = ng ? t.grad_buf(gain.id) : nullptr;
        double* db = nb ? t.grad_buf(bias.id) : nullptr;
        std::vector<double> xhat(n), dyh(n);
        for (int i = 0; i < m; ++i) {
            const double mu = (*mean)[i], rs = (*rstd)[i];
            const double* xi = xv + static_cast<std::int64_t>(i) * n;
            const double* gi = g.data() + static_cast<std::int64_t>(i) * n;
            double m1 = 0.0, m2 = 0.0;
            for (int j = 0; j < n; ++j) {
                xhat[j] = (xi[j] - mu) * rs;
                dyh[j] = gi[j] * gv[j];
                m1 += dyh[j];
                m2 += dyh[j] * xhat[j];
            }
            m1 /= n;
            m2 /= n;
            if (nx) {
                double* di = dx + static_cast<std::int64_t>(i) * n;
                for (int j = 0; j < n; ++j) di[j] += rs * (dyh[j] - m1 - xhat[j] * m2);
            }
            if (ng)
                for (int j = 0; j < n; ++j) dg[j] += gi[j] * xhat[j];
            if (nb)
                for (int j = 0; j < n; ++j) db[j] += gi[j];
        }
    });
    return o;
}

Var Tape::mha_segments(Var qkv, int seg_len, int heads, double scale) {
    const Tensor& tq = node(qkv.id).val;
    const int rows = tq.rows(), width = tq.cols();
    if (width % 3 != 0) throw ShapeError("mha_segments: width not 3*D: " + shape_str(tq.shape));
    const int dim = width / 3;
    if (dim % heads != 0)
        throw ShapeError("mha_segments: D=" + std::to_string(dim) + " not divisible by " +
                         std::to_string(heads) + " heads");
    if (seg_len <= 0 || rows % seg_len != 0)
        throw ShapeError("mha_segments: rows " + std::to_string(rows) + " not divisible by " +
                         std::to_string(seg_len));
    const int segs = rows / seg_len, dh = dim / heads;
    const double* q0 = tq.data.data();
    const double* k0 = tq.data.data() + dim;
    const double* v0 = tq.data.data() + 2 * dim;

    Tensor out({rows, dim});
    auto probs = std::make_shared<std::vector<double>>(
        static_cast<size_t>(segs) * heads * seg_len * seg_len);

    std::vector<double> qs(static_cast<size_t>(seg_len) * dh), ks(qs.size()), vs(qs.size());
    std::vector<double> logits(static_cast<size_t>(seg_len) * seg_len);
    std::vector<double> os(qs.size());
    for (int s = 0; s < segs; ++s) {
        for (int h = 0; h < heads; ++h) {
            for (int i = 0; i < seg_len; ++i) {
                const std::int64_t row = static_cast<std::int64_t>(s) * seg_len + i;
                std::copy_n(q0 + row * width + h * dh, dh, qs.begin() + i * dh);
                std::copy_n(k0 + row * width + h * dh, dh, ks.begin() + i * dh);
                std::copy_n(v0 + row * width + h * dh, dh, vs.begin() + i * dh);
            }
            kernels::matmul_nt(qs.data(), ks.data(), logits.data(), seg_len, dh, seg_len);
            for (double& l : logits) l *= scale;
            double* p = probs->data() +
                        (static_cast<size_t>(s) * heads + h) * seg_len * seg_len;
            kernels::softmax_rows(logits.data(), p, seg_len, seg_len);
            kernels::matmul_nn(p, vs.data(), os.data(), seg_len, seg_len, dh);
            for (int i = 0; i < seg_len; ++i) {
                const std::int64_t row = static_cast<std::int64_t>(s) * seg_len + i;
                std::copy_n(os.begin() + i * dh, dh, out.data.begin() + row * dim + h * dh);
            }
        }
    }

    Var o = push(std::move(out), needs(qkv));
    record("mha_segments", o, [qkv, o, segs, seg_len, heads, dh, dim, width, scale,
                               probs](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        const Tensor& tq = t.node(qkv.id).val;
        const double* q0 = tq.data.data();
        const double* k0 = tq.data.data() + dim;
        const double* v0 = tq.data.data() + 2 * dim;
        double* dqkv = t.grad_buf(qkv.id);

        std::vector<double> qs(static_cast<size_t>(seg_len) * dh), ks(qs.size()), vs(qs.size());
        std::vector<double> go(qs.size()), dv(qs.size()), dq(qs.size()), dk(qs.size());
        std::vector<double> dp(static_cast<size_t>(seg_len) * seg_len), ds(dp.size());
        for (int s = 0; s < segs; ++s) {
            for (int h = 0; h < heads; ++h) {
                const double* p = probs->data() +
                                  (static_cast<size_t>(s) * heads + h) * seg_len * seg_len;
                for (int i = 0; i < seg_len; ++i) {
                    const std::int64_t row = static_cast<std::int64_t>(s) * seg_len + i;
                    std::copy_n(q0 + row * width + h * dh, dh, qs.begin() + i * dh);
                    std::copy_n(k0 + row * width + h * dh, dh, ks.begin() + i * dh);
                    std::copy_n(v0 + row * width + h * dh, dh, vs.begin() + i * dh);
                    std::copy_n(g.data() + row * dim + h * dh, dh, go.begin() + i * dh);
                }
                // dv = P^T go
                kernels::matmul_tn(p, go.data(), dv.data(), seg_len, seg_len, dh);
                // dP = go v^T
                kernels::matmul_nt(go.data(), vs.data(), dp.data(), seg_len, dh, seg_len);
                // softmax backward rows, then logit scale
                for (int i = 0; i < seg_len; ++i) {
                    const double* pi = p + static_cast<std::int64_t>(i) * seg_len;
                    const double* dpi = dp.data() + static_cast<std::int64_t>(i) * seg_len;
                    double dot = 0.0;
                    for (int j = 0; j < seg_len; ++j) dot += dpi[j] * pi[j];
                    double* dsi = ds.data() + static_cast<std::int64_t>(i) * seg_len;
                    for (int j = 0; j < seg_len; ++j) dsi[j] = pi[j] * (dpi[j] - dot) * scale;
                }
                // dq = dS k; dk = dS^T q
                kernels::matmul_nn(ds.data(), ks.data(), dq.data(), seg_len, seg_len, dh);
                kernels::matmul_tn(ds.data(), qs.data(), dk.data(), seg_len, seg_len, dh);
                for (int i = 0; i < seg_len; ++i) {
                    const std::int64_t row = static_cast<std::int64_t>(s) * seg_len + i;
                    double* drow = dqkv + row * width + h * dh;
                    kernels::serial::axpy(1.0, dq.data() + i * dh, drow, dh);
                    kernels::serial::axpy(1.0, dk.data() + i * dh, drow + dim, dh);
                    kernels::serial::axpy(1.0, dv.data() + i * dh, drow + 2 * dim, dh);
                }
            }
        }
    });
    return o;
}

// --- reductions ---

Var Tape::sum_all(Var a) {
    const Tensor& ta = node(a.id).val;
    double s = 0.0;
    for (double v : ta.data) s += v;
    Tensor out({1});
    out.data[0] = s;
    Var o = push(std::move(out), needs(a));
    record("sum_all", o, [a, o](Tape& t) {
        const double g = t.grad_ref(o.id)[0];
        double* da = t.grad_buf(a.id);
        const std::int64_t n = t.node(a.id).val.numel();
        for (std::int64_t i = 0; i < n; ++i) da[i] += g;
    });
    return o;
}

Var Tape::mean_all(Var a) {
    const Tensor& ta = node(a.id).val;
    const std::int64_t n = ta.numel();
    double s = 0.0;
    for (double v : ta.data) s += v;
    Tensor out({1});
    out.data[0] = s / static_cast<double>(n);
    Var o = push(std::move(out), needs(a));
    record("mean_all", o, [a, o, n](Tape& t) {
        const double g = t.grad_ref(o.id)[0] / static_cast<double>(n);
        double* da = t.grad_buf(a.id);
        for (std::int64_t i = 0; i < n; ++i) da[i] += g;
    });
    return o;
}

Var Tape::div_by_scalar(Var a, Var s) {
    const Tensor& ta = node(a.id).val;
    const Tensor& ts = node(s.id).val;
    if (ts.numel() != 1) throw ShapeError("div_by_scalar: divisor not scalar");
    const double sv = ts.data[0];
    Tensor out(ta.shape);
    const double inv = 1.0 / sv;
    for (std::int64_t i = 0; i < ta.numel(); ++i) out.data[i] = ta.data[i] * inv;
    Var o = push(std::move(out), needs(a) || needs(s));
    record("div_by_scalar", o, [a, s, o, sv](Tape& t) {
        const auto& g = t.grad_ref(o.id);
        const std::int64_t n = static_cast<std::int64_t>(g.size());
        const double inv = 1.0 / sv;
        if (t.needs(a)) kernels::axpy(inv, g.data(), t.grad_buf(a.id), n);
        if (t.needs(s)) {
            const double* av = t.node(a.id).val.data.data();
            double acc = 0.0;
            for (std::int64_t i = 0; i < n; ++i) acc += g[i] * av[i];
            t.grad_buf(s.id)[0] -= acc * inv * inv;
        }
    });
    return o;
}

// --- backward ---

void Tape::backward(Var loss) {
    if (!grad_enabled_) throw ContractError("backward on a grad-disabled tape");
    const Tensor& lv = node(loss.id).val;
    if (lv.numel() != 1) throw ContractError("backward: loss must be scalar, got " +
                                             shape_str(lv.shape));
    for (Node& n : nodes_)
        if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
    grad_buf(loss.id)[0] = 1.0;

    const bool corrupting = !g_corrupt_op.empty();
    for (auto it = recs_.rbegin(); it != recs_.rend(); ++it) {
        if (corrupting && g_corrupt_op == it->op) {
            auto saved = node(it->out).grad;
            for (double& v : node(it->out).grad) v *= g_corrupt_factor;
            it->pull(*this);
            node(it->out).grad = std::move(saved);
        } else {
            it->pull(*this);
        }
    }

    for (Node& n : nodes_) {
        if (n.external && n.needs_grad && !n.grad.empty()) {
            n.external->ensure_grad();
            kernels::serial::axpy(1.0, n.grad.data(), n.external->grad.data(),
                                  static_cast<std::int64_t>(n.grad.size()));
        }
    }
}

}  // namespace cmpose
