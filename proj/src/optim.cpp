#include "cmpose/optim.h"

#include <cmath>

#include "cmpose/error.h"

namespace cmpose {

Tensor& ParamStore::add(const std::string& name, Shape shape) {
    if (find(name)) throw ContractError("duplicate parameter " + name);
    entries_.emplace_back(name, Tensor(std::move(shape)));
    Tensor& t = entries_.back().second;
    t.requires_grad = true;
    return t;
}

Tensor& ParamStore::get(const std::string& name) {
    Tensor* t = find(name);
    if (!t) throw ContractError("unknown parameter " + name);
    return *t;
}

const Tensor& ParamStore::get(const std::string& name) const {
    return const_cast<ParamStore*>(this)->get(name);
}

Tensor* ParamStore::find(const std::string& name) {
    for (auto& [n, t] : entries_)
        if (n == name) return &t;
    return nullptr;
}

void ParamStore::zero_grads() {
    for (auto& [n, t] : entries_) t.zero_grad();
}

std::int64_t ParamStore::total_params() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
}

double LrSchedule::rate_at(int epoch) const {
    if (points.empty()) throw ContractError("empty lr schedule");
    double r = points.front().second;
    for (const auto& [e, rate] : points)
        if (e <= epoch) r = rate;
    return r;
}

AdamW::AdamW(ParamStore& params, Options opts) : params_(&params), opts_(std::move(opts)) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params.tensor(i).data.size(), 0.0);
        v_[i].assign(params.tensor(i).data.size(), 0.0);
    }
}

void AdamW::step(int epoch) {
    const double lr = opts_.schedule.rate_at(epoch);
    ++step_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
    for (size_t i = 0; i < params_->size(); ++i) {
        Tensor& p = params_->tensor(i);
        if (p.grad.empty()) continue;  // parameter unused by this graph
        if (p.grad.size() != p.data.size())
            throw ContractError("adamw: grad/param size mismatch for " + params_->name(i));
        auto& m = m_[i];
        auto& v = v_[i];
        for (size_t j = 0; j < p.data.size(); ++j) {
            const double g = p.grad[j];
            m[j] = opts_.beta1 * m[j] + (1.0 - opts_.beta1) * g;
            v[j] = opts_.beta2 * v[j] + (1.0 - opts_.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.data[j] -= lr * (mhat / (std::sqrt(vhat) + opts_.eps) +
                               opts_.weight_decay * p.data[j]);
        }
    }
}

}  // namespace cmpose
