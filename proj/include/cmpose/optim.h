#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "cmpose/tensor.h"

namespace cmpose {

// Named trainable tensors with stable ordering (checkpoint layout and
// optimizer slots index into this order).
class ParamStore {
public:
    Tensor& add(const std::string& name, Shape shape);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    Tensor* find(const std::string& name);

    size_t size() const { return entries_.size(); }
    const std::string& name(size_t i) const { return entries_[i].first; }
    Tensor& tensor(size_t i) { return entries_[i].second; }
    const Tensor& tensor(size_t i) const { return entries_[i].second; }

    void zero_grads();
    std::int64_t total_params() const;

private:
    // deque: Tensor addresses stay stable as more parameters register
    std::deque<std::pair<std::string, Tensor>> entries_;
};

// step-wise learning-rate schedule: the rate of the last entry whose epoch
// is <= the current epoch applies
struct LrSchedule {
    std::vector<std::pair<int, double>> points;  // (epoch, rate), ascending epochs
    double rate_at(int epoch) const;
};

// AdamW with decoupled weight decay.
class AdamW {
public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
        LrSchedule schedule;
    };

    AdamW(ParamStore& params, Options opts);

    // applies one update using params' accumulated .grad fields
    void step(int epoch);
    void zero_grads() { params_->zero_grads(); }
    std::int64_t step_count() const { return step_; }

private:
    ParamStore* params_;
    Options opts_;
    std::vector<std::vector<double>> m_, v_;
    std::int64_t step_ = 0;
};

}  // namespace cmpose
