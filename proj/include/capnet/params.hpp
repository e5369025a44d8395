#pragma once

#include <map>
#include <string>

#include "capnet/rng.hpp"
#include "capnet/tensor.hpp"

namespace capnet {

struct Parameter {
    Tensor value;
    Tensor grad;  // same shape, accumulated until zero_grads()
};

// Named parameters with gradients. std::map keeps iteration sorted by name,
// which fixes the optimizer update order.
class ParamStore {
public:
    Parameter& add(const std::string& name, Tensor init);
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool has(const std::string& name) const { return entries_.find(name) != entries_.end(); }

    void zero_grads();
    std::size_t total_size() const;

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    std::size_t count() const { return entries_.size(); }

    // Gaussian init helpers; draw order is the lexicographic name order of
    // the add() calls made by the model builders, so a seed pins every value.
    Parameter& add_gaussian(const std::string& name, std::vector<std::size_t> shape,
                            double sigma, RngStream& rng);

private:
    std::map<std::string, Parameter> entries_;
};

struct AdamState {
    double learning_rate = 4e-4;
    double beta1 = 0.8;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t t = 0;
    std::map<std::string, Tensor> m;  // first moments
    std::map<std::string, Tensor> v;  // second moments

    static AdamState init(const ParamStore& params, double lr, double b1 = 0.8,
                          double b2 = 0.999, double eps = 1e-8);
};

// One bias-corrected Adam update, applied in-place in name order.
void adam_step(ParamStore& params, AdamState& state);

// Learning-rate decay: unchanged through epoch 20, then * 0.5^((E-20)/50)
// once per epoch transition.
double lr_schedule(int epoch, double lr_current);

}  // namespace capnet
