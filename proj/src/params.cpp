#include "capnet/params.hpp"

#include <cmath>

#include "capnet/errors.hpp"

namespace capnet {

Parameter& ParamStore::add(const std::string& name, Tensor init) {
    if (has(name)) throw StateError("duplicate parameter name: " + name);
    Parameter p;
    p.grad = Tensor::zeros(init.shape());
    p.value = std::move(init);
    return entries_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::get(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw StateError("unknown parameter: " + name);
    return it->second;
}

const Parameter& ParamStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw StateError("unknown parameter: " + name);
    return it->second;
}

void ParamStore::zero_grads() {
    for (auto& [name, p] : entries_) p.grad.fill(0.0);
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& [name, p] : entries_) n += p.value.size();
    return n;
}

Parameter& ParamStore::add_gaussian(const std::string& name, std::vector<std::size_t> shape,
                                    double sigma, RngStream& rng) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, sigma);
    return add(name, std::move(t));
}

AdamState AdamState::init(const ParamStore& params, double lr, double b1, double b2, double eps) {
    AdamState s;
    s.learning_rate = lr;
    s.beta1 = b1;
    s.beta2 = b2;
    s.epsilon = eps;
    for (const auto& [name, p] : params) {
        s.m.emplace(name, Tensor::zeros(p.value.shape()));
        s.v.emplace(name, Tensor::zeros(p.value.shape()));
    }
    return s;
}

void adam_step(ParamStore& params, AdamState& state) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (auto& [name, p] : params) {
        auto mit = state.m.find(name);
        auto vit = state.v.find(name);
        if (mit == state.m.end() || vit == state.v.end()) {
            throw StateError("Adam state missing moment tensors for parameter: " + name);
        }
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        if (!m.same_shape(p.value) || !v.same_shape(p.value)) {
            throw StateError("Adam moment shape mismatch for parameter: " + name);
        }
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

double lr_schedule(int epoch, double lr_current) {
    if (lr_current <= 0.0) throw ValidationError("lr_schedule requires a positive learning rate");
    if (epoch <= 20) return lr_current;
    return lr_current * std::pow(0.5, (static_cast<double>(epoch) - 20.0) / 50.0);
}

}  // namespace capnet
