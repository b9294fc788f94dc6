#ifndef DCNN_OPTIM_IMPL_HPP
#define DCNN_OPTIM_IMPL_HPP

// Template bodies for optim.hpp. Include that header, not this one.

namespace dcnn {

template <typename T>
void AdaBelief<T>::step(const std::vector<ParamView<T>>& params, T lr_override) {
    if (m_.empty()) {
        m_.resize(params.size());
        s_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].size, T(0));
            s_[i].assign(params[i].size, T(0));
        }
    }
    if (m_.size() != params.size())
        throw ConfigError("adabelief step called with a different parameter set");

    ++t_;
    const T lr = lr_override > T(0) ? lr_override : cfg_.lr;
    const T b1 = cfg_.beta1;
    const T b2 = cfg_.beta2;
    const T eps = cfg_.epsilon;
    const T bc1 = T(1) - std::pow(b1, T(t_));
    const T bc2 = T(1) - std::pow(b2, T(t_));

    for (std::size_t i = 0; i < params.size(); ++i) {
        const ParamView<T>& p = params[i];
        if (m_[i].size() != p.size)
            throw ConfigError("adabelief parameter '" + p.name + "' changed size");
        T* m = m_[i].data();
        T* s = s_[i].data();
        for (std::size_t j = 0; j < p.size; ++j) {
            const T g = p.grad[j];
            m[j] = b1 * m[j] + (T(1) - b1) * g;
            const T diff = g - m[j];
            s[j] = b2 * s[j] + (T(1) - b2) * diff * diff + eps;
            const T m_hat = m[j] / bc1;
            const T s_hat = s[j] / bc2;
            T update = lr * m_hat / (std::sqrt(s_hat) + eps);
            if (cfg_.weight_decay > T(0)) update += lr * cfg_.weight_decay * p.value[j];
            p.value[j] -= update;
        }
    }
}

template <typename T>
void sgd_step(const std::vector<ParamView<T>>& params, T lr) {
    for (const ParamView<T>& p : params)
        for (std::size_t j = 0; j < p.size; ++j)
            p.value[j] -= lr * p.grad[j];
}

} // namespace dcnn

#endif
