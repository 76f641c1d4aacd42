#include "stcl/param_store.hpp"

#include "stcl/errors.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace stcl {

Parameter& ParamStore::add(std::string name, Tensor init, bool trainable) {
    if (index_.contains(name)) throw InvariantError("duplicate parameter name: " + name);
    Parameter p;
    p.name = name;
    p.grad = Tensor::zeros_like(init);
    p.m = Tensor::zeros_like(init);
    p.v = Tensor::zeros_like(init);
    p.value = std::move(init);
    p.trainable = trainable;
    index_.emplace(std::move(name), params_.size());
    params_.push_back(std::move(p));
    return params_.back();
}

bool ParamStore::contains(std::string_view name) const {
    return index_.contains(std::string(name));
}

Parameter& ParamStore::at(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw InvariantError("unknown parameter: " + std::string(name));
    return params_[it->second];
}

const Parameter& ParamStore::at(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw InvariantError("unknown parameter: " + std::string(name));
    return params_[it->second];
}

std::size_t ParamStore::trainable_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        if (p.trainable) n += p.value.size();
    }
    return n;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
}

void ParamStore::copy_values_from(const ParamStore& other) {
    for (auto& p : params_) {
        const Parameter& src = other.at(p.name);
        require_same_shape(p.value, src.value, p.name.c_str());
        p.value = src.value;
    }
}

std::uint64_t ParamStore::checksum(std::string_view prefix) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : params_) {
        if (!p.name.starts_with(prefix)) continue;
        for (double v : p.value.values()) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof(double));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 1099511628211ULL;
            }
        }
    }
    return h;
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
    for (auto& p : store.entries()) {
        if (!p.trainable) continue;
        ++p.step;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
            p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = p.m[i] / bc1;
            const double v_hat = p.v[i] / bc2;
            p.value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
        p.grad.fill(0.0);
    }
}

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path,
                     std::string_view prefix) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint: " + path.string());
    std::size_t count = 0;
    for (const auto& p : store.entries()) count += p.name.starts_with(prefix);
    out << "stcl-params 1\n" << count << '\n';
    char buf[32];
    for (const auto& p : store.entries()) {
        if (!p.name.starts_with(prefix)) continue;
        out << p.name << ' ' << (p.trainable ? 1 : 0) << ' ' << p.value.rank();
        for (std::size_t d : p.value.shape()) out << ' ' << d;
        out << '\n';
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", p.value[i]);
            if (i) out << ' ';
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw DataError("failed writing checkpoint: " + path.string());
}

std::size_t load_checkpoint(ParamStore& store, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read checkpoint: " + path.string());
    std::string magic;
    int version = 0;
    std::size_t count = 0;
    if (!(in >> magic >> version >> count) || magic != "stcl-params" || version != 1) {
        throw DataError("not a parameter checkpoint (bad header): " + path.string());
    }
    for (std::size_t k = 0; k < count; ++k) {
        std::string name;
        int trainable = 0;
        std::size_t rank = 0;
        if (!(in >> name >> trainable >> rank)) {
            throw DataError("truncated checkpoint: " + path.string());
        }
        Shape shape(rank);
        for (auto& d : shape) {
            if (!(in >> d)) throw DataError("truncated checkpoint shape: " + path.string());
        }
        if (!store.contains(name)) {
            throw DataError("checkpoint parameter '" + name + "' is not part of the model (" +
                            path.string() + ")");
        }
        Parameter& p = store.at(name);
        if (p.value.shape() != shape) {
            throw DataError("checkpoint parameter '" + name + "' has shape " + shape_string(shape) +
                            " but the model expects " + shape_string(p.value.shape()));
        }
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            std::string tok;
            if (!(in >> tok)) throw DataError("truncated checkpoint values: " + path.string());
            p.value[i] = std::strtod(tok.c_str(), nullptr);
        }
    }
    return count;
}

}  // namespace stcl
