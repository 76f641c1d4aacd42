#pragma once

#include "stcl/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stcl {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;  // Adam first moment
    Tensor v;  // Adam second moment
    std::uint64_t step = 0;
    // Buffers (batch-norm running statistics, data scale) are stored and
    // checkpointed alongside weights but never touched by the optimizer.
    bool trainable = true;
};

// Flat registry of named parameters in registration order.
class ParamStore {
public:
    Parameter& add(std::string name, Tensor init, bool trainable = true);

    bool contains(std::string_view name) const;
    Parameter& at(std::string_view name);
    const Parameter& at(std::string_view name) const;

    const Tensor& value(std::string_view name) const { return at(name).value; }
    Tensor& value(std::string_view name) { return at(name).value; }
    Tensor& grad(std::string_view name) { return at(name).grad; }
    const Tensor& grad(std::string_view name) const { return at(name).grad; }

    std::vector<Parameter>& entries() { return params_; }
    const std::vector<Parameter>& entries() const { return params_; }
    std::size_t size() const { return params_.size(); }

    // Scalar count over trainable entries.
    std::size_t trainable_scalars() const;

    void zero_grad();

    // Copy every value (not gradients or moments) from `other`; names and
    // shapes must agree.
    void copy_values_from(const ParamStore& other);

    // Order-sensitive FNV-1a over the bytes of every value whose name starts
    // with `prefix`. Used to compare parameter sets.
    std::uint64_t checksum(std::string_view prefix = {}) const;

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam update on every trainable entry, then gradients are
// cleared.
void adam_step(ParamStore& store, const AdamConfig& cfg);

// Checkpoint text format:
//   stcl-params 1
//   <count>
//   then per parameter: "<name> <trainable> <rank> <d0> ... <dk>" followed by
//   one line of values printed with 17 significant digits.
// Only entries whose name starts with `prefix` are written.
void save_checkpoint(const ParamStore& store, const std::filesystem::path& path,
                     std::string_view prefix = {});

// Reads values into an already-defined store. Every parameter in the file
// must exist in `store` with an identical shape; violations throw DataError
// with both shapes in the message. Returns the number of parameters loaded.
std::size_t load_checkpoint(ParamStore& store, const std::filesystem::path& path);

}  // namespace stcl
