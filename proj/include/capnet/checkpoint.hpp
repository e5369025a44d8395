#pragma once

#include <optional>
#include <string>

#include "capnet/params.hpp"

namespace capnet {

struct LoadedCheckpoint {
    std::string config_echo;
    ParamStore params;
    std::optional<AdamState> adam;
};

// Binary, little-endian layout:
//   magic "AICAB1"
//   u32 config length + UTF-8 config text
//   u32 tensor count, then per tensor: u32 name length + name, u32 rank,
//     u64 dims..., f64 data
//   u8 adam flag; when set: u64 step, f64 lr/beta1/beta2/eps, then the first
//     and second moment tensors in the same name order.
// Round trips are bit exact.
void save_checkpoint(const std::string& path, const std::string& config_echo,
                     const ParamStore& params, const AdamState* adam = nullptr);

LoadedCheckpoint load_checkpoint(const std::string& path);

// Shape-checks loaded parameters against a freshly built store and copies
// values over. Mismatches fail loudly.
void apply_checkpoint(const LoadedCheckpoint& ckpt, ParamStore& target);

}  // namespace capnet
