#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tfcorr/nn.hpp"
#include "tfcorr/optim.hpp"
#include "tfcorr/tensor.hpp"

namespace tfcorr {

// On-disk model state. Binary layout: magic "TFCN", version u16, a
// length-prefixed block of key=value config lines, entry count u32, then per
// entry: name (u16 length + bytes), dtype u8, rank u8, dims u64[], raw
// little-endian element data.
struct Checkpoint {
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Tensor>> entries;  // unique names, ordered

  const Tensor* find(const std::string& name) const;
};

// Bit-exact round trip. Saving rejects duplicate names; loading rejects bad
// magic or version, duplicate names, and truncated files.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Copies every parameter (and, when given, optimizer moments as
// adam.m.<name> / adam.v.<name> plus the step counter under config key
// "step") into a checkpoint alongside caller-provided config lines.
Checkpoint snapshot(const nn::ParamStore& ps, const AdamW* opt = nullptr,
                    std::map<std::string, std::string> config = {});

// Loads values back into live objects. Every store parameter must be present
// with matching dtype and shape; with an optimizer, both moment tensors per
// parameter are required as well.
void restore(const Checkpoint& ck, nn::ParamStore& ps, AdamW* opt = nullptr);

}  // namespace tfcorr
