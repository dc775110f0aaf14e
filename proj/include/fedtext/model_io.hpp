#pragma once

#include <string>
#include <vector>

#include "fedtext/model.hpp"

namespace fedtext {

struct NamedTensor {
    std::string name;
    std::vector<uint64_t> dims;
    std::vector<float> values;  // row-major
};

// The trained weight tensors in checkpoint order; names and shapes match the
// checkpoint format exactly. This is the extraction half of warm starting.
std::vector<NamedTensor> extract_weights(const ModelParameters& params);

// Checkpoint format: little-endian; magic "FTXT", version u32 = 1, tensor
// count u32, then per tensor: name length u32, name bytes, rank u32, dims as
// u64, row-major float32 data. Round-trips bit-exactly.
void save_checkpoint(const ModelParameters& params, const std::string& path);
ModelParameters load_checkpoint(const std::string& path);

}  // namespace fedtext
