#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vecfont/tensor.hpp"

namespace vecfont {

// Named-tensor container.
//
// Byte layout (all integers little-endian):
//   [0..7]   magic "VFTNSR1\0"
//   [8..15]  uint64 JSON header length L
//   [16..16+L)      header: {"tensors":[{"name":str,"shape":[...],"offset":int},...]}
//   [16+L..)        data section; each tensor is raw 64-bit floats, row-major,
//                   starting at its header offset (relative to the section start).
void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& named);

std::map<std::string, Tensor> load_tensors(const std::string& path);

}  // namespace vecfont
