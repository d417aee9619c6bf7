#pragma once

#include "madis/param_store.hpp"

#include <map>
#include <string>

namespace madis {

/// On-disk parameter container: a `manifest.txt` with one line per tensor,
///   name<TAB>f32<TAB>shape-dims-comma-separated<TAB>filename
/// plus one raw little-endian float32 file per tensor. Optimizer moments and
/// the step counter are stored as ordinary entries under "optim.".
struct Checkpoint {
  std::map<std::string, Tensor<float>> tensors;
};

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& dir);

/// Copies checkpoint entries into an already-built store. Throws on names the
/// store does not know and on shape mismatches; `prefix` restricts which
/// checkpoint entries are considered.
void load_into_store(const Checkpoint& ckpt, ParamStore<float>& store,
                     const std::string& prefix = "");

Checkpoint store_to_checkpoint(const ParamStore<float>& store);

}  // namespace madis
