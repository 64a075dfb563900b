// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "cellseg/optimizer.hpp"
#include "cellseg/tensor.hpp"

namespace cellseg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary snapshot: magic "CSKP", u32 version, u32 record count, tensor
/// records (u16 name length, name, u8 rank, u32 dims, float32 LE payload),
/// then a second u32-counted section with optimizer-state records in the same
/// encoding. Record order is the name-sorted parameter order, so identical
/// state always serializes to identical bytes.
void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const AdamState<float>* opt = nullptr);

/// Restores into an already-constructed parameter store; the checkpoint must
/// carry exactly the store's parameter names and shapes. When opt is null the
/// optimizer section is skipped; otherwise it is replaced by the file's.
void load_checkpoint(const std::string& path, ParamStore<float>& params,
                     AdamState<float>* opt = nullptr);

}  // namespace cellseg
