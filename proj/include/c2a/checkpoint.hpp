/*
 * Copyright 2026 The C2A Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <filesystem>

#include "c2a/tensor.hpp"

namespace c2a {

/// Portable binary snapshot of a tensor map. Writes go through a temporary
/// file and a rename, so a concurrent reader never sees a partial file.
void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors);

/// Throws DataError if the file is missing, truncated or not a checkpoint.
NamedTensors load_tensors(const std::filesystem::path& path);

}  // namespace c2a
