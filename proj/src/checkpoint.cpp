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

#include "c2a/checkpoint.hpp"

#include <cereal/archives/portable_binary.hpp>
#include <cereal/types/map.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/vector.hpp>
#include <fstream>
#include <string>

#include "c2a/errors.hpp"

namespace c2a {

template <class Archive>
void serialize(Archive& ar, Tensor& t) {
    ar(t.shape, t.data, t.requires_grad);
}

namespace {
constexpr std::uint32_t kMagic = 0x43324131;  // "C2A1"
}

void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write checkpoint " + tmp.string());
        cereal::PortableBinaryOutputArchive ar(out);
        ar(kMagic, tensors);
    }
    std::filesystem::rename(tmp, path);
}

NamedTensors load_tensors(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    std::uint32_t magic = 0;
    NamedTensors tensors;
    try {
        cereal::PortableBinaryInputArchive ar(in);
        ar(magic);
        if (magic != kMagic) throw DataError(path.string() + " is not a tensor checkpoint");
        ar(tensors);
    } catch (const cereal::Exception& e) {
        throw DataError("corrupt checkpoint " + path.string() + ": " + e.what());
    }
    return tensors;
}

}  // namespace c2a
