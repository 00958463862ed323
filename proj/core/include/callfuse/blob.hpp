// Copyright 2026 The callfuse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CALLFUSE_BLOB_HPP
#define CALLFUSE_BLOB_HPP

#include <cstdint>
#include <iosfwd>
#include <string>

#include "callfuse/tensor.hpp"

namespace callfuse {

// Tensor blob wire format, little-endian throughout:
//   bytes 0..7   magic "CFTENSR\0"
//   bytes 8..11  dtype code (u32): 1 = float32, 2 = float64
//   bytes 12..15 rank (u32)
//   then rank u64 dimension sizes, then the payload in row-major order.

inline constexpr char kBlobMagic[8] = {'C', 'F', 'T', 'E', 'N', 'S', 'R', '\0'};
inline constexpr std::uint32_t kDtypeF32 = 1;
inline constexpr std::uint32_t kDtypeF64 = 2;

void write_blob(std::ostream& os, const Tensor& t, std::uint32_t dtype = kDtypeF64);
void write_blob_file(const std::string& path, const Tensor& t,
                     std::uint32_t dtype = kDtypeF64);

/// Reads a tensor blob; float32 payloads are widened to double.
Tensor read_blob(std::istream& is, const std::string& what = "<stream>");
Tensor read_blob_file(const std::string& path);

/// Parses only the header and returns the shape; used for cheap validation.
Shape read_blob_shape(const std::string& path);

}  // namespace callfuse

#endif  // CALLFUSE_BLOB_HPP
