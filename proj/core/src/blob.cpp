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

#include "callfuse/blob.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace callfuse {

static_assert(std::endian::native == std::endian::little,
              "blob I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated tensor blob: " + what);
  return v;
}

void read_header(std::istream& is, const std::string& what, std::uint32_t& dtype,
                 Shape& shape) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kBlobMagic, 8) != 0) {
    throw IoError("bad tensor blob magic: " + what);
  }
  dtype = get<std::uint32_t>(is, what);
  if (dtype != kDtypeF32 && dtype != kDtypeF64) {
    throw IoError("unknown dtype code " + std::to_string(dtype) + " in " + what);
  }
  const auto rank = get<std::uint32_t>(is, what);
  if (rank > 8) throw IoError("implausible tensor rank in " + what);
  shape.clear();
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = get<std::uint64_t>(is, what);
    if (d == 0) throw IoError("zero dimension in tensor blob " + what);
    shape.push_back(static_cast<std::size_t>(d));
  }
}

}  // namespace

void write_blob(std::ostream& os, const Tensor& t, std::uint32_t dtype) {
  if (dtype != kDtypeF32 && dtype != kDtypeF64) {
    throw ValueError("write_blob: unknown dtype code " + std::to_string(dtype));
  }
  os.write(kBlobMagic, 8);
  put<std::uint32_t>(os, dtype);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put<std::uint64_t>(os, d);
  if (dtype == kDtypeF64) {
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  } else {
    std::vector<float> narrow(t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
      narrow[i] = static_cast<float>(t.values()[i]);
    os.write(reinterpret_cast<const char*>(narrow.data()),
             static_cast<std::streamsize>(narrow.size() * sizeof(float)));
  }
  if (!os) throw IoError("write_blob: stream write failed");
}

void write_blob_file(const std::string& path, const Tensor& t, std::uint32_t dtype) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_blob(os, t, dtype);
}

Tensor read_blob(std::istream& is, const std::string& what) {
  std::uint32_t dtype;
  Shape shape;
  read_header(is, what, dtype, shape);
  const std::size_t n = shape_size(shape);
  std::vector<double> data(n);
  if (dtype == kDtypeF64) {
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
  } else {
    std::vector<float> narrow(n);
    is.read(reinterpret_cast<char*>(narrow.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<double>(narrow[i]);
  }
  if (!is) throw IoError("truncated tensor blob payload: " + what);
  return Tensor::from(std::move(shape), std::move(data));
}

Tensor read_blob_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open tensor blob: " + path);
  return read_blob(is, path);
}

Shape read_blob_shape(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open tensor blob: " + path);
  std::uint32_t dtype;
  Shape shape;
  read_header(is, path, dtype, shape);
  return shape;
}

}  // namespace callfuse
