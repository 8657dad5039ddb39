/*
 * Copyright 2026 The mgrec Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <mgrec/common.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mgrec::io {

namespace fs = std::filesystem;

// Dense matrix file: 16-byte header (magic "MMFT", u32 rows, u32 cols,
// u32 dtype) followed by the row-major little-endian payload.
enum class DType : uint32_t { Float32 = 0, Float64 = 1 };

std::string encodeMatrix(const Matrix& m, DType dtype = DType::Float32);
Matrix decodeMatrix(std::string_view bytes, const std::string& source);
void writeMatrix(const fs::path& path, const Matrix& m,
                 DType dtype = DType::Float32);
Matrix readMatrix(const fs::path& path);

// Token sidecar: one token per line, in row order.
fs::path tokenSidecar(const fs::path& matrixPath);
void writeTokens(const fs::path& path, std::span<const std::string> tokens);
std::vector<std::string> readTokens(const fs::path& path);

std::string readFile(const fs::path& path);
// Writes to a temporary sibling and renames it over `path`.
void writeFileAtomic(const fs::path& path, std::string_view bytes);

// git blob hash: sha1("blob <size>\0" + bytes), lowercase hex.
std::string contentHash(std::string_view bytes);
std::string fileHash(const fs::path& path);

}  // namespace mgrec::io
