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

#include <mgrec/io.hpp>

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

namespace mgrec::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace {

constexpr char kMatrixMagic[4] = {'M', 'M', 'F', 'T'};

template <typename T>
void append(std::string& out, const T& value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T extract(std::string_view bytes, size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

}  // namespace

std::string encodeMatrix(const Matrix& m, DType dtype) {
  if (m.rows() > UINT32_MAX || m.cols() > UINT32_MAX) {
    throw Error("matrix too large for MMFT format");
  }
  const size_t elem = dtype == DType::Float32 ? 4 : 8;
  std::string out;
  out.reserve(16 + elem * m.size());
  out.append(kMatrixMagic, 4);
  append(out, static_cast<uint32_t>(m.rows()));
  append(out, static_cast<uint32_t>(m.cols()));
  append(out, static_cast<uint32_t>(dtype));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (dtype == DType::Float32) {
        append(out, static_cast<float>(m(r, c)));
      } else {
        append(out, m(r, c));
      }
    }
  }
  return out;
}

Matrix decodeMatrix(std::string_view bytes, const std::string& source) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMatrixMagic, 4) != 0) {
    throw Error(source + ": not an MMFT matrix file (bad magic)");
  }
  const auto rows = extract<uint32_t>(bytes, 4);
  const auto cols = extract<uint32_t>(bytes, 8);
  const auto code = extract<uint32_t>(bytes, 12);
  if (code > 1) {
    throw Error(source + ": unsupported dtype code " + std::to_string(code));
  }
  const size_t elem = code == 0 ? 4 : 8;
  const size_t expected = 16 + elem * size_t{rows} * size_t{cols};
  if (bytes.size() != expected) {
    throw Error(source + ": payload size " + std::to_string(bytes.size()) +
                " does not match header (" + std::to_string(expected) + ")");
  }
  Matrix m(rows, cols);
  size_t offset = 16;
  for (uint32_t r = 0; r < rows; ++r) {
    for (uint32_t c = 0; c < cols; ++c) {
      if (code == 0) {
        m(r, c) = extract<float>(bytes, offset);
      } else {
        m(r, c) = extract<double>(bytes, offset);
      }
      offset += elem;
    }
  }
  return m;
}

void writeMatrix(const fs::path& path, const Matrix& m, DType dtype) {
  writeFileAtomic(path, encodeMatrix(m, dtype));
}

Matrix readMatrix(const fs::path& path) {
  return decodeMatrix(readFile(path), path.string());
}

fs::path tokenSidecar(const fs::path& matrixPath) {
  fs::path p = matrixPath;
  p += ".tokens";
  return p;
}

void writeTokens(const fs::path& path, std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (t.find('\n') != std::string::npos) {
      throw Error("token contains a newline: cannot write sidecar");
    }
    out += t;
    out += '\n';
  }
  writeFileAtomic(path, out);
}

std::vector<std::string> readTokens(const fs::path& path) {
  std::istringstream in(readFile(path));
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    tokens.push_back(line);
  }
  return tokens;
}

std::string readFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open file: " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void writeFileAtomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::random_device rd;
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error("cannot write file: " + tmp.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      fs::remove(tmp);
      throw Error("write failed: " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

std::string contentHash(std::string_view bytes) {
  const std::string prefix = "blob " + std::to_string(bytes.size()) + '\0';
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(
    EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), prefix.data(), prefix.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("sha1 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xf];
  }
  return hex;
}

std::string fileHash(const fs::path& path) {
  return contentHash(readFile(path));
}

}  // namespace mgrec::io
