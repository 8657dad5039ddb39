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

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mgrec {

using Matrix =
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixRef = Eigen::Ref<Matrix>;
using ConstMatrixRef = Eigen::Ref<const Matrix>;

using IndexList = std::vector<uint32_t>;
// One sorted item list per user.
using UserItemLists = std::vector<IndexList>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Modality { Visual, Textual };

std::string_view modalityName(Modality m);  // "visual" / "textual"
std::string_view modalityCode(Modality m);  // "v" / "t"
// Accepts the full name or the one-letter code.
Modality parseModality(std::string_view text);

// Restricts Eigen and OpenMP to a single thread.
void setSingleThreaded();

}  // namespace mgrec
