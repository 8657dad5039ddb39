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

#include <mgrec/common.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mgrec {

std::string_view modalityName(Modality m) {
  return m == Modality::Visual ? "visual" : "textual";
}

std::string_view modalityCode(Modality m) {
  return m == Modality::Visual ? "v" : "t";
}

Modality parseModality(std::string_view text) {
  if (text == "v" || text == "visual") {
    return Modality::Visual;
  }
  if (text == "t" || text == "textual") {
    return Modality::Textual;
  }
  throw Error("unknown modality '" + std::string(text) +
              "' (expected visual|v or textual|t)");
}

void setSingleThreaded() {
  Eigen::setNbThreads(1);
#ifdef _OPENMP
  omp_set_num_threads(1);
#endif
}

}  // namespace mgrec
