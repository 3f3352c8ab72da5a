// Copyright 2026 The RefineBox Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef REFINEBOX_ERRORS_HPP_
#define REFINEBOX_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace refinebox {

// Malformed or inconsistent input data: bad JSON, broken ids, corrupt dumps.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A NaN or Inf surfaced in network math or a training loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace refinebox

#endif  // REFINEBOX_ERRORS_HPP_
