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

#ifndef REFINEBOX_LOG_HPP_
#define REFINEBOX_LOG_HPP_

#include <string_view>

namespace refinebox {

// Informational messages go to stderr unless quiet mode is on.
void SetQuiet(bool quiet);
bool IsQuiet();
void LogInfo(std::string_view message);

}  // namespace refinebox

#endif  // REFINEBOX_LOG_HPP_
