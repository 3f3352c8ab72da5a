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

#ifndef REFINEBOX_REPORT_HPP_
#define REFINEBOX_REPORT_HPP_

#include <span>
#include <string>

#include "refinebox/coco_eval.hpp"
#include "refinebox/ideal.hpp"
#include "refinebox/trainer.hpp"

namespace refinebox {

// JSON reports with sorted keys and every real rounded to 6 significant
// digits, so equal inputs give byte-identical files.
std::string EvalReportJson(const EvalSummary& summary);
std::string IdealReportJson(const IdealReport& report);
std::string TrainLogJson(std::span<const EpochMetrics> epochs);

// "metric,value" rows for plotting.
std::string EvalReportCsv(const EvalSummary& summary);

// Rounds to 6 significant digits; identity on 0 and non-finite values.
double RoundSignificant(double value);

}  // namespace refinebox

#endif  // REFINEBOX_REPORT_HPP_
