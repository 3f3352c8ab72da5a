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

#include "refinebox/report.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "json.hpp"

namespace refinebox {

using nlohmann::json;

double RoundSignificant(double value) {
  if (value == 0.0 || !std::isfinite(value)) return value;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return std::strtod(buf, nullptr);
}

namespace {

json SummaryJson(const EvalSummary& s) {
  json out = json::object();
  const auto values = s.Values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[std::string(EvalSummary::kNames[i])] = RoundSignificant(values[i]);
  }
  return out;
}

json Rounded(std::span<const double> values) {
  json out = json::array();
  for (double v : values) out.push_back(RoundSignificant(v));
  return out;
}

std::string Dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

std::string EvalReportJson(const EvalSummary& summary) { return Dump(SummaryJson(summary)); }

std::string IdealReportJson(const IdealReport& r) {
  json out = json::object();
  out["actual"] = SummaryJson(r.actual);
  out["ideal_localization"] = SummaryJson(r.ideal_localization);
  out["ideal_classification"] = SummaryJson(r.ideal_classification);
  out["localization_delta"] = SummaryJson(r.localization_delta);
  out["classification_delta"] = SummaryJson(r.classification_delta);
  json at = json::object();
  at["iou_thresholds"] = Rounded(r.thresholds);
  at["actual"] = Rounded(r.actual_at);
  at["ideal_localization"] = Rounded(r.ideal_localization_at);
  at["ideal_classification"] = Rounded(r.ideal_classification_at);
  out["ap_at_iou"] = std::move(at);
  return Dump(out);
}

std::string TrainLogJson(std::span<const EpochMetrics> epochs) {
  json out = json::array();
  for (const auto& e : epochs) {
    json row = json::object();
    row["epoch"] = e.epoch;
    row["train_loss"] = RoundSignificant(e.train_loss);
    row["learning_rate"] = RoundSignificant(e.learning_rate);
    if (e.validation) {
      const auto& v = *e.validation;
      row["val"] = {{"mean_iou_raw", RoundSignificant(v.mean_iou_raw)},
                    {"mean_iou_refined", RoundSignificant(v.mean_iou_refined)},
                    {"mean_iou_first_stage", RoundSignificant(v.mean_iou_first_stage)},
                    {"matched", v.matched},
                    {"baseline", SummaryJson(v.baseline)},
                    {"refined", SummaryJson(v.refined)}};
    }
    out.push_back(std::move(row));
  }
  return Dump(out);
}

std::string EvalReportCsv(const EvalSummary& summary) {
  std::ostringstream out;
  out << "metric,value\n";
  const auto values = summary.Values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", values[i]);
    out << EvalSummary::kNames[i] << ',' << buf << '\n';
  }
  return out.str();
}

}  // namespace refinebox
