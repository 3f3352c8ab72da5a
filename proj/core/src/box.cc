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

#include "refinebox/box.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace refinebox {

namespace {

void CheckFinite(std::initializer_list<double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument(std::string(what) + ": non-finite coordinate");
    }
  }
}

}  // namespace

Box::Box(double x1, double y1, double x2, double y2)
    : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
  CheckFinite({x1, y1, x2, y2}, "Box");
  if (x2 < x1 || y2 < y1) {
    std::ostringstream msg;
    msg << "Box: negative extent (" << x1 << ", " << y1 << ", " << x2 << ", "
        << y2 << ")";
    throw std::invalid_argument(msg.str());
  }
}

Box Box::FromXYWH(double x, double y, double w, double h) {
  return Box(x, y, x + w, y + h);
}

NormBox::NormBox(double cx, double cy, double w, double h)
    : cx_(cx), cy_(cy), w_(w), h_(h) {
  CheckFinite({cx, cy, w, h}, "NormBox");
  for (double v : {cx, cy, w, h}) {
    if (v < 0.0 || v > 1.0) {
      std::ostringstream msg;
      msg << "NormBox: field outside [0, 1] (" << cx << ", " << cy << ", " << w
          << ", " << h << ")";
      throw std::invalid_argument(msg.str());
    }
  }
}

double Iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double Giou(const Box& a, const Box& b) {
  const double iw =
      std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
  const double ih =
      std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  const double hull = (std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1())) *
                      (std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1()));
  if (hull <= 0.0) return 0.0;
  const double iou = uni > 0.0 ? inter / uni : 0.0;
  // Under containment hull == union exactly; rounding must not push the
  // slack below zero (which would put giou above iou).
  return iou - std::max(0.0, hull - uni) / hull;
}

double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double InverseSigmoid(double p) { return std::log(p / (1.0 - p)); }

double RefineCoordinate(double value, double delta, double eps) {
  const double p = std::clamp(value, eps, 1.0 - eps);
  const double e = std::exp(delta);
  return p * e / ((1.0 - p) + p * e);
}

NormBox RefineStep(const NormBox& box, const BoxDelta& delta, double eps) {
  if (!(eps > 0.0 && eps < 0.5)) {
    throw std::invalid_argument("RefineStep: eps must lie in (0, 0.5)");
  }
  return NormBox(RefineCoordinate(box.cx(), delta.dcx, eps),
                 RefineCoordinate(box.cy(), delta.dcy, eps),
                 RefineCoordinate(box.w(), delta.dw, eps),
                 RefineCoordinate(box.h(), delta.dh, eps));
}

NormBox ToNormBox(const Box& box, double image_w, double image_h) {
  if (!(image_w > 0.0 && image_h > 0.0)) {
    throw std::invalid_argument("ToNormBox: image size must be positive");
  }
  const double x1 = std::clamp(box.x1(), 0.0, image_w);
  const double x2 = std::clamp(box.x2(), 0.0, image_w);
  const double y1 = std::clamp(box.y1(), 0.0, image_h);
  const double y2 = std::clamp(box.y2(), 0.0, image_h);
  auto unit = [](double v) { return std::clamp(v, 0.0, 1.0); };
  return NormBox(unit((x1 + x2) * 0.5 / image_w),
                 unit((y1 + y2) * 0.5 / image_h), unit((x2 - x1) / image_w),
                 unit((y2 - y1) / image_h));
}

Box ToBox(const NormBox& box, double image_w, double image_h) {
  if (!(image_w > 0.0 && image_h > 0.0)) {
    throw std::invalid_argument("ToBox: image size must be positive");
  }
  const double hw = box.w() * 0.5;
  const double hh = box.h() * 0.5;
  return Box((box.cx() - hw) * image_w, (box.cy() - hh) * image_h,
             (box.cx() + hw) * image_w, (box.cy() + hh) * image_h);
}

AreaBin AreaBinOf(const Box& box) {
  constexpr double kSmallMax = 32.0 * 32.0;
  constexpr double kMediumMax = 96.0 * 96.0;
  const double area = box.area();
  if (area < kSmallMax) return AreaBin::kSmall;
  if (area < kMediumMax) return AreaBin::kMedium;
  return AreaBin::kLarge;
}

std::string_view AreaBinName(AreaBin bin) {
  switch (bin) {
    case AreaBin::kSmall:
      return "small";
    case AreaBin::kMedium:
      return "medium";
    case AreaBin::kLarge:
      return "large";
  }
  return "unknown";
}

}  // namespace refinebox
