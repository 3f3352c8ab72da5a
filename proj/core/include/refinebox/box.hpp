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

#ifndef REFINEBOX_BOX_HPP_
#define REFINEBOX_BOX_HPP_

#include <string_view>

namespace refinebox {

// Absolute corner-form rectangle in pixels. Zero extent is legal, negative
// extent and non-finite coordinates are rejected by the constructor.
class Box {
 public:
  Box() = default;
  Box(double x1, double y1, double x2, double y2);

  // COCO [x, y, w, h] convention.
  static Box FromXYWH(double x, double y, double w, double h);

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  double area() const { return width() * height(); }

  friend bool operator==(const Box&, const Box&) = default;

 private:
  double x1_ = 0.0;
  double y1_ = 0.0;
  double x2_ = 0.0;
  double y2_ = 0.0;
};

// Center-form box normalized by the image size; every field in [0, 1].
class NormBox {
 public:
  NormBox() = default;
  NormBox(double cx, double cy, double w, double h);

  double cx() const { return cx_; }
  double cy() const { return cy_; }
  double w() const { return w_; }
  double h() const { return h_; }

  friend bool operator==(const NormBox&, const NormBox&) = default;

 private:
  double cx_ = 0.0;
  double cy_ = 0.0;
  double w_ = 0.0;
  double h_ = 0.0;
};

// Additive update in inverse-sigmoid space, one entry per NormBox field.
struct BoxDelta {
  double dcx = 0.0;
  double dcy = 0.0;
  double dw = 0.0;
  double dh = 0.0;

  BoxDelta operator-() const { return {-dcx, -dcy, -dw, -dh}; }
  friend bool operator==(const BoxDelta&, const BoxDelta&) = default;
};

inline constexpr double kDefaultClampEps = 1e-5;

double Iou(const Box& a, const Box& b);
double Giou(const Box& a, const Box& b);

double Sigmoid(double x);
double InverseSigmoid(double p);

// sigmoid(inverse_sigmoid(clamp(v, eps, 1 - eps)) + delta), evaluated as
// p * e^d / ((1 - p) + p * e^d) so a zero delta returns the clamped input
// bit-for-bit.
double RefineCoordinate(double value, double delta, double eps);
NormBox RefineStep(const NormBox& box, const BoxDelta& delta,
                   double eps = kDefaultClampEps);

NormBox ToNormBox(const Box& box, double image_w, double image_h);
Box ToBox(const NormBox& box, double image_w, double image_h);

enum class AreaBin { kSmall, kMedium, kLarge };

AreaBin AreaBinOf(const Box& box);
std::string_view AreaBinName(AreaBin bin);

}  // namespace refinebox

#endif  // REFINEBOX_BOX_HPP_
