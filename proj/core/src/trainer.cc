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

#include "refinebox/trainer.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "refinebox/errors.hpp"
#include "refinebox/log.hpp"

namespace refinebox {

void LossWeights::Validate() const {
  if (w_l1 < 0.0 || w_giou < 0.0) throw std::invalid_argument("LossWeights: negative weight");
  if (w_l1 == 0.0 && w_giou == 0.0) throw std::invalid_argument("LossWeights: both weights zero");
}

void TrainConfig::Validate() const {
  if (epochs <= 0) throw std::invalid_argument("TrainConfig: epochs must be positive");
  if (batch_size <= 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (learning_rate < 0.0) throw std::invalid_argument("TrainConfig: negative learning rate");
  if (weight_decay < 0.0) throw std::invalid_argument("TrainConfig: negative weight decay");
  if (clip_max_norm < 0.0) throw std::invalid_argument("TrainConfig: negative clip norm");
  if (lr_drop_factor <= 0.0) throw std::invalid_argument("TrainConfig: lr_drop_factor must be positive");
  match.Validate();
  loss.Validate();
}

Targets BuildTargets(const TrainSample& sample, const MatchWeights& w) {
  Targets t;
  std::vector<GtInstance> gts;
  std::vector<std::size_t> gt_index;
  for (std::size_t i = 0; i < sample.gts.size(); ++i) {
    if (sample.gts[i].iscrowd) continue;
    gts.push_back(sample.gts[i]);
    gt_index.push_back(i);
  }
  if (gts.empty() || sample.preds.empty()) return t;
  const ImageSize size = sample.image_size();
  const Assignment a = MatchImage(sample.preds, gts, w, size);
  for (const auto& [p, g] : a.pairs) {
    t.indices.push_back(p);
    t.boxes.push_back(ToNormBox(gts[g].box, size.width, size.height));
  }
  return t;
}

template <typename T>
Var<T> RegressionLoss(std::span<const Var<T>> stage_boxes, const Tensor<T>& targets,
                      const LossWeights& w, std::optional<double> normalizer) {
  w.Validate();
  const double n = static_cast<double>(targets.empty() ? 0 : targets.dim(0));
  if (n == 0.0) {
    LogInfo("regression loss: no matched targets, loss is zero");
    return Constant(Tensor<T>({1}));
  }
  std::vector<Var<T>> terms;
  for (const auto& stage : stage_boxes) {
    if (stage.shape() != targets.shape()) {
      throw std::invalid_argument("RegressionLoss: stage " + ShapeString(stage.shape()) +
                                  " does not match targets " + ShapeString(targets.shape()));
    }
    terms.push_back(BoxRegressionLoss(stage, targets, w.w_l1, w.w_giou));
  }
  const double denom = normalizer.value_or(n);
  return Scale(SumScalars<T>(terms), 1.0 / denom);
}

template Var<float> RegressionLoss(std::span<const Var<float>>, const Tensor<float>&,
                                   const LossWeights&, std::optional<double>);
template Var<double> RegressionLoss(std::span<const Var<double>>, const Tensor<double>&,
                                    const LossWeights&, std::optional<double>);

namespace {

std::vector<std::size_t> ScoreOrder(std::span<const Detection> preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].score > preds[b].score;
  });
  return order;
}

struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  long step = 0;
};

}  // namespace

std::vector<Detection> RefineTopK(const FeaturePyramid& features,
                                  std::span<const Detection> preds,
                                  const RefinerParams<float>& params, int top_k) {
  std::vector<Detection> out(preds.begin(), preds.end());
  if (top_k <= 0 || preds.empty()) return out;
  const std::vector<std::size_t> order = ScoreOrder(preds);
  const std::size_t k = std::min(static_cast<std::size_t>(top_k), preds.size());
  const double iw = features.image_w, ih = features.image_h;
  std::vector<NormBox> inputs;
  for (std::size_t j = 0; j < k; ++j) inputs.push_back(ToNormBox(preds[order[j]].box, iw, ih));
  const auto stages = RefineForward(features, inputs, params);
  const auto& last = stages.back();
  for (std::size_t j = 0; j < k; ++j) {
    if (last[j] == inputs[j]) continue;
    out[order[j]].box = ToBox(last[j], iw, ih);
  }
  return out;
}

ValidationMetrics EvaluateRefiner(std::span<const TrainSample> samples,
                                  const RefinerParams<float>& params,
                                  std::span<const CategoryId> categories,
                                  const MatchWeights& w) {
  ValidationMetrics vm;
  std::vector<Detection> raw_all, refined_all;
  std::vector<GtInstance> gts_all;
  double sum_raw = 0.0, sum_refined = 0.0, sum_first = 0.0;
  const int top_k = params.config().top_k;
  for (const auto& s : samples) {
    const auto refined = RefineTopK(s.features, s.preds, params, top_k);
    raw_all.insert(raw_all.end(), s.preds.begin(), s.preds.end());
    refined_all.insert(refined_all.end(), refined.begin(), refined.end());
    gts_all.insert(gts_all.end(), s.gts.begin(), s.gts.end());

    const Targets t = BuildTargets(s, w);
    const auto order = ScoreOrder(s.preds);
    std::vector<std::size_t> rank(s.preds.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
    const ImageSize size = s.image_size();
    std::vector<NormBox> firsts_in;
    std::vector<std::size_t> firsts_idx;
    for (std::size_t j = 0; j < t.indices.size(); ++j) {
      const std::size_t p = t.indices[j];
      if (rank[p] >= static_cast<std::size_t>(top_k)) continue;
      const Box gt_box = ToBox(t.boxes[j], size.width, size.height);
      sum_raw += Iou(s.preds[p].box, gt_box);
      sum_refined += Iou(refined[p].box, gt_box);
      firsts_in.push_back(ToNormBox(s.preds[p].box, size.width, size.height));
      firsts_idx.push_back(j);
      ++vm.matched;
    }
    if (!firsts_in.empty()) {
      const auto stages = RefineForward(s.features, firsts_in, params);
      for (std::size_t q = 0; q < firsts_in.size(); ++q) {
        const Box gt_box = ToBox(t.boxes[firsts_idx[q]], size.width, size.height);
        sum_first += Iou(ToBox(stages.front()[q], size.width, size.height), gt_box);
      }
    }
  }
  if (vm.matched > 0) {
    const double n = static_cast<double>(vm.matched);
    vm.mean_iou_raw = sum_raw / n;
    vm.mean_iou_refined = sum_refined / n;
    vm.mean_iou_first_stage = sum_first / n;
  }
  vm.baseline = CocoEval(raw_all, gts_all, categories);
  vm.refined = CocoEval(refined_all, gts_all, categories);
  return vm;
}

TrainResult Train(std::span<const TrainSample> dataset, const TrainConfig& config,
                  const RefinerConfig& refiner, std::optional<ValidationSplit> validation,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  config.Validate();
  refiner.Validate();
  if (dataset.empty()) throw std::invalid_argument("Train: empty dataset");
  const std::vector<int> channels = dataset.front().features.Channels();
  for (const auto& s : dataset) {
    if (s.features.Channels() != channels) {
      throw DataError("Train: feature channels differ between samples");
    }
  }

  std::vector<Targets> targets;
  targets.reserve(dataset.size());
  for (const auto& s : dataset) targets.push_back(BuildTargets(s, config.match));

  TrainResult result{RefinerParams<float>::Init(refiner, channels, config.seed), {}};
  RefinerParams<float>& params = result.params;
  auto named = params.Named();
  AdamState adam;
  for (const auto& [name, v] : named) {
    adam.m.emplace_back(v.value().numel(), 0.0f);
    adam.v.emplace_back(v.value().numel(), 0.0f);
  }

  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  long batch_id = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.learning_rate *
                      (epoch >= config.lr_drop_epoch ? config.lr_drop_factor : 1.0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    double epoch_boxes = 0.0;

    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_id) {
      const std::size_t end = std::min(order.size(), start + batch);
      double boxes = 0.0;
      for (std::size_t i = start; i < end; ++i) boxes += static_cast<double>(targets[order[i]].indices.size());
      if (boxes == 0.0) continue;

      params.ZeroGrad();
      double batch_loss = 0.0;
      try {
        for (std::size_t i = start; i < end; ++i) {
          const TrainSample& s = dataset[order[i]];
          const Targets& t = targets[order[i]];
          if (t.indices.empty()) continue;
          std::vector<NormBox> inputs;
          const ImageSize size = s.image_size();
          for (std::size_t p : t.indices) inputs.push_back(ToNormBox(s.preds[p].box, size.width, size.height));
          const PyramidVars<float> pyramid = FpnForward(params, s.features);
          const auto stages = RefineForwardGraph(pyramid, Constant(BoxesToTensor<float>(inputs)), params);
          const Var<float> loss = RegressionLoss<float>(stages, BoxesToTensor<float>(t.boxes),
                                                        config.loss, boxes);
          Backward(loss);
          batch_loss += loss.value()[0];
        }
      } catch (const NumericError& e) {
        std::ostringstream msg;
        msg << "batch " << batch_id << " (epoch " << epoch << "): " << e.what();
        throw NumericError(msg.str());
      }
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "non-finite loss in batch " << batch_id << " (epoch " << epoch << ")";
        throw NumericError(msg.str());
      }
      epoch_loss += batch_loss * boxes;
      epoch_boxes += boxes;

      double norm_sq = 0.0;
      for (const auto& [name, v] : named) {
        if (const auto* g = v.grad()) {
          for (float x : g->data()) norm_sq += static_cast<double>(x) * x;
        }
      }
      const double norm = std::sqrt(norm_sq);
      if (!std::isfinite(norm)) {
        std::ostringstream msg;
        msg << "non-finite gradient in batch " << batch_id << " (epoch " << epoch << ")";
        throw NumericError(msg.str());
      }
      const double clip = (config.clip_max_norm > 0.0 && norm > config.clip_max_norm)
                              ? config.clip_max_norm / (norm + 1e-6)
                              : 1.0;

      ++adam.step;
      const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(adam.step));
      const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(adam.step));
      for (std::size_t k = 0; k < named.size(); ++k) {
        auto& var = named[k].second;
        const Tensor<float>* g = var.grad();
        auto p = var.mutable_value().data();
        auto& m = adam.m[k];
        auto& v = adam.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double gi = g ? static_cast<double>((*g)[i]) * clip : 0.0;
          m[i] = static_cast<float>(config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * gi);
          v[i] = static_cast<float>(config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * gi * gi);
          if (lr == 0.0) continue;
          const double mhat = m[i] / bc1;
          const double vhat = v[i] / bc2;
          double value = p[i];
          value -= lr * config.weight_decay * value;
          value -= lr * mhat / (std::sqrt(vhat) + config.adam_eps);
          p[i] = static_cast<float>(value);
        }
      }
    }
    params.ZeroGrad();

    EpochMetrics em;
    em.epoch = epoch;
    em.learning_rate = lr;
    em.train_loss = epoch_boxes > 0.0 ? epoch_loss / epoch_boxes : 0.0;
    if (validation) {
      em.validation = EvaluateRefiner(validation->samples, params, validation->categories,
                                      config.match);
    }
    std::ostringstream msg;
    msg << "epoch " << epoch << " lr " << lr << " loss " << em.train_loss;
    if (em.validation) {
      msg << " val_iou " << em.validation->mean_iou_raw << " -> "
          << em.validation->mean_iou_refined << " val_ap " << em.validation->baseline.ap
          << " -> " << em.validation->refined.ap;
    }
    LogInfo(msg.str());
    if (on_epoch) on_epoch(em);
    result.epochs.push_back(std::move(em));
  }
  return result;
}

std::uint32_t SampleChecksum(std::span<const TrainSample> samples) {
  uLong crc = crc32(0L, Z_NULL, 0);
  auto feed = [&crc](const void* data, std::size_t size) {
    crc = crc32(crc, static_cast<const Bytef*>(data), static_cast<uInt>(size));
  };
  for (const auto& s : samples) {
    feed(&s.image_id, sizeof(s.image_id));
    for (const auto& l : s.features.levels) {
      feed(l.data.raw(), l.data.numel() * sizeof(float));
      feed(&l.stride, sizeof(l.stride));
    }
    for (const auto& d : s.preds) {
      const double fields[] = {d.score, d.box.x1(), d.box.y1(), d.box.x2(), d.box.y2()};
      feed(fields, sizeof(fields));
      feed(&d.category_id, sizeof(d.category_id));
      if (d.class_probs) {
        for (const auto& [c, p] : *d.class_probs) {
          feed(&c, sizeof(c));
          feed(&p, sizeof(p));
        }
      }
    }
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace refinebox
