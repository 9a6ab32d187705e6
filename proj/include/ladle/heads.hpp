#pragma once

#include "ladle/encoders.hpp"

namespace ladle {

// Two-layer feed-forward heads over the fused CLS token: one binary logit,
// four multi-label logits in the fixed (FS, FA, TS, TA) order.

void init_heads(ParamStore& store, const ModelConfig& cfg, uint64_t seed);

int binary_head_graph(BuildCtx& ctx, int cls);      // 1x1 logit
int multilabel_head_graph(BuildCtx& ctx, int cls);  // 1x4 logits

// BCE on the binary logit plus the mean of four per-class BCEs.
int classification_loss_graph(Graph& g, int bin_logit, int multi_logits,
                              const LabelVector& labels);
int total_loss_graph(Graph& g, int align, int cls, double w_align = 1.0, double w_cls = 1.0);

double binary_head(const Tensor& z_cls, const ParamStore& params, const ModelConfig& cfg);
Tensor multilabel_head(const Tensor& z_cls, const ParamStore& params, const ModelConfig& cfg);
double classification_loss(double bin_logit, const Tensor& multi_logits,
                           const LabelVector& labels);
double total_loss(double align, double cls, double w_align = 1.0, double w_cls = 1.0);

double sigmoid(double x);

}  // namespace ladle
