#pragma once

#include "jdiff/tensor.hpp"

namespace jdiff {

// "Same" cross-correlation when stride == 1 and padding == (k-1)/2.
// input [N,C,H,W], weight [K,C,kh,kw], bias [K].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding);

// Per-group standardization over (channels-in-group, H, W) followed by a
// per-channel affine. eps 1e-5 absorbs zero-variance inputs.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gain, const Tensor& bias);

// x [N,D], weight [O,D], bias [O] -> [N,O].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// x [N,C,H,W] + b [N,C] broadcast over spatial positions.
Tensor add_channel_bias(const Tensor& x, const Tensor& b);

// Nearest-neighbor 2x spatial upsampling.
Tensor upsample_nearest2x(const Tensor& x);

// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& x);

// [N,C,H,W] <-> [N,HW,C] (for attention over spatial positions).
Tensor nchw_to_nlc(const Tensor& x);
Tensor nlc_to_nchw(const Tensor& x, int h, int w);

// a [N,P,Q] x b [N,Q,R] -> [N,P,R]
Tensor bmm(const Tensor& a, const Tensor& b);
// [N,P,Q] -> [N,Q,P]
Tensor transpose_last2(const Tensor& x);
// Softmax over the last dimension of a rank-3 tensor.
Tensor softmax_lastdim(const Tensor& x);

// logits [N,K], labels in [0,K) -> mean negative log-likelihood.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
// Row softmax of [N,K] logits (no graph; evaluation helper).
std::vector<double> softmax_rows(const Tensor& logits);

// Blocked sin/cos positional features: [sin(t*w_0..), cos(t*w_0..)] with
// w_i = 10000^(-i/(dim/2)).
Tensor sinusoidal_time_embedding(int64_t t, int dim);
// Batch variant: one row per timestep, [N,dim].
Tensor sinusoidal_time_embedding_batch(const std::vector<int>& ts, int dim);

}  // namespace jdiff
