#pragma once

#include <optional>
#include <string>
#include <vector>

#include "timecast/ops.hpp"
#include "timecast/random.hpp"
#include "timecast/tensor.hpp"

namespace timecast::nn {

// Learnable tensor with a unique path name. lr_multiplier scales the
// optimizer step for this parameter only.
struct Parameter {
  Tensor tensor;
  std::string name;
  float lr_multiplier = 1.f;

  Parameter() = default;
  Parameter(std::string name_, Tensor t, float lr_mult = 1.f);
};

using ParamRefs = std::vector<Parameter*>;

// Throws if two parameters share a name.
void check_unique_names(const ParamRefs& params);
void zero_grads(const ParamRefs& params);

// ------------------------------------------------------------------- layers

struct Conv2dLayer {
  Parameter weight;  // [F,C,kh,kw]
  Parameter bias;    // [F]
  int stride = 1;
  int padding = 0;

  Conv2dLayer() = default;
  // Kaiming-style init; zero_init zeroes the weight (used for block outputs).
  Conv2dLayer(const std::string& name, std::int64_t in_ch, std::int64_t out_ch,
              std::int64_t kernel, int stride, int padding, RandomSource& rng,
              bool zero_init = false);

  Tensor forward(const Tensor& x) const {
    return ops::conv2d(x, weight.tensor, bias.tensor, stride, padding);
  }
  void collect(ParamRefs& out);
};

struct LinearLayer {
  Parameter weight;  // [out,in]
  Parameter bias;    // [out]
  bool has_bias = true;

  LinearLayer() = default;
  LinearLayer(const std::string& name, std::int64_t in, std::int64_t out,
              RandomSource& rng, bool with_bias = true, bool zero_init = false);

  Tensor forward(const Tensor& x) const {
    return has_bias ? ops::linear(x, weight.tensor, bias.tensor)
                    : ops::linear(x, weight.tensor);
  }
  void collect(ParamRefs& out);
};

struct GroupNormLayer {
  Parameter gamma;  // [C], init 1
  Parameter beta;   // [C], init 0
  int groups = 4;

  GroupNormLayer() = default;
  GroupNormLayer(const std::string& name, std::int64_t channels, int groups);

  Tensor forward(const Tensor& x) const {
    return ops::group_norm(x, gamma.tensor, beta.tensor, groups);
  }
  void collect(ParamRefs& out);
};

struct CrossAttentionLayer {
  Parameter wq;  // [Dk,C]
  Parameter wk;  // [Dk,D]
  Parameter wv;  // [C,D], zero-init so the block starts as identity

  CrossAttentionLayer() = default;
  CrossAttentionLayer(const std::string& name, std::int64_t channels,
                      std::int64_t token_dim, std::int64_t key_dim,
                      RandomSource& rng);

  Tensor forward(const Tensor& query_map, const Tensor& tokens) const {
    return ops::cross_attention(query_map, tokens, wq.tensor, wk.tensor,
                                wv.tensor);
  }
  void collect(ParamRefs& out);
};

}  // namespace timecast::nn
