#include "timecast/nn.hpp"

#include <cmath>
#include <unordered_set>

#include "timecast/errors.hpp"

namespace timecast::nn {

Parameter::Parameter(std::string name_, Tensor t, float lr_mult)
    : tensor(std::move(t)), name(std::move(name_)), lr_multiplier(lr_mult) {
  if (lr_multiplier <= 0.f) {
    throw Error(errtag::kRange, "parameter " + name + ": lr_multiplier must be > 0");
  }
  tensor.enable_grad();
}

void check_unique_names(const ParamRefs& params) {
  std::unordered_set<std::string> seen;
  for (const Parameter* p : params) {
    if (!seen.insert(p->name).second) {
      throw Error(errtag::kConfig, "duplicate parameter name: " + p->name);
    }
  }
}

void zero_grads(const ParamRefs& params) {
  for (Parameter* p : params) p->tensor.zero_grad();
}

namespace {
Tensor kaiming(Shape shape, std::int64_t fan_in, RandomSource& rng) {
  Tensor t = Tensor::randn(std::move(shape), rng);
  const float scale = std::sqrt(2.f / static_cast<float>(fan_in));
  for (float& v : t.data()) v *= scale;
  return t;
}
}  // namespace

Conv2dLayer::Conv2dLayer(const std::string& name, std::int64_t in_ch,
                         std::int64_t out_ch, std::int64_t kernel, int stride_,
                         int padding_, RandomSource& rng, bool zero_init)
    : stride(stride_), padding(padding_) {
  const std::int64_t fan_in = in_ch * kernel * kernel;
  Tensor w = zero_init ? Tensor::zeros({out_ch, in_ch, kernel, kernel})
                       : kaiming({out_ch, in_ch, kernel, kernel}, fan_in, rng);
  weight = Parameter(name + ".weight", std::move(w));
  bias = Parameter(name + ".bias", Tensor::zeros({out_ch}));
}

void Conv2dLayer::collect(ParamRefs& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

LinearLayer::LinearLayer(const std::string& name, std::int64_t in,
                         std::int64_t out, RandomSource& rng, bool with_bias,
                         bool zero_init)
    : has_bias(with_bias) {
  Tensor w = zero_init ? Tensor::zeros({out, in}) : kaiming({out, in}, in, rng);
  weight = Parameter(name + ".weight", std::move(w));
  if (has_bias) bias = Parameter(name + ".bias", Tensor::zeros({out}));
}

void LinearLayer::collect(ParamRefs& out) {
  out.push_back(&weight);
  if (has_bias) out.push_back(&bias);
}

GroupNormLayer::GroupNormLayer(const std::string& name, std::int64_t channels,
                               int groups_)
    : groups(groups_) {
  gamma = Parameter(name + ".gamma", Tensor::full({channels}, 1.f));
  beta = Parameter(name + ".beta", Tensor::zeros({channels}));
}

void GroupNormLayer::collect(ParamRefs& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

CrossAttentionLayer::CrossAttentionLayer(const std::string& name,
                                         std::int64_t channels,
                                         std::int64_t token_dim,
                                         std::int64_t key_dim,
                                         RandomSource& rng) {
  wq = Parameter(name + ".wq", kaiming({key_dim, channels}, channels, rng));
  wk = Parameter(name + ".wk", kaiming({key_dim, token_dim}, token_dim, rng));
  wv = Parameter(name + ".wv", Tensor::zeros({channels, token_dim}));
}

void CrossAttentionLayer::collect(ParamRefs& out) {
  out.push_back(&wq);
  out.push_back(&wk);
  out.push_back(&wv);
}

}  // namespace timecast::nn
