#include "gdgt/glff.hpp"

#include <cmath>

namespace gdgt {

GlffParams GlffParams::create(std::size_t channels, Rng& rng, const GlffOptions& options) {
  if (options.heads == 0 || channels % options.heads != 0) {
    throw ShapeError("GLFF: embedding dim " + std::to_string(channels) + " not divisible by " +
                     std::to_string(options.heads) + " heads");
  }
  if (options.window == 0) throw ShapeError("GLFF: window must be positive");
  const std::size_t C = channels, hidden = options.ffn_ratio * channels;
  GlffParams p;
  p.options = options;
  p.channels = C;
  p.norm1_gamma = Tensor::full({C}, 1.0, true);
  p.norm1_beta = Tensor::zeros({C}, true);
  p.q_weight = fan_in_uniform({C, C}, C, rng);
  p.q_bias = Tensor::zeros({C}, true);
  p.k_weight = fan_in_uniform({C, C}, C, rng);
  p.k_bias = Tensor::zeros({C}, true);
  p.v_weight = fan_in_uniform({C, C}, C, rng);
  p.v_bias = Tensor::zeros({C}, true);
  p.out_weight = fan_in_uniform({C, C}, C, rng);
  p.out_bias = Tensor::zeros({C}, true);
  p.norm2_gamma = Tensor::full({C}, 1.0, true);
  p.norm2_beta = Tensor::zeros({C}, true);
  p.ffn1_weight = kaiming_normal({C, hidden}, C, rng);
  p.ffn1_bias = Tensor::zeros({hidden}, true);
  p.ffn2_weight = fan_in_uniform({hidden, C}, hidden, rng);
  p.ffn2_bias = Tensor::zeros({C}, true);
  if (options.local_branch) {
    p.dw_weight = kaiming_normal({C, 1, 3, 3}, 9, rng);
    p.dw_bias = Tensor::zeros({C}, true);
    p.pw_weight = fan_in_uniform({C, C, 1, 1}, C, rng);
    p.pw_bias = Tensor::zeros({C}, true);
    p.fusion_logits = options.fusion == FusionWeights::scalar ? Tensor::zeros({2}, true) : Tensor::zeros({2, C}, true);
  }
  return p;
}

Tensor GlffParams::fusion_weights() const { return softmax(fusion_logits, 0); }

void GlffParams::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "norm1.gamma", norm1_gamma});
  out.push_back({prefix + "norm1.beta", norm1_beta});
  out.push_back({prefix + "qkv_proj.q.weight", q_weight});
  out.push_back({prefix + "qkv_proj.q.bias", q_bias});
  out.push_back({prefix + "qkv_proj.k.weight", k_weight});
  out.push_back({prefix + "qkv_proj.k.bias", k_bias});
  out.push_back({prefix + "qkv_proj.v.weight", v_weight});
  out.push_back({prefix + "qkv_proj.v.bias", v_bias});
  out.push_back({prefix + "out_proj.weight", out_weight});
  out.push_back({prefix + "out_proj.bias", out_bias});
  out.push_back({prefix + "norm2.gamma", norm2_gamma});
  out.push_back({prefix + "norm2.beta", norm2_beta});
  out.push_back({prefix + "ffn.0.weight", ffn1_weight});
  out.push_back({prefix + "ffn.0.bias", ffn1_bias});
  out.push_back({prefix + "ffn.1.weight", ffn2_weight});
  out.push_back({prefix + "ffn.1.bias", ffn2_bias});
  if (options.local_branch) {
    out.push_back({prefix + "local_conv.depthwise.weight", dw_weight});
    out.push_back({prefix + "local_conv.depthwise.bias", dw_bias});
    out.push_back({prefix + "local_conv.pointwise.weight", pw_weight});
    out.push_back({prefix + "local_conv.pointwise.bias", pw_bias});
    out.push_back({prefix + "fusion_logits", fusion_logits});
  }
}

TokenGroups patch_embed(const Tensor& x, std::size_t window) {
  const auto& s = x.shape();
  if (s.size() != 4) throw ShapeError("patch_embed: expected BxCxHxW, got " + shape_str(s));
  if (window == 0 || s[2] % window != 0 || s[3] % window != 0) {
    throw ShapeError("patch_embed: " + shape_str(s) + " not divisible into " + std::to_string(window) + "x" +
                     std::to_string(window) + " windows");
  }
  const std::size_t B = s[0], C = s[1], nh = s[2] / window, nw = s[3] / window;
  Tensor t = reshape(x, {B, C, nh, window, nw, window});
  t = permute(t, {0, 2, 4, 3, 5, 1});
  return {reshape(t, {B, nh * nw * window * window, C}), s[2], s[3], window};
}

Tensor patch_unembed(const Tensor& tokens, const TokenGroups& layout) {
  const std::size_t B = tokens.dim(0), C = tokens.dim(2), w = layout.window;
  const std::size_t nh = layout.height / w, nw = layout.width / w;
  Tensor t = reshape(tokens, {B, nh, nw, w, w, C});
  t = permute(t, {0, 5, 1, 3, 2, 4});
  return reshape(t, {B, C, layout.height, layout.width});
}

Tensor multi_head_attention(const TokenGroups& groups, const GlffParams& params, Tensor* probabilities) {
  const Tensor& x = groups.tokens;
  const std::size_t B = x.dim(0), C = x.dim(2), heads = params.options.heads, dh = C / heads;
  const std::size_t G = groups.groups(), T = groups.group_size();
  if (C != params.channels) {
    throw ShapeError("attention: token dim " + std::to_string(C) + " != embedding dim " + std::to_string(params.channels));
  }
  auto split_heads = [&](const Tensor& t) { return permute(reshape(t, {B * G, T, heads, dh}), {0, 2, 1, 3}); };
  Tensor q = split_heads(linear(x, params.q_weight, params.q_bias));
  Tensor k = split_heads(linear(x, params.k_weight, params.k_bias));
  Tensor v = split_heads(linear(x, params.v_weight, params.v_bias));
  Tensor scores = scale(matmul(q, permute(k, {0, 1, 3, 2})), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor attn = softmax(scores, -1);
  if (probabilities) *probabilities = attn;
  Tensor o = permute(matmul(attn, v), {0, 2, 1, 3});
  return linear(reshape(o, {B, G * T, C}), params.out_weight, params.out_bias);
}

Tensor local_branch(const Tensor& x, const GlffParams& params) {
  if (!params.options.local_branch) throw std::logic_error("local_branch: block configured without a conv branch");
  Tensor h = conv2d(pad_reflect(x, 1), params.dw_weight, params.dw_bias, 1, 0, params.channels);
  return conv2d(relu(h), params.pw_weight, params.pw_bias);
}

Tensor fuse(const Tensor& global_feat, const Tensor& local_feat, const GlffParams& params) {
  if (global_feat.shape() != local_feat.shape()) {
    throw ShapeError("fuse: global " + shape_str(global_feat.shape()) + " and local " +
                     shape_str(local_feat.shape()) + " differ");
  }
  Tensor w = params.fusion_weights();
  Tensor w_global, w_local;
  if (params.options.fusion == FusionWeights::scalar) {
    w_global = slice(w, 0, 0, 1);
    w_local = slice(w, 0, 1, 1);
  } else {
    w_global = reshape(slice(w, 0, 0, 1), {params.channels});
    w_local = reshape(slice(w, 0, 1, 1), {params.channels});
  }
  return mul(global_feat, w_global) + mul(local_feat, w_local);
}

Tensor glff_forward(const Tensor& x, const GlffParams& params) {
  if (x.ndim() != 4 || x.dim(1) != params.channels) {
    throw ShapeError("glff_forward: expected Bx" + std::to_string(params.channels) + "xHxW, got " + shape_str(x.shape()));
  }
  TokenGroups g = patch_embed(x, params.options.window);
  TokenGroups normed = g;
  normed.tokens = layer_norm(g.tokens, params.norm1_gamma, params.norm1_beta);
  Tensor a = multi_head_attention(normed, params);
  Tensor h = layer_norm(a, params.norm2_gamma, params.norm2_beta);
  h = linear(relu(linear(h, params.ffn1_weight, params.ffn1_bias)), params.ffn2_weight, params.ffn2_bias);
  Tensor global_feat = patch_unembed(h, g);
  if (!params.options.local_branch) return x + global_feat;
  return x + fuse(global_feat, local_branch(x, params), params);
}

}  // namespace gdgt
