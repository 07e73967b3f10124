#pragma once

// Convolution-free two-stream video transformer. Each stream tokenizes a
// clip into T x N patch tokens plus one class token, runs spatial blocks
// (attention within a frame) followed by factorized spatiotemporal blocks
// (attention across frames per site, then within frames), and returns the
// normalized class embedding. RGB and flow class embeddings are fused by two
// linear+ReLU layers.
//
// Batched token layout: for a batch of B clips the token matrix has
// B*T*N + B rows. Patch (b, j, i) lives at row (b*T + j)*N + i and the class
// token of clip b at row B*T*N + b.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modgate/layers.hpp"

namespace modgate {

struct ClipSpec {
  std::size_t frames = 4;
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t patch = 8;
  std::size_t dim = 64;

  std::size_t patches_per_frame() const { return (height / patch) * (width / patch); }
  std::size_t patch_dim() const { return channels * patch * patch; }
  std::size_t seq_len() const { return frames * patches_per_frame() + 1; }
  Shape clip_shape() const { return {frames, channels, height, width}; }
  void validate() const;
};

struct EncoderConfig {
  std::size_t layers = 4;
  std::size_t st_blocks = 1;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 2;

  /// small / base / large -> (8,1) / (12,2) / (24,4) blocks.
  static EncoderConfig preset(std::string_view name);
  void validate(std::size_t dim) const;
};

struct TokenGrid {
  Tensor rows;  // [batch*frames*patches + batch, dim]
  std::size_t batch = 0;
  std::size_t frames = 0;
  std::size_t patches = 0;

  std::size_t seq_len() const { return frames * patches + 1; }
  std::size_t patch_row(std::size_t b, std::size_t j, std::size_t i) const { return (b * frames + j) * patches + i; }
  std::size_t cls_row(std::size_t b) const { return batch * frames * patches + b; }
};

/// Patch tokens attend to their own frame plus the clip's class token; the
/// class token attends to every token of its clip. With `with_cls` false the
/// class rows get no keys and patch rows attend only within their frame.
AttentionLayout spatial_layout(std::size_t batch, std::size_t frames, std::size_t patches, bool with_cls = true);
/// Patch tokens attend to the same spatial site across frames; class rows
/// get no keys.
AttentionLayout temporal_layout(std::size_t batch, std::size_t frames, std::size_t patches);

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t heads, Rng& rng);

  Tensor forward(const Tensor& x, const AttentionLayout& layout) const;
  Linear& qkv() { return qkv_; }
  Linear& proj() { return proj_; }

 private:
  Linear qkv_;
  Linear proj_;
  std::size_t dim_ = 0;
  std::size_t heads_ = 1;
};

/// z <- z + MSA(LN(z)); z <- z + MLP(LN(z)).
class SpatialBlock {
 public:
  SpatialBlock(ParameterStore& store, const std::string& name, std::size_t dim, const EncoderConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& z, const AttentionLayout& spatial) const;
  void zero_output_projections();

 private:
  LayerNorm ln_attn_;
  MultiHeadAttention attn_;
  LayerNorm ln_mlp_;
  Mlp mlp_;
};

/// z' = z + mask * LR(MSA_time(LN(z))); z <- z' + MSA_space(LN(z'));
/// z <- z + MLP(LN(z)). `mask` zeroes the class rows of the temporal path.
class SpatioTemporalBlock {
 public:
  SpatioTemporalBlock(ParameterStore& store, const std::string& name, std::size_t dim, const EncoderConfig& cfg,
                      Rng& rng);

  Tensor forward(const Tensor& z, const AttentionLayout& spatial, const AttentionLayout& temporal,
                 std::span<const double> temporal_mask) const;
  /// Output of the temporal sub-layer only (before the spatial stage).
  Tensor temporal_stage(const Tensor& z, const AttentionLayout& temporal, std::span<const double> temporal_mask) const;
  void zero_output_projections();

 private:
  LayerNorm ln_time_;
  MultiHeadAttention attn_time_;
  Linear temporal_fc_;
  LayerNorm ln_space_;
  MultiHeadAttention attn_space_;
  LayerNorm ln_mlp_;
  Mlp mlp_;
};

class StreamEncoder {
 public:
  StreamEncoder(ParameterStore& store, const std::string& name, const ClipSpec& spec, const EncoderConfig& cfg,
                Rng& rng);

  const ClipSpec& spec() const { return spec_; }
  const EncoderConfig& config() const { return config_; }

  /// z0 = x E + E_pos for every patch; the class token gets E_pos[0].
  TokenGrid tokenize(std::span<const NdArray* const> clips) const;
  /// Runs every block over the token rows (no final norm).
  Tensor run_blocks(const TokenGrid& grid) const;
  /// Final-normalized class embeddings, [batch, dim].
  Tensor encode(std::span<const NdArray* const> clips) const;

  std::vector<SpatialBlock>& spatial_blocks() { return spatial_; }
  std::vector<SpatioTemporalBlock>& st_blocks() { return st_; }
  Tensor& patch_projection() { return patch_proj_; }
  Tensor& positional() { return pos_; }
  Tensor& class_token() { return cls_; }

 private:
  ClipSpec spec_;
  EncoderConfig config_;
  Tensor patch_proj_;  // [patch_dim, dim]
  Tensor pos_;         // [seq_len, dim], row 0 is the class slot
  Tensor cls_;         // [dim]
  std::vector<SpatialBlock> spatial_;
  std::vector<SpatioTemporalBlock> st_;
  LayerNorm final_ln_;
};

/// Two linear+ReLU layers over concat(rgb, flow).
class StreamFusion {
 public:
  StreamFusion(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t out_dim, Rng& rng);

  Tensor forward(const Tensor& rgb_cls, const Tensor& flow_cls) const;
  std::size_t out_dim() const { return fc2_.out_features(); }
  Linear& fc1() { return fc1_; }
  Linear& fc2() { return fc2_; }

 private:
  std::size_t dim_;
  Linear fc1_;
  Linear fc2_;
};

class TwoStreamEncoder {
 public:
  TwoStreamEncoder(ParameterStore& store, const std::string& name, const ClipSpec& rgb_spec, const EncoderConfig& cfg,
                   std::size_t out_dim, Rng& rng);

  /// Visual embedding [batch, out_dim].
  Tensor forward(std::span<const NdArray* const> rgb, std::span<const NdArray* const> flow) const;
  StreamEncoder& rgb() { return rgb_; }
  StreamEncoder& flow() { return flow_; }
  StreamFusion& fusion() { return fusion_; }

 private:
  StreamEncoder rgb_;
  StreamEncoder flow_;
  StreamFusion fusion_;
};

}  // namespace modgate
