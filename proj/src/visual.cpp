#include "modgate/visual.hpp"

#include <numeric>

namespace modgate {

void ClipSpec::validate() const {
  if (frames == 0 || channels == 0 || height == 0 || width == 0 || patch == 0 || dim == 0) {
    throw ConfigError("clip spec: all sizes must be positive");
  }
  if (height % patch != 0 || width % patch != 0) {
    throw ConfigError("clip spec: height and width must be divisible by the patch size");
  }
}

EncoderConfig EncoderConfig::preset(std::string_view name) {
  EncoderConfig c;
  if (name == "small") {
    c.layers = 8;
    c.st_blocks = 1;
  } else if (name == "base") {
    c.layers = 12;
    c.st_blocks = 2;
  } else if (name == "large") {
    c.layers = 24;
    c.st_blocks = 4;
  } else {
    throw ConfigError("unknown encoder preset: " + std::string(name));
  }
  return c;
}

void EncoderConfig::validate(std::size_t dim) const {
  if (st_blocks < 1 || st_blocks > layers) throw ConfigError("encoder: need 1 <= st_blocks <= layers");
  if (heads == 0 || dim % heads != 0) throw ConfigError("encoder: dim must be divisible by heads");
  if (mlp_ratio == 0) throw ConfigError("encoder: mlp_ratio must be positive");
}

AttentionLayout spatial_layout(std::size_t batch, std::size_t frames, std::size_t patches, bool with_cls) {
  const std::size_t patch_rows = batch * frames * patches;
  AttentionLayout l;
  l.offsets.reserve(patch_rows + batch + 1);
  l.offsets.push_back(0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < frames; ++j) {
      for (std::size_t i = 0; i < patches; ++i) {
        if (with_cls) l.keys.push_back(static_cast<std::uint32_t>(patch_rows + b));
        const std::size_t first = (b * frames + j) * patches;
        for (std::size_t i2 = 0; i2 < patches; ++i2) l.keys.push_back(static_cast<std::uint32_t>(first + i2));
        l.offsets.push_back(l.keys.size());
      }
    }
  }
  for (std::size_t b = 0; b < batch; ++b) {
    if (with_cls) {
      l.keys.push_back(static_cast<std::uint32_t>(patch_rows + b));
      for (std::size_t r = 0; r < frames * patches; ++r) {
        l.keys.push_back(static_cast<std::uint32_t>(b * frames * patches + r));
      }
    }
    l.offsets.push_back(l.keys.size());
  }
  return l;
}

AttentionLayout temporal_layout(std::size_t batch, std::size_t frames, std::size_t patches) {
  AttentionLayout l;
  l.offsets.push_back(0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < frames; ++j) {
      for (std::size_t i = 0; i < patches; ++i) {
        for (std::size_t j2 = 0; j2 < frames; ++j2) {
          l.keys.push_back(static_cast<std::uint32_t>((b * frames + j2) * patches + i));
        }
        l.offsets.push_back(l.keys.size());
      }
    }
  }
  for (std::size_t b = 0; b < batch; ++b) l.offsets.push_back(l.keys.size());
  return l;
}

// ---------------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t dim,
                                       std::size_t heads, Rng& rng)
    : qkv_(store, name + ".qkv", dim, 3 * dim, Init::kTruncNormal02, rng),
      proj_(store, name + ".proj", dim, dim, Init::kTruncNormal02, rng),
      dim_(dim),
      heads_(heads) {}

Tensor MultiHeadAttention::forward(const Tensor& x, const AttentionLayout& layout) const {
  const std::size_t sizes[] = {dim_, dim_, dim_};
  auto qkv = split(qkv_.forward(x), 1, sizes);
  return proj_.forward(attention(qkv[0], qkv[1], qkv[2], heads_, layout));
}

SpatialBlock::SpatialBlock(ParameterStore& store, const std::string& name, std::size_t dim,
                           const EncoderConfig& cfg, Rng& rng)
    : ln_attn_(store, name + ".ln_attn", dim),
      attn_(store, name + ".msa", dim, cfg.heads, rng),
      ln_mlp_(store, name + ".ln_mlp", dim),
      mlp_(store, name + ".mlp", dim, dim * cfg.mlp_ratio, dim, Init::kTruncNormal02, rng) {}

Tensor SpatialBlock::forward(const Tensor& z, const AttentionLayout& spatial) const {
  Tensor y = add(attn_.forward(ln_attn_.forward(z), spatial), z);
  return add(mlp_.forward(ln_mlp_.forward(y)), y);
}

void SpatialBlock::zero_output_projections() {
  attn_.proj().zero();
  mlp_.fc2().zero();
}

SpatioTemporalBlock::SpatioTemporalBlock(ParameterStore& store, const std::string& name, std::size_t dim,
                                         const EncoderConfig& cfg, Rng& rng)
    : ln_time_(store, name + ".ln_time", dim),
      attn_time_(store, name + ".msa_time", dim, cfg.heads, rng),
      temporal_fc_(store, name + ".temporal_fc", dim, dim, Init::kTruncNormal02, rng),
      ln_space_(store, name + ".ln_space", dim),
      attn_space_(store, name + ".msa_space", dim, cfg.heads, rng),
      ln_mlp_(store, name + ".ln_mlp", dim),
      mlp_(store, name + ".mlp", dim, dim * cfg.mlp_ratio, dim, Init::kTruncNormal02, rng) {}

Tensor SpatioTemporalBlock::temporal_stage(const Tensor& z, const AttentionLayout& temporal,
                                           std::span<const double> temporal_mask) const {
  Tensor t = temporal_fc_.forward(attn_time_.forward(ln_time_.forward(z), temporal));
  return add(scale_rows(t, temporal_mask), z);
}

Tensor SpatioTemporalBlock::forward(const Tensor& z, const AttentionLayout& spatial, const AttentionLayout& temporal,
                                    std::span<const double> temporal_mask) const {
  Tensor zt = temporal_stage(z, temporal, temporal_mask);
  Tensor zs = add(attn_space_.forward(ln_space_.forward(zt), spatial), zt);
  return add(mlp_.forward(ln_mlp_.forward(zs)), zs);
}

void SpatioTemporalBlock::zero_output_projections() {
  attn_time_.proj().zero();
  temporal_fc_.zero();
  attn_space_.proj().zero();
  mlp_.fc2().zero();
}

// ---------------------------------------------------------------------------

StreamEncoder::StreamEncoder(ParameterStore& store, const std::string& name, const ClipSpec& spec,
                             const EncoderConfig& cfg, Rng& rng)
    : spec_(spec), config_(cfg) {
  spec_.validate();
  config_.validate(spec_.dim);
  patch_proj_ = store.add(name + ".patch_proj", init_tensor({spec_.patch_dim(), spec_.dim}, Init::kTruncNormal02, rng));
  pos_ = store.add(name + ".pos", Tensor::zeros({spec_.seq_len(), spec_.dim}, true));
  cls_ = store.add(name + ".cls", init_tensor({spec_.dim}, Init::kTruncNormal02, rng));
  const std::size_t n_spatial = cfg.layers - cfg.st_blocks;
  for (std::size_t l = 0; l < n_spatial; ++l) {
    spatial_.emplace_back(store, name + ".block" + std::to_string(l), spec_.dim, config_, rng);
  }
  for (std::size_t l = n_spatial; l < cfg.layers; ++l) {
    st_.emplace_back(store, name + ".block" + std::to_string(l), spec_.dim, config_, rng);
  }
  final_ln_ = LayerNorm(store, name + ".ln_final", spec_.dim);
}

TokenGrid StreamEncoder::tokenize(std::span<const NdArray* const> clips) const {
  if (clips.empty()) throw ShapeError("tokenize: empty batch");
  const Shape expected = spec_.clip_shape();
  const std::size_t T = spec_.frames, C = spec_.channels, H = spec_.height, W = spec_.width, P = spec_.patch;
  const std::size_t N = spec_.patches_per_frame();
  const std::size_t per_row = W / P;
  const std::size_t B = clips.size();
  const std::size_t pd = spec_.patch_dim();
  std::vector<double> patches(B * T * N * pd);
  for (std::size_t b = 0; b < B; ++b) {
    if (clips[b]->shape != expected) {
      throw ShapeError("tokenize: clip shape " + shape_str(clips[b]->shape) + " does not match " + shape_str(expected));
    }
    const double* src = clips[b]->data.data();
    for (std::size_t j = 0; j < T; ++j) {
      for (std::size_t i = 0; i < N; ++i) {
        const std::size_t py = (i / per_row) * P, px = (i % per_row) * P;
        double* dst = patches.data() + ((b * T + j) * N + i) * pd;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t y = 0; y < P; ++y) {
            const double* line = src + ((j * C + c) * H + py + y) * W + px;
            std::copy_n(line, P, dst + (c * P + y) * P);
          }
        }
      }
    }
  }
  Tensor x = Tensor::from({B * T * N, pd}, std::move(patches));
  std::vector<std::size_t> patch_pos(T * N);
  std::iota(patch_pos.begin(), patch_pos.end(), std::size_t{1});
  const std::size_t cls_pos[] = {0};
  Tensor tokens = add(matmul(x, patch_proj_), tile_rows(gather_rows(pos_, patch_pos), B));
  Tensor cls = tile_rows(add(reshape(cls_, {1, spec_.dim}), gather_rows(pos_, cls_pos)), B);
  const Tensor parts[] = {tokens, cls};
  return TokenGrid{concat(parts, 0), B, T, N};
}

Tensor StreamEncoder::run_blocks(const TokenGrid& grid) const {
  const auto spatial = spatial_layout(grid.batch, grid.frames, grid.patches);
  Tensor z = grid.rows;
  for (const auto& blk : spatial_) z = blk.forward(z, spatial);
  if (!st_.empty()) {
    const auto temporal = temporal_layout(grid.batch, grid.frames, grid.patches);
    std::vector<double> mask(grid.batch * grid.frames * grid.patches + grid.batch, 1.0);
    for (std::size_t b = 0; b < grid.batch; ++b) mask[grid.cls_row(b)] = 0.0;
    for (const auto& blk : st_) z = blk.forward(z, spatial, temporal, mask);
  }
  return z;
}

Tensor StreamEncoder::encode(std::span<const NdArray* const> clips) const {
  TokenGrid grid = tokenize(clips);
  Tensor z = run_blocks(grid);
  std::vector<std::size_t> cls_rows(grid.batch);
  for (std::size_t b = 0; b < grid.batch; ++b) cls_rows[b] = grid.cls_row(b);
  return final_ln_.forward(gather_rows(z, cls_rows));
}

// ---------------------------------------------------------------------------

StreamFusion::StreamFusion(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t out_dim,
                           Rng& rng)
    : dim_(dim),
      fc1_(store, name + ".fc1", 2 * dim, out_dim, Init::kHe, rng),
      fc2_(store, name + ".fc2", out_dim, out_dim, Init::kHe, rng) {}

Tensor StreamFusion::forward(const Tensor& rgb_cls, const Tensor& flow_cls) const {
  if (rgb_cls.shape() != flow_cls.shape() || rgb_cls.shape().back() != dim_) {
    throw ShapeError("fuse_streams: expected two [.., " + std::to_string(dim_) + "] inputs, got " +
                     shape_str(rgb_cls.shape()) + " and " + shape_str(flow_cls.shape()));
  }
  const Tensor parts[] = {rgb_cls, flow_cls};
  return relu(fc2_.forward(relu(fc1_.forward(concat(parts, rgb_cls.rank() - 1)))));
}

namespace {
ClipSpec flow_spec(ClipSpec s) {
  s.channels = 2;
  return s;
}
}  // namespace

TwoStreamEncoder::TwoStreamEncoder(ParameterStore& store, const std::string& name, const ClipSpec& rgb_spec,
                                   const EncoderConfig& cfg, std::size_t out_dim, Rng& rng)
    : rgb_(store, name + ".rgb", rgb_spec, cfg, rng),
      flow_(store, name + ".flow", flow_spec(rgb_spec), cfg, rng),
      fusion_(store, name + ".fusion", rgb_spec.dim, out_dim, rng) {}

Tensor TwoStreamEncoder::forward(std::span<const NdArray* const> rgb, std::span<const NdArray* const> flow) const {
  return fusion_.forward(rgb_.encode(rgb), flow_.encode(flow));
}

}  // namespace modgate
