#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "t2t/ops.hpp"
#include "t2t/rng.hpp"
#include "t2t/tensor.hpp"

namespace t2t {

enum class Architecture { kEncoderDecoder, kEncoderDecoderShared, kDecoderLm, kPrefixLm };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

struct ModelConfig {
  int d_model = 512;
  int d_ff = 2048;
  int d_kv = 64;
  int num_heads = 8;
  int num_layers = 6;  // per stack
  int vocab_size = 32128;
  double dropout_rate = 0.1;
  int num_rel_buckets = 32;
  int rel_max_distance = 128;
  Architecture architecture = Architecture::kEncoderDecoder;
  /// Divide attention logits by sqrt(d_kv). Off by default.
  bool scale_attention = false;
  double layer_norm_epsilon = 1e-6;
  /// Inner size of adapter layers; 0 means no adapters.
  int adapter_dim = 0;

  bool has_encoder() const {
    return architecture == Architecture::kEncoderDecoder || architecture == Architecture::kEncoderDecoderShared;
  }
  int inner_dim() const { return num_heads * d_kv; }

  /// Throws ConfigError on non-positive dimensions or fewer than 2 buckets.
  void validate() const;

  /// Canonical "key=value;..." rendering; stable across runs.
  std::string canonical() const;
  /// Inverse of canonical(). Keys may be missing (defaults apply); unknown
  /// keys and malformed values are a ConfigError.
  static ModelConfig from_canonical(const std::string& text);
  /// 64-bit FNV-1a of canonical(), as 16 hex digits.
  std::string fingerprint() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Row-major boolean attention-permission matrix: (i, j) true means query i may attend to key j.
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class MaskKind { kFullyVisible, kCausal, kCausalWithPrefix };

struct MaskPattern {
  MaskKind kind = MaskKind::kFullyVisible;
  Index prefix_len = 0;
};

BoolMatrix build_mask(const MaskPattern& pattern, Index len);

/// Restricts `mask` to pairs with equal segment ids (block-diagonal packing).
BoolMatrix restrict_to_segments(const BoolMatrix& mask, std::span<const int> query_segments,
                                std::span<const int> key_segments);

/// Multi-head dot-product attention on q [H, n, d_kv], k and v [H, m, d_kv].
/// Adds `bias` [H, n, m] when given, sets disallowed logits to -inf, applies
/// softmax and dropout on the weights, and concatenates heads -> [n, H * d_kv].
template <typename Scalar>
Tensor<Scalar> attend(const Tensor<Scalar>& q, const Tensor<Scalar>& k, const Tensor<Scalar>& v,
                      const BoolMatrix& mask, const Tensor<Scalar>* bias, bool scale_logits, double dropout_rate,
                      Rng* rng, bool training) {
  if (q.dim() != 3 || k.dim() != 3 || v.dim() != 3 || k.shape() != v.shape() || q.size(0) != k.size(0) ||
      q.size(2) != k.size(2)) {
    throw DimensionError("attend: incompatible q " + shape_string(q.shape()) + ", k " + shape_string(k.shape()) +
                         ", v " + shape_string(v.shape()));
  }
  const Index n = q.size(1), m = k.size(1);
  if (mask.rows() != n || mask.cols() != m) {
    throw DimensionError("attend: mask " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                         " does not match " + std::to_string(n) + " queries and " + std::to_string(m) + " keys");
  }
  auto logits = matmul_nt(q, k);
  if (scale_logits) logits = scale(logits, Scalar(1) / std::sqrt(static_cast<Scalar>(q.size(2))));
  if (bias) logits = add(logits, *bias);
  if (!mask.all()) {
    VectorX<Scalar> additive(n * m);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < m; ++j)
        additive[i * m + j] = mask(i, j) ? Scalar(0) : -std::numeric_limits<Scalar>::infinity();
    logits = add(logits, Tensor<Scalar>::from_values(Shape{n, m}, std::move(additive)));
  }
  auto weights = softmax(logits, -1);
  if (training && dropout_rate > 0) {
    if (!rng) throw ConfigError("attend: dropout requires an rng");
    weights = dropout(weights, dropout_rate, *rng, true);
  }
  return merge_heads(matmul(weights, v));
}

/// Bucket for offset = key_position - query_position.
///
/// Bidirectional: the upper half of the buckets holds keys after the query.
/// Unidirectional: keys after the query fall in bucket 0. Within a direction
/// of B buckets, distances below B/2 get their own bucket; larger distances
/// n map to B/2 + floor(log(n / (B/2)) / log(max_distance / (B/2)) * (B - B/2)),
/// capped at B-1.
int relative_bucket(std::int64_t offset, bool bidirectional, int num_buckets, int max_distance);

/// Exact count of learned scalars for a config (embeddings, attention, FFN,
/// norm gains, relative bias tables, adapters).
std::int64_t count_params(const ModelConfig& cfg);

/// Matmul FLOPs (2 per multiply-add) of one forward pass: projections,
/// attention logits and weighted sums, FFN, adapters, and the output
/// projection. For single-stack architectures input and target are
/// concatenated into one sequence of input_len + target_len tokens.
std::int64_t estimate_flops(const ModelConfig& cfg, std::int64_t input_len, std::int64_t target_len);

template <typename Scalar>
struct AttentionParams {
  Tensor<Scalar> q, k, v, o;
};

template <typename Scalar>
struct BlockParams {
  Tensor<Scalar> self_norm;
  AttentionParams<Scalar> self_attn;
  Tensor<Scalar> cross_norm;  // undefined for blocks without cross-attention
  AttentionParams<Scalar> cross_attn;
  Tensor<Scalar> ffn_norm;
  Tensor<Scalar> wi, wo;
  Tensor<Scalar> adapter_down, adapter_up;  // undefined without adapters

  bool has_cross() const { return cross_norm.defined(); }
  bool has_adapter() const { return adapter_down.defined(); }
};

template <typename Scalar>
struct StackParams {
  std::vector<BlockParams<Scalar>> blocks;
  Tensor<Scalar> final_norm;
  Tensor<Scalar> rel_bias;  // [num_heads, num_rel_buckets]
  bool bidirectional = true;
};

struct ForwardOptions {
  Rng* rng = nullptr;  // required when training with dropout
  bool training = false;
};

/// The encoder-decoder Transformer and its single-stack variants.
///
/// Single-stack architectures (decoder_lm, prefix_lm) only own a decoder
/// stack without cross-attention. The shared variant reuses the encoder's
/// block tensors in the decoder; decoder cross-attention, final norms and
/// bias tables stay separate.
template <typename Scalar>
class Transformer {
 public:
  Transformer(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  bool has_encoder() const { return cfg_.has_encoder(); }

  /// Unique parameter tensors by name, sorted by name.
  const std::map<std::string, Tensor<Scalar>>& parameters() const { return params_; }
  Tensor<Scalar> parameter(const std::string& name) const;
  std::int64_t num_parameters() const;

  const Tensor<Scalar>& embedding() const { return embedding_; }
  const StackParams<Scalar>& encoder() const { return encoder_; }
  const StackParams<Scalar>& decoder() const { return decoder_; }

  /// Input embeddings through the encoder stack -> [len, d_model]. `mask`
  /// defaults to fully visible; `positions` default to 0..len-1.
  Tensor<Scalar> encoder_forward(std::span<const TokenId> ids, const ForwardOptions& opts,
                                 const BoolMatrix* mask = nullptr, std::span<const int> positions = {}) const;

  /// Decoder stack plus tied output projection -> logits [len, vocab].
  /// Encoder architectures require `encoder_out`; cross_mask defaults to all visible.
  Tensor<Scalar> decoder_forward(std::span<const TokenId> ids, const Tensor<Scalar>* encoder_out,
                                 const BoolMatrix& self_mask, const ForwardOptions& opts,
                                 const BoolMatrix* cross_mask = nullptr, std::span<const int> positions = {}) const;

  /// Adds zero-initialized-output adapters after every FFN sublayer.
  void insert_adapters(int adapter_dim, std::uint64_t seed);

  /// Overwrites parameter values from another model with the same config layout.
  void copy_values_from(const Transformer& other);

 private:
  void init_stack(StackParams<Scalar>& stack, const std::string& prefix, bool cross, Rng& rng,
                  const StackParams<Scalar>* share_blocks);
  Tensor<Scalar> register_param(const std::string& name, Shape shape, double stddev, Rng& rng);
  Tensor<Scalar> run_stack(const StackParams<Scalar>& stack, Tensor<Scalar> x, const BoolMatrix& self_mask,
                           std::span<const int> positions, const Tensor<Scalar>* memory,
                           const BoolMatrix* cross_mask, const ForwardOptions& opts) const;
  Tensor<Scalar> attention(const AttentionParams<Scalar>& p, const Tensor<Scalar>& x, const Tensor<Scalar>& kv,
                           const BoolMatrix& mask, const Tensor<Scalar>* bias, const ForwardOptions& opts) const;
  Tensor<Scalar> bias_for(const StackParams<Scalar>& stack, std::span<const int> positions) const;

  ModelConfig cfg_;
  Tensor<Scalar> embedding_;
  StackParams<Scalar> encoder_;
  StackParams<Scalar> decoder_;
  std::map<std::string, Tensor<Scalar>> params_;
};

/// Default positions 0..n-1 when `positions` is empty.
std::vector<int> resolve_positions(std::span<const int> positions, std::size_t n);

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace t2t
