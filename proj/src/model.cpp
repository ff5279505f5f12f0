#include "t2t/model.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace t2t {

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::kEncoderDecoder: return "encoder_decoder";
    case Architecture::kEncoderDecoderShared: return "encoder_decoder_shared";
    case Architecture::kDecoderLm: return "decoder_lm";
    case Architecture::kPrefixLm: return "prefix_lm";
  }
  return "unknown";
}

Architecture parse_architecture(const std::string& name) {
  for (auto a : {Architecture::kEncoderDecoder, Architecture::kEncoderDecoderShared, Architecture::kDecoderLm,
                 Architecture::kPrefixLm}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown architecture '" + name + "'");
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("model config: ") + name + " must be positive, got " + std::to_string(v));
  };
  positive(d_model, "d_model");
  positive(d_ff, "d_ff");
  positive(d_kv, "d_kv");
  positive(num_heads, "num_heads");
  positive(vocab_size, "vocab_size");
  positive(rel_max_distance, "rel_max_distance");
  if (num_layers < 0) throw ConfigError("model config: num_layers must be non-negative");
  if (num_rel_buckets < 2) throw ConfigError("model config: num_rel_buckets must be at least 2");
  if (adapter_dim < 0) throw ConfigError("model config: adapter_dim must be non-negative");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("model config: dropout_rate must be in [0,1)");
  if (!(layer_norm_epsilon >= 0.0)) throw ConfigError("model config: layer_norm_epsilon must be non-negative");
}

std::string ModelConfig::canonical() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "adapter_dim=" << adapter_dim << ";architecture=" << to_string(architecture) << ";d_ff=" << d_ff
      << ";d_kv=" << d_kv << ";d_model=" << d_model << ";dropout_rate=" << dropout_rate
      << ";layer_norm_epsilon=" << layer_norm_epsilon << ";num_heads=" << num_heads << ";num_layers=" << num_layers
      << ";num_rel_buckets=" << num_rel_buckets << ";rel_max_distance=" << rel_max_distance
      << ";scale_attention=" << (scale_attention ? 1 : 0) << ";vocab_size=" << vocab_size;
  return out.str();
}

ModelConfig ModelConfig::from_canonical(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("model config: malformed entry '" + item + "'");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    auto integer = [&] {
      std::size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != value.size()) throw ConfigError("model config: bad integer for " + key + ": '" + value + "'");
      return v;
    };
    auto real = [&] {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != value.size()) throw ConfigError("model config: bad number for " + key + ": '" + value + "'");
      return v;
    };
    if (key == "adapter_dim") cfg.adapter_dim = integer();
    else if (key == "architecture") cfg.architecture = parse_architecture(value);
    else if (key == "d_ff") cfg.d_ff = integer();
    else if (key == "d_kv") cfg.d_kv = integer();
    else if (key == "d_model") cfg.d_model = integer();
    else if (key == "dropout_rate") cfg.dropout_rate = real();
    else if (key == "layer_norm_epsilon") cfg.layer_norm_epsilon = real();
    else if (key == "num_heads") cfg.num_heads = integer();
    else if (key == "num_layers") cfg.num_layers = integer();
    else if (key == "num_rel_buckets") cfg.num_rel_buckets = integer();
    else if (key == "rel_max_distance") cfg.rel_max_distance = integer();
    else if (key == "scale_attention") cfg.scale_attention = integer() != 0;
    else if (key == "vocab_size") cfg.vocab_size = integer();
    else throw ConfigError("model config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

std::string ModelConfig::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

BoolMatrix build_mask(const MaskPattern& pattern, Index len) {
  if (len < 1) throw ParameterError("build_mask: length must be at least 1");
  if (pattern.kind == MaskKind::kCausalWithPrefix && (pattern.prefix_len < 0 || pattern.prefix_len > len)) {
    throw ParameterError("build_mask: prefix length " + std::to_string(pattern.prefix_len) + " exceeds length " +
                         std::to_string(len));
  }
  BoolMatrix m(len, len);
  for (Index i = 0; i < len; ++i) {
    for (Index j = 0; j < len; ++j) {
      switch (pattern.kind) {
        case MaskKind::kFullyVisible: m(i, j) = true; break;
        case MaskKind::kCausal: m(i, j) = j <= i; break;
        case MaskKind::kCausalWithPrefix: m(i, j) = j < pattern.prefix_len || j <= i; break;
      }
    }
  }
  return m;
}

BoolMatrix restrict_to_segments(const BoolMatrix& mask, std::span<const int> query_segments,
                                std::span<const int> key_segments) {
  if (static_cast<Index>(query_segments.size()) != mask.rows() ||
      static_cast<Index>(key_segments.size()) != mask.cols()) {
    throw DimensionError("restrict_to_segments: segment ids do not match a " + std::to_string(mask.rows()) + "x" +
                         std::to_string(mask.cols()) + " mask");
  }
  BoolMatrix out = mask;
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j)
      out(i, j) = out(i, j) && query_segments[static_cast<std::size_t>(i)] == key_segments[static_cast<std::size_t>(j)];
  return out;
}

int relative_bucket(std::int64_t offset, bool bidirectional, int num_buckets, int max_distance) {
  int base = 0;
  std::int64_t n = -offset;  // distance looking back
  if (bidirectional) {
    num_buckets /= 2;
    if (n < 0) base = num_buckets;
    n = n < 0 ? -n : n;
  } else {
    n = std::max<std::int64_t>(n, 0);
  }
  const int max_exact = num_buckets / 2;
  if (n < max_exact) return base + static_cast<int>(n);
  // The 1e-9 guard lands exact bucket boundaries (n = max_exact * r^k) in the upper bucket.
  const double ratio = std::log(static_cast<double>(n) / max_exact) /
                       std::log(static_cast<double>(max_distance) / max_exact);
  const double scaled = ratio * (num_buckets - max_exact) + 1e-9;
  const int large = scaled >= num_buckets ? num_buckets - 1
                                          : std::min(num_buckets - 1, max_exact + static_cast<int>(std::floor(scaled)));
  return base + large;
}

namespace {

struct StackCounts {
  std::int64_t attn, ffn, norm, adapter;
};

StackCounts unit_counts(const ModelConfig& c) {
  return {4LL * c.d_model * c.inner_dim(), 2LL * c.d_model * c.d_ff, c.d_model,
          c.adapter_dim > 0 ? 2LL * c.d_model * c.adapter_dim : 0};
}

}  // namespace

std::int64_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const auto u = unit_counts(cfg);
  const std::int64_t L = cfg.num_layers;
  const std::int64_t emb = static_cast<std::int64_t>(cfg.vocab_size) * cfg.d_model;
  const std::int64_t rel = static_cast<std::int64_t>(cfg.num_heads) * cfg.num_rel_buckets;
  const std::int64_t plain_block = u.attn + u.ffn + 2 * u.norm + u.adapter;
  const std::int64_t cross = u.attn + u.norm;
  switch (cfg.architecture) {
    case Architecture::kEncoderDecoder:
      return emb + L * plain_block + L * (plain_block + cross) + 2 * (u.norm + rel);
    case Architecture::kEncoderDecoderShared:
      return emb + L * plain_block + L * cross + 2 * (u.norm + rel);
    case Architecture::kDecoderLm:
    case Architecture::kPrefixLm:
      return emb + L * plain_block + u.norm + rel;
  }
  return 0;
}

namespace {

// Matmul FLOPs of one stack over `n` query tokens (and `m` memory tokens when cross-attending).
std::int64_t stack_flops(const ModelConfig& c, std::int64_t n, std::int64_t m, bool cross) {
  if (n == 0) return 0;
  const std::int64_t d = c.d_model, inner = c.inner_dim(), h = c.num_heads, dk = c.d_kv;
  std::int64_t macs = 0;
  macs += 4 * n * d * inner;      // q, k, v, o projections
  macs += 2 * h * n * n * dk;     // logits and weighted sum
  if (cross) {
    macs += 2 * n * d * inner;    // q, o
    macs += 2 * m * d * inner;    // k, v over memory
    macs += 2 * h * n * m * dk;
  }
  macs += 2 * n * d * c.d_ff;
  if (c.adapter_dim > 0) macs += 2 * n * d * c.adapter_dim;
  return 2 * macs * c.num_layers;
}

}  // namespace

std::int64_t estimate_flops(const ModelConfig& cfg, std::int64_t input_len, std::int64_t target_len) {
  cfg.validate();
  if (input_len < 0 || target_len < 0) throw ParameterError("estimate_flops: negative length");
  const std::int64_t logits_per_token = 2LL * cfg.d_model * cfg.vocab_size;
  if (cfg.has_encoder()) {
    return stack_flops(cfg, input_len, 0, false) + stack_flops(cfg, target_len, input_len, true) +
           target_len * logits_per_token;
  }
  const std::int64_t n = input_len + target_len;
  return stack_flops(cfg, n, 0, false) + n * logits_per_token;
}

std::vector<int> resolve_positions(std::span<const int> positions, std::size_t n) {
  if (positions.empty()) {
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>(i);
    return out;
  }
  if (positions.size() != n) {
    throw DimensionError("positions: " + std::to_string(positions.size()) + " positions for " + std::to_string(n) +
                         " tokens");
  }
  return {positions.begin(), positions.end()};
}

template <typename Scalar>
Transformer<Scalar>::Transformer(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(seed, Rng::derive_stream(0x1417, 0));
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
  embedding_ = register_param("shared_embedding", {cfg_.vocab_size, cfg_.d_model}, proj_std, rng);
  const int adapter_dim = cfg_.adapter_dim;
  cfg_.adapter_dim = 0;
  switch (cfg_.architecture) {
    case Architecture::kEncoderDecoder:
      init_stack(encoder_, "encoder", false, rng, nullptr);
      init_stack(decoder_, "decoder", true, rng, nullptr);
      decoder_.bidirectional = false;
      break;
    case Architecture::kEncoderDecoderShared:
      init_stack(encoder_, "encoder", false, rng, nullptr);
      init_stack(decoder_, "decoder", true, rng, &encoder_);
      decoder_.bidirectional = false;
      break;
    case Architecture::kDecoderLm:
      init_stack(decoder_, "decoder", false, rng, nullptr);
      decoder_.bidirectional = false;
      break;
    case Architecture::kPrefixLm:
      init_stack(decoder_, "decoder", false, rng, nullptr);
      decoder_.bidirectional = true;
      break;
  }
  if (adapter_dim > 0) insert_adapters(adapter_dim, seed);
}

template <typename Scalar>
Tensor<Scalar> Transformer<Scalar>::register_param(const std::string& name, Shape shape, double stddev, Rng& rng) {
  const Index n = shape_numel(shape);
  VectorX<Scalar> v(n);
  for (Index i = 0; i < n; ++i) v[i] = static_cast<Scalar>(stddev == 0.0 ? 0.0 : stddev * rng.normal());
  auto t = Tensor<Scalar>::from_values(std::move(shape), std::move(v), true);
  params_.emplace(name, t);
  return t;
}

template <typename Scalar>
void Transformer<Scalar>::init_stack(StackParams<Scalar>& stack, const std::string& prefix, bool cross, Rng& rng,
                                     const StackParams<Scalar>* share_blocks) {
  const Index d = cfg_.d_model, inner = cfg_.inner_dim();
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));
  const double out_std = proj_std / std::sqrt(static_cast<double>(std::max(1, cfg_.num_layers)));
  auto ones = [&](const std::string& name) {
    auto t = Tensor<Scalar>::full({d}, Scalar(1), true);
    params_.emplace(name, t);
    return t;
  };
  auto attn = [&](const std::string& p) {
    AttentionParams<Scalar> a;
    a.q = register_param(p + "/q", {d, inner}, proj_std, rng);
    a.k = register_param(p + "/k", {d, inner}, proj_std, rng);
    a.v = register_param(p + "/v", {d, inner}, proj_std, rng);
    a.o = register_param(p + "/o", {inner, d}, proj_std, rng);
    return a;
  };
  stack.blocks.resize(static_cast<std::size_t>(cfg_.num_layers));
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string bp = prefix + "/block_" + (l < 10 ? "0" : "") + std::to_string(l);
    auto& b = stack.blocks[static_cast<std::size_t>(l)];
    if (share_blocks) {
      const auto& src = share_blocks->blocks[static_cast<std::size_t>(l)];
      b.self_norm = src.self_norm;
      b.self_attn = src.self_attn;
      b.ffn_norm = src.ffn_norm;
      b.wi = src.wi;
      b.wo = src.wo;
    } else {
      b.self_norm = ones(bp + "/self_attn_norm");
      b.self_attn = attn(bp + "/self_attn");
      b.ffn_norm = ones(bp + "/ffn_norm");
      b.wi = register_param(bp + "/ffn/wi", {d, cfg_.d_ff}, proj_std, rng);
      b.wo = register_param(bp + "/ffn/wo", {cfg_.d_ff, d}, out_std, rng);
    }
    if (cross) {
      b.cross_norm = ones(bp + "/cross_attn_norm");
      b.cross_attn = attn(bp + "/cross_attn");
    }
  }
  stack.final_norm = ones(prefix + "/final_norm");
  stack.rel_bias = register_param(prefix + "/relative_bias", {cfg_.num_heads, cfg_.num_rel_buckets}, 0.0, rng);
}

template <typename Scalar>
void Transformer<Scalar>::insert_adapters(int adapter_dim, std::uint64_t seed) {
  if (adapter_dim <= 0) throw ParameterError("insert_adapters: adapter dimension must be positive");
  if (cfg_.adapter_dim > 0) throw ConfigError("insert_adapters: model already has adapters");
  Rng rng(seed, Rng::derive_stream(0xada9, 0));
  const Index d = cfg_.d_model;
  const double std_down = 1.0 / std::sqrt(static_cast<double>(d));
  auto add_to = [&](StackParams<Scalar>& stack, const std::string& prefix, const StackParams<Scalar>* shared) {
    for (std::size_t l = 0; l < stack.blocks.size(); ++l) {
      auto& b = stack.blocks[l];
      if (shared) {
        b.adapter_down = shared->blocks[l].adapter_down;
        b.adapter_up = shared->blocks[l].adapter_up;
        continue;
      }
      const std::string bp = prefix + "/block_" + (l < 10 ? "0" : "") + std::to_string(l);
      b.adapter_down = register_param(bp + "/adapter/down", {d, adapter_dim}, std_down, rng);
      b.adapter_up = register_param(bp + "/adapter/up", {adapter_dim, d}, 0.0, rng);
    }
  };
  if (cfg_.has_encoder()) add_to(encoder_, "encoder", nullptr);
  add_to(decoder_, "decoder", cfg_.architecture == Architecture::kEncoderDecoderShared ? &encoder_ : nullptr);
  cfg_.adapter_dim = adapter_dim;
}

template <typename Scalar>
Tensor<Scalar> Transformer<Scalar>::parameter(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ParameterError("no parameter named '" + name + "'");
  return it->second;
}

template <typename Scalar>
std::int64_t Transformer<Scalar>::num_parameters() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

template <typename Scalar>
void Transformer<Scalar>::copy_values_from(const Transformer& other) {
  for (auto& [name, t] : params_) {
    const auto src = other.parameter(name);
    if (src.shape() != t.shape()) throw ShapeError("copy_values_from: shape mismatch for " + name);
    t.mutable_values() = src.values();
  }
}

template <typename Scalar>
Tensor<Scalar> Transformer<Scalar>::bias_for(const StackParams<Scalar>& stack, std::span<const int> positions) const {
  const auto n = static_cast<Index>(positions.size());
  int lo = 0, hi = 0;
  for (int p : positions) {
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  // Offsets lie in [lo - hi, hi - lo]; bucket each distinct offset once.
  const int span = hi - lo;
  std::vector<int> by_offset(static_cast<std::size_t>(2 * span + 1));
  for (int o = -span; o <= span; ++o) {
    by_offset[static_cast<std::size_t>(o + span)] =
        relative_bucket(o, stack.bidirectional, cfg_.num_rel_buckets, cfg_.rel_max_distance);
  }
  std::vector<int> buckets(static_cast<std::size_t>(n * n));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      buckets[static_cast<std::size_t>(i * n + j)] =
          by_offset[static_cast<std::size_t>(positions[static_cast<std::size_t>(j)] -
                                             positions[static_cast<std::size_t>(i)] + span)];
  return gather_bias(stack.rel_bias, std::span<const int>(buckets), n, n);
}

template <typename Scalar>
Tensor<Scalar> Transformer<Scalar>::attention(const AttentionParams<Scalar>& p, const Tensor<Scalar>& x,
                                              const Tensor<Scalar>& kv, const BoolMatrix& mask,
                                              const Tensor<Scalar>* bias, const ForwardOptions& opts) const {
  const Index h = cfg_.num_heads;
  auto q = split_heads(matmul(x, p.q), h);
  auto k = split_heads(matmul(kv, p.k), h);
  auto v = split_heads(matmul(kv, p.v), h);
  return matmul(attend(q, k, v, mask, bias, cfg_.scale_attention, cfg_.dropout_rate, opts.rng, opts.training), p.o);
}

template <typename Scalar>
Tensor<Scalar> Transformer<Scalar>::run_stack(const StackParams<Scalar>& stack, Tensor<Scalar> x,
                                              const BoolMatrix& self_mask, std::span<const int> positions,
                                              const Tensor<Scalar>* memory, const BoolMatrix* cross_mask,
                                              const ForwardOptions& opts) const {
  const Scalar eps = static_cast<Scalar>(cfg_.layer_norm_epsilon);
  const bool drop = opts.training && cfg_.dropout_rate > 0;
  if (drop && !opts.rng) throw ConfigError("forward: training with dropout requires an rng");
  auto maybe_dropout = [&](const Tensor<Scalar>& t) { return drop ? dropout(t, cfg_.dropout_rate, *opts.rng, true) : t; };
  const Tensor<Scalar> bias = stack.blocks.empty() ? Tensor<Scalar>() : bias_for(stack, positions);
  x = maybe_dropout(x);
  for (const auto& b : stack.blocks) {
    auto normed = rms_layer_norm(x, b.self_norm, eps);
    x = add(x, maybe_dropout(attention(b.self_attn, normed, normed, self_mask, &bias, opts)));
    if (b.has_cross() && memory) {
      auto cn = rms_layer_norm(x, b.cross_norm, eps);
      x = add(x, maybe_dropout(attention(b.cross_attn, cn, *memory, *cross_mask, nullptr, opts)));
    }
    auto fn = rms_layer_norm(x, b.ffn_norm, eps);
    auto hidden = relu(matmul(fn, b.wi));
    hidden = maybe_dropout(hidden);
    auto y = matmul(hidden, b.wo);
    if (b.has_adapter()) y = add(y, matmul(relu(matmul(y, b.adapter_down)), b.adapter_up));
    x = add(x, maybe_dropout(y));
  }
  return maybe_dropout(rms_layer_norm(x, stack.final_norm, eps));
}

template <typename Scalar>
Tensor<Scalar> Transformer<Scalar>::encoder_forward(std::span<const TokenId> ids, const ForwardOptions& opts,
                                                    const BoolMatrix* mask, std::span<const int> positions) const {
  if (!has_encoder()) throw ConfigError("encoder_forward: " + to_string(cfg_.architecture) + " has no encoder");
  if (ids.empty()) throw DataError("encoder_forward: empty input");
  const auto n = static_cast<Index>(ids.size());
  const auto pos = resolve_positions(positions, ids.size());
  BoolMatrix full;
  if (!mask) {
    full = BoolMatrix::Constant(n, n, true);
    mask = &full;
  }
  return run_stack(encoder_, t2t::embedding(embedding_, ids), *mask, pos, nullptr, nullptr, opts);
}

template <typename Scalar>
Tensor<Scalar> Transformer<Scalar>::decoder_forward(std::span<const TokenId> ids, const Tensor<Scalar>* encoder_out,
                                                    const BoolMatrix& self_mask, const ForwardOptions& opts,
                                                    const BoolMatrix* cross_mask, std::span<const int> positions) const {
  if (ids.empty()) throw DataError("decoder_forward: empty input");
  if (has_encoder() && !encoder_out) {
    throw ConfigError("decoder_forward: " + to_string(cfg_.architecture) + " requires encoder output");
  }
  if (!has_encoder() && encoder_out) {
    throw ConfigError("decoder_forward: " + to_string(cfg_.architecture) + " has no cross-attention");
  }
  const auto n = static_cast<Index>(ids.size());
  if (self_mask.rows() != n || self_mask.cols() != n) {
    throw DimensionError("decoder_forward: self mask does not match " + std::to_string(n) + " tokens");
  }
  const auto pos = resolve_positions(positions, ids.size());
  BoolMatrix full;
  if (encoder_out && !cross_mask) {
    full = BoolMatrix::Constant(n, encoder_out->size(0), true);
    cross_mask = &full;
  }
  auto hidden = run_stack(decoder_, t2t::embedding(embedding_, ids), self_mask, pos, encoder_out, cross_mask, opts);
  return matmul_nt(hidden, embedding_);
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace t2t
