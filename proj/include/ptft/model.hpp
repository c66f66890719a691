#pragma once

// Transformer encoder: token + learned position embeddings, a stack of
// post-norm self-attention layers, and first-token pooling.
//
// The training path works one sequence at a time: encode_sequence() records
// everything backward needs in an EncoderTrace, and
// encode_sequence_backward() accumulates parameter gradients from it.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ptft/ops.hpp"
#include "ptft/rng.hpp"
#include "ptft/tensor.hpp"
#include "ptft/tokenizer.hpp"

namespace ptft {

struct ModelConfig {
    std::size_t num_layers = 2;           // L
    std::size_t hidden_size = 64;         // N
    std::size_t num_heads = 2;            // A
    std::size_t intermediate_size = 256;  // feed-forward inner width
    std::size_t vocab_size = 0;           // V
    std::size_t max_positions = 128;      // P
    double dropout = 0.1;
    double init_std = 0.02;

    std::size_t head_dim() const noexcept { return hidden_size / num_heads; }
    /// Throws InvariantError naming the violated constraint.
    void validate() const;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& doc);
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Ordered name -> tensor table. Order is insertion order and defines the
/// checkpoint body layout.
class Parameters {
public:
    using Entry = std::pair<std::string, Tensor>;

    void add(std::string name, Tensor value);
    bool contains(const std::string& name) const { return index_.contains(name); }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;

    std::vector<Entry>& entries() noexcept { return entries_; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    /// Total scalar count.
    std::size_t scalar_count() const noexcept;

    /// Same names and shapes, all zeros.
    Parameters zeros_like() const;
    void zero() noexcept;
    /// this += other (same layout required).
    void add_scaled(const Parameters& other, double scale);

    friend bool operator==(const Parameters& a, const Parameters& b) { return a.entries_ == b.entries_; }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

namespace param_names {
inline const std::string kTokenEmbedding = "embeddings.token.weight";
inline const std::string kPositionEmbedding = "embeddings.position.weight";
inline const std::string kMlmBias = "mlm.bias";
inline const std::string kHeadWeight = "head.weight";
inline const std::string kHeadBias = "head.bias";
/// "layers.<index>.<suffix>"
std::string layer(std::size_t index, std::string_view suffix);
}  // namespace param_names

/// Fresh encoder parameters (embeddings, layers, MLM output bias):
/// normal(0, init_std) weights and embeddings, zero biases, unit LN scales.
Parameters init_encoder_parameters(const ModelConfig& config, Rng& rng);

/// The parameter names and shapes an encoder with this config must carry.
std::vector<std::pair<std::string, Shape>> encoder_schema(const ModelConfig& config);
/// Throws InvariantError if any schema entry is missing or mis-shaped.
void validate_parameters(const ModelConfig& config, const Parameters& params);

// --- self-attention ---------------------------------------------------------

struct AttentionWeights {
    const Tensor* query_weight;
    const Tensor* query_bias;
    const Tensor* key_weight;  // no key bias: it cancels inside the softmax
    const Tensor* value_weight;
    const Tensor* value_bias;
    const Tensor* output_weight;
    const Tensor* output_bias;
};

struct AttentionGrads {
    Tensor* query_weight;
    Tensor* query_bias;
    Tensor* key_weight;
    Tensor* value_weight;
    Tensor* value_bias;
    Tensor* output_weight;
    Tensor* output_bias;
};

struct AttentionTrace {
    Tensor query, key, value;   // [T x N]
    std::vector<Tensor> probs;  // per head [T x T]; masked keys hold 0
    Tensor context;             // [T x N], heads concatenated, before output projection
};

AttentionWeights attention_weights(const Parameters& params, std::size_t layer);
AttentionGrads attention_grads(Parameters& grads, std::size_t layer);

/// Multi-head scaled dot-product self-attention over h [T x N]. Keys with
/// mask 0 are excluded (skipped, not down-weighted). Throws if every key is
/// masked.
Tensor self_attention(const AttentionWeights& weights, std::size_t num_heads, const Tensor& h,
                      std::span<const std::uint8_t> mask, AttentionTrace* trace = nullptr);
void self_attention_backward(const AttentionWeights& weights, std::size_t num_heads, const Tensor& h,
                             std::span<const std::uint8_t> mask, const AttentionTrace& trace,
                             const Tensor& grad_out, const AttentionGrads& grads, Tensor* grad_h);

// --- encoder ------------------------------------------------------------------

struct LayerTrace {
    Tensor input;
    AttentionTrace attention;
    Tensor attention_out;        // output projection, after dropout
    Tensor attention_dropout;    // dropout scale mask (empty when inactive)
    ops::LayerNormCache attention_norm;
    Tensor hidden;               // output of the attention sub-layer
    Tensor ffn_pre;              // hidden W1 + b1
    Tensor ffn_act;              // gelu(ffn_pre)
    Tensor ffn_dropout;
    ops::LayerNormCache ffn_norm;
};

struct EncoderTrace {
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> mask;
    Tensor embedding_dropout;
    std::vector<LayerTrace> layers;
};

/// token embedding + position embedding for one sequence -> [T x N].
/// Throws if an id is >= V or T > P.
Tensor embed_sequence(const Parameters& params, std::span<const TokenId> ids);

/// Full encoder on one sequence -> [T x N]. `dropout_rng` null disables
/// dropout. `trace` null skips recording.
Tensor encode_sequence(const ModelConfig& config, const Parameters& params, std::span<const TokenId> ids,
                       std::span<const std::uint8_t> mask, Rng* dropout_rng = nullptr,
                       EncoderTrace* trace = nullptr);
/// Accumulates d(loss)/d(params) into grads given d(loss)/d(output).
void encode_sequence_backward(const ModelConfig& config, const Parameters& params, const EncoderTrace& trace,
                              const Tensor& grad_out, Parameters& grads);

/// Batch embedding lookup -> [B x T x N]. All sequences must share T.
Tensor embed(const Parameters& params, std::span<const Encoding> batch);
/// Batch encoder forward without dropout -> [B x T x N].
Tensor encoder_forward(const ModelConfig& config, const Parameters& params, std::span<const Encoding> batch);
/// [B x T x N] -> [B x N], the position-0 (CLS) row of each sample.
Tensor pool_first_token(const Tensor& hidden);
/// [T x N] with mask -> [N], mean over positions with mask 1.
std::vector<double> mean_pool(const Tensor& hidden, std::span<const std::uint8_t> mask);

}  // namespace ptft
