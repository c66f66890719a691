#include "ptft/model.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "ptft/error.hpp"

namespace ptft {
namespace {

Tensor random_normal(Shape shape, double stddev, Rng& rng) {
    Tensor t{std::move(shape)};
    for (double& v : t.values()) {
        v = rng.normal(0.0, stddev);
    }
    return t;
}

// Inverted dropout: entries are 0 or 1/(1-p).
Tensor dropout_mask(const Shape& shape, double p, Rng& rng) {
    Tensor mask{shape};
    const double keep_scale = 1.0 / (1.0 - p);
    for (double& v : mask.values()) {
        v = rng.bernoulli(p) ? 0.0 : keep_scale;
    }
    return mask;
}

void multiply_inplace(Tensor& x, const Tensor& mask) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] *= mask[i];
    }
}

Tensor multiply(const Tensor& x, const Tensor& mask) {
    Tensor out = x;
    multiply_inplace(out, mask);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += b[i];
    }
    return out;
}

const std::vector<std::string>& layer_suffixes() {
    static const std::vector<std::string> suffixes{
        "attention.query.weight", "attention.query.bias", "attention.key.weight",  "attention.value.weight",
        "attention.value.bias",   "attention.output.weight", "attention.output.bias", "attention.norm.gamma",
        "attention.norm.beta",    "ffn.input.weight",     "ffn.input.bias",        "ffn.output.weight",
        "ffn.output.bias",        "ffn.norm.gamma",       "ffn.norm.beta"};
    return suffixes;
}

Shape layer_shape(const ModelConfig& c, const std::string& suffix) {
    const std::size_t n = c.hidden_size;
    const std::size_t f = c.intermediate_size;
    if (suffix == "ffn.input.weight") {
        return {n, f};
    }
    if (suffix == "ffn.input.bias") {
        return {f};
    }
    if (suffix == "ffn.output.weight") {
        return {f, n};
    }
    if (suffix.ends_with(".weight")) {
        return {n, n};
    }
    return {n};
}

}  // namespace

void ModelConfig::validate() const {
    if (num_heads == 0 || hidden_size == 0) {
        throw InvariantError("model config: hidden_size and num_heads must be positive");
    }
    if (hidden_size % num_heads != 0) {
        throw InvariantError("model config: hidden_size " + std::to_string(hidden_size) +
                             " not divisible by num_heads " + std::to_string(num_heads));
    }
    if (intermediate_size == 0) {
        throw InvariantError("model config: intermediate_size must be positive");
    }
    if (vocab_size <= special::kCount) {
        throw InvariantError("model config: vocab_size must exceed the special token count");
    }
    if (max_positions < 2) {
        throw InvariantError("model config: max_positions must be at least 2");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw InvariantError("model config: dropout must be in [0, 1)");
    }
    if (!(init_std > 0.0)) {
        throw InvariantError("model config: init_std must be positive");
    }
}

nlohmann::json ModelConfig::to_json() const {
    return {{"num_hidden_layers", num_layers},
            {"hidden_size", hidden_size},
            {"num_attention_heads", num_heads},
            {"intermediate_size", intermediate_size},
            {"vocab_size", vocab_size},
            {"max_position_embeddings", max_positions},
            {"hidden_dropout_prob", dropout},
            {"initializer_range", init_std}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
    ModelConfig c;
    c.num_layers = doc.at("num_hidden_layers").get<std::size_t>();
    c.hidden_size = doc.at("hidden_size").get<std::size_t>();
    c.num_heads = doc.at("num_attention_heads").get<std::size_t>();
    c.intermediate_size = doc.at("intermediate_size").get<std::size_t>();
    c.vocab_size = doc.at("vocab_size").get<std::size_t>();
    c.max_positions = doc.at("max_position_embeddings").get<std::size_t>();
    c.dropout = doc.at("hidden_dropout_prob").get<double>();
    c.init_std = doc.at("initializer_range").get<double>();
    return c;
}

// --- Parameters -----------------------------------------------------------------

void Parameters::add(std::string name, Tensor value) {
    if (index_.contains(name)) {
        throw InvariantError("parameter '" + name + "' added twice");
    }
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
}

Tensor& Parameters::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw InvariantError("missing parameter '" + name + "'");
    }
    return entries_[it->second].second;
}

const Tensor& Parameters::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw InvariantError("missing parameter '" + name + "'");
    }
    return entries_[it->second].second;
}

std::size_t Parameters::scalar_count() const noexcept {
    std::size_t total = 0;
    for (const auto& [name, t] : entries_) {
        total += t.size();
    }
    return total;
}

Parameters Parameters::zeros_like() const {
    Parameters out;
    for (const auto& [name, t] : entries_) {
        out.add(name, Tensor{t.shape()});
    }
    return out;
}

void Parameters::zero() noexcept {
    for (auto& [name, t] : entries_) {
        t.fill(0.0);
    }
}

void Parameters::add_scaled(const Parameters& other, double scale) {
    if (other.entries_.size() != entries_.size()) {
        throw InvariantError("parameter tables differ in size");
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        auto& dst = entries_[i].second;
        const auto& src = other.entries_[i].second;
        if (dst.shape() != src.shape()) {
            throw ShapeError("parameter '" + entries_[i].first + "' shape mismatch");
        }
        for (std::size_t j = 0; j < dst.size(); ++j) {
            dst[j] += scale * src[j];
        }
    }
}

std::string param_names::layer(std::size_t index, std::string_view suffix) {
    return "layers." + std::to_string(index) + "." + std::string{suffix};
}

std::vector<std::pair<std::string, Shape>> encoder_schema(const ModelConfig& config) {
    std::vector<std::pair<std::string, Shape>> schema;
    schema.emplace_back(param_names::kTokenEmbedding, Shape{config.vocab_size, config.hidden_size});
    schema.emplace_back(param_names::kPositionEmbedding, Shape{config.max_positions, config.hidden_size});
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        for (const auto& suffix : layer_suffixes()) {
            schema.emplace_back(param_names::layer(l, suffix), layer_shape(config, suffix));
        }
    }
    schema.emplace_back(param_names::kMlmBias, Shape{config.vocab_size});
    return schema;
}

Parameters init_encoder_parameters(const ModelConfig& config, Rng& rng) {
    config.validate();
    Parameters params;
    for (auto& [name, shape] : encoder_schema(config)) {
        if (name.ends_with(".gamma")) {
            params.add(name, Tensor{shape, 1.0});
        } else if (name.ends_with(".bias") || name.ends_with(".beta")) {
            params.add(name, Tensor{shape});
        } else {
            params.add(name, random_normal(shape, config.init_std, rng));
        }
    }
    return params;
}

void validate_parameters(const ModelConfig& config, const Parameters& params) {
    for (const auto& [name, shape] : encoder_schema(config)) {
        if (!params.contains(name)) {
            throw InvariantError("parameters: missing '" + name + "'");
        }
        if (params.at(name).shape() != shape) {
            throw InvariantError("parameters: '" + name + "' has shape " + shape_string(params.at(name).shape()) +
                                 ", expected " + shape_string(shape));
        }
    }
}

// --- self-attention ----------------------------------------------------------

AttentionWeights attention_weights(const Parameters& params, std::size_t layer) {
    return {&params.at(param_names::layer(layer, "attention.query.weight")),
            &params.at(param_names::layer(layer, "attention.query.bias")),
            &params.at(param_names::layer(layer, "attention.key.weight")),
            &params.at(param_names::layer(layer, "attention.value.weight")),
            &params.at(param_names::layer(layer, "attention.value.bias")),
            &params.at(param_names::layer(layer, "attention.output.weight")),
            &params.at(param_names::layer(layer, "attention.output.bias"))};
}

AttentionGrads attention_grads(Parameters& grads, std::size_t layer) {
    return {&grads.at(param_names::layer(layer, "attention.query.weight")),
            &grads.at(param_names::layer(layer, "attention.query.bias")),
            &grads.at(param_names::layer(layer, "attention.key.weight")),
            &grads.at(param_names::layer(layer, "attention.value.weight")),
            &grads.at(param_names::layer(layer, "attention.value.bias")),
            &grads.at(param_names::layer(layer, "attention.output.weight")),
            &grads.at(param_names::layer(layer, "attention.output.bias"))};
}

Tensor self_attention(const AttentionWeights& weights, std::size_t num_heads, const Tensor& h,
                      std::span<const std::uint8_t> mask, AttentionTrace* trace) {
    const std::size_t t_len = h.rows();
    const std::size_t width = h.cols();
    if (mask.size() != t_len) {
        throw ShapeError("self_attention: mask length " + std::to_string(mask.size()) + " for " +
                         std::to_string(t_len) + " positions");
    }
    if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
        throw Error("self_attention: every position is masked");
    }
    if (num_heads == 0 || width % num_heads != 0) {
        throw ShapeError("self_attention: width " + std::to_string(width) + " not divisible into " +
                         std::to_string(num_heads) + " heads");
    }
    const std::size_t head_dim = width / num_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Tensor q = ops::linear(h, *weights.query_weight, weights.query_bias);
    Tensor k = ops::linear(h, *weights.key_weight, nullptr);
    Tensor v = ops::linear(h, *weights.value_weight, weights.value_bias);
    Tensor context{Shape{t_len, width}};
    std::vector<Tensor> probs;
    probs.reserve(num_heads);

    std::vector<double> scores;
    for (std::size_t head = 0; head < num_heads; ++head) {
        const std::size_t off = head * head_dim;
        Tensor p{Shape{t_len, t_len}};
        for (std::size_t i = 0; i < t_len; ++i) {
            scores.clear();
            const double* qi = q.data() + i * width + off;
            for (std::size_t j = 0; j < t_len; ++j) {
                if (mask[j] == 0) {
                    continue;
                }
                const double* kj = k.data() + j * width + off;
                double dot = 0.0;
                for (std::size_t d = 0; d < head_dim; ++d) {
                    dot += qi[d] * kj[d];
                }
                scores.push_back(dot * scale);
            }
            ops::softmax_inplace(scores);
            double* ctx = context.data() + i * width + off;
            std::size_t s = 0;
            for (std::size_t j = 0; j < t_len; ++j) {
                if (mask[j] == 0) {
                    continue;
                }
                const double w = scores[s++];
                p(i, j) = w;
                const double* vj = v.data() + j * width + off;
                for (std::size_t d = 0; d < head_dim; ++d) {
                    ctx[d] += w * vj[d];
                }
            }
        }
        probs.push_back(std::move(p));
    }

    Tensor out = ops::linear(context, *weights.output_weight, weights.output_bias);
    if (trace != nullptr) {
        trace->query = std::move(q);
        trace->key = std::move(k);
        trace->value = std::move(v);
        trace->probs = std::move(probs);
        trace->context = std::move(context);
    }
    return out;
}

void self_attention_backward(const AttentionWeights& weights, std::size_t num_heads, const Tensor& h,
                             std::span<const std::uint8_t> mask, const AttentionTrace& trace,
                             const Tensor& grad_out, const AttentionGrads& grads, Tensor* grad_h) {
    const std::size_t t_len = h.rows();
    const std::size_t width = h.cols();
    const std::size_t head_dim = width / num_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Tensor grad_context{Shape{t_len, width}};
    ops::linear_backward(trace.context, *weights.output_weight, grad_out, &grad_context, grads.output_weight,
                         grads.output_bias);

    Tensor grad_q{Shape{t_len, width}};
    Tensor grad_k{Shape{t_len, width}};
    Tensor grad_v{Shape{t_len, width}};
    std::vector<double> p_row;
    std::vector<double> dp_row;
    std::vector<double> ds_row;
    for (std::size_t head = 0; head < num_heads; ++head) {
        const std::size_t off = head * head_dim;
        const Tensor& p = trace.probs[head];
        for (std::size_t i = 0; i < t_len; ++i) {
            p_row.clear();
            dp_row.clear();
            const double* dctx = grad_context.data() + i * width + off;
            for (std::size_t j = 0; j < t_len; ++j) {
                if (mask[j] == 0) {
                    continue;
                }
                const double w = p(i, j);
                const double* vj = trace.value.data() + j * width + off;
                double* dvj = grad_v.data() + j * width + off;
                double dp = 0.0;
                for (std::size_t d = 0; d < head_dim; ++d) {
                    dp += dctx[d] * vj[d];
                    dvj[d] += w * dctx[d];
                }
                p_row.push_back(w);
                dp_row.push_back(dp);
            }
            ds_row.assign(p_row.size(), 0.0);
            ops::softmax_backward(p_row, dp_row, ds_row);

            const double* qi = trace.query.data() + i * width + off;
            double* dqi = grad_q.data() + i * width + off;
            std::size_t s = 0;
            for (std::size_t j = 0; j < t_len; ++j) {
                if (mask[j] == 0) {
                    continue;
                }
                const double ds = ds_row[s++] * scale;
                const double* kj = trace.key.data() + j * width + off;
                double* dkj = grad_k.data() + j * width + off;
                for (std::size_t d = 0; d < head_dim; ++d) {
                    dqi[d] += ds * kj[d];
                    dkj[d] += ds * qi[d];
                }
            }
        }
    }

    ops::linear_backward(h, *weights.query_weight, grad_q, grad_h, grads.query_weight, grads.query_bias);
    ops::linear_backward(h, *weights.key_weight, grad_k, grad_h, grads.key_weight, nullptr);
    ops::linear_backward(h, *weights.value_weight, grad_v, grad_h, grads.value_weight, grads.value_bias);
}

// --- encoder -----------------------------------------------------------------------

Tensor embed_sequence(const Parameters& params, std::span<const TokenId> ids) {
    const Tensor& positions = params.at(param_names::kPositionEmbedding);
    if (ids.size() > positions.rows()) {
        throw Error("embed: sequence length " + std::to_string(ids.size()) + " exceeds max_positions " +
                    std::to_string(positions.rows()));
    }
    Tensor out = ops::embedding_lookup(params.at(param_names::kTokenEmbedding), ids);
    for (std::size_t t = 0; t < ids.size(); ++t) {
        auto row = out.row(t);
        auto pos = positions.row(t);
        for (std::size_t j = 0; j < row.size(); ++j) {
            row[j] += pos[j];
        }
    }
    return out;
}

Tensor encode_sequence(const ModelConfig& config, const Parameters& params, std::span<const TokenId> ids,
                       std::span<const std::uint8_t> mask, Rng* dropout_rng, EncoderTrace* trace) {
    if (ids.size() != mask.size()) {
        throw ShapeError("encoder: ids and mask lengths differ");
    }
    const bool use_dropout = dropout_rng != nullptr && config.dropout > 0.0;

    Tensor x = embed_sequence(params, ids);
    if (trace != nullptr) {
        trace->ids.assign(ids.begin(), ids.end());
        trace->mask.assign(mask.begin(), mask.end());
        trace->layers.clear();
        trace->layers.reserve(config.num_layers);
        trace->embedding_dropout = Tensor{};
    }
    if (use_dropout) {
        Tensor m = dropout_mask(x.shape(), config.dropout, *dropout_rng);
        multiply_inplace(x, m);
        if (trace != nullptr) {
            trace->embedding_dropout = std::move(m);
        }
    }

    for (std::size_t l = 0; l < config.num_layers; ++l) {
        using param_names::layer;
        LayerTrace local;
        LayerTrace& lt = trace != nullptr ? trace->layers.emplace_back() : local;
        const AttentionWeights aw = attention_weights(params, l);

        Tensor attn = self_attention(aw, config.num_heads, x, mask, trace != nullptr ? &lt.attention : nullptr);
        if (use_dropout) {
            lt.attention_dropout = dropout_mask(attn.shape(), config.dropout, *dropout_rng);
            multiply_inplace(attn, lt.attention_dropout);
        }
        Tensor hidden = ops::layer_norm(add(x, attn), params.at(layer(l, "attention.norm.gamma")),
                                        params.at(layer(l, "attention.norm.beta")), ops::kLayerNormEps,
                                        trace != nullptr ? &lt.attention_norm : nullptr);

        Tensor pre = ops::linear(hidden, params.at(layer(l, "ffn.input.weight")), &params.at(layer(l, "ffn.input.bias")));
        Tensor act = ops::gelu(pre);
        Tensor ffn = ops::linear(act, params.at(layer(l, "ffn.output.weight")), &params.at(layer(l, "ffn.output.bias")));
        if (use_dropout) {
            lt.ffn_dropout = dropout_mask(ffn.shape(), config.dropout, *dropout_rng);
            multiply_inplace(ffn, lt.ffn_dropout);
        }
        Tensor out = ops::layer_norm(add(hidden, ffn), params.at(layer(l, "ffn.norm.gamma")),
                                     params.at(layer(l, "ffn.norm.beta")), ops::kLayerNormEps,
                                     trace != nullptr ? &lt.ffn_norm : nullptr);
        if (trace != nullptr) {
            lt.input = std::move(x);
            lt.hidden = std::move(hidden);
            lt.ffn_pre = std::move(pre);
            lt.ffn_act = std::move(act);
        }
        x = std::move(out);
    }
    return x;
}

void encode_sequence_backward(const ModelConfig& config, const Parameters& params, const EncoderTrace& trace,
                              const Tensor& grad_out, Parameters& grads) {
    using param_names::layer;
    Tensor grad = grad_out;
    for (std::size_t li = config.num_layers; li-- > 0;) {
        const LayerTrace& lt = trace.layers[li];

        // Feed-forward sub-layer.
        Tensor grad_sum2{grad.shape()};
        ops::layer_norm_backward(lt.ffn_norm, params.at(layer(li, "ffn.norm.gamma")), grad, &grad_sum2,
                                 &grads.at(layer(li, "ffn.norm.gamma")), &grads.at(layer(li, "ffn.norm.beta")));
        Tensor grad_hidden = grad_sum2;
        Tensor grad_ffn = lt.ffn_dropout.empty() ? grad_sum2 : multiply(grad_sum2, lt.ffn_dropout);
        Tensor grad_act{lt.ffn_act.shape()};
        ops::linear_backward(lt.ffn_act, params.at(layer(li, "ffn.output.weight")), grad_ffn, &grad_act,
                             &grads.at(layer(li, "ffn.output.weight")), &grads.at(layer(li, "ffn.output.bias")));
        Tensor grad_pre{lt.ffn_pre.shape()};
        ops::gelu_backward(lt.ffn_pre, grad_act, &grad_pre);
        ops::linear_backward(lt.hidden, params.at(layer(li, "ffn.input.weight")), grad_pre, &grad_hidden,
                             &grads.at(layer(li, "ffn.input.weight")), &grads.at(layer(li, "ffn.input.bias")));

        // Attention sub-layer.
        Tensor grad_sum1{grad.shape()};
        ops::layer_norm_backward(lt.attention_norm, params.at(layer(li, "attention.norm.gamma")), grad_hidden,
                                 &grad_sum1, &grads.at(layer(li, "attention.norm.gamma")),
                                 &grads.at(layer(li, "attention.norm.beta")));
        Tensor grad_input = grad_sum1;
        Tensor grad_attn = lt.attention_dropout.empty() ? grad_sum1 : multiply(grad_sum1, lt.attention_dropout);
        self_attention_backward(attention_weights(params, li), config.num_heads, lt.input, trace.mask, lt.attention,
                                grad_attn, attention_grads(grads, li), &grad_input);
        grad = std::move(grad_input);
    }

    if (!trace.embedding_dropout.empty()) {
        multiply_inplace(grad, trace.embedding_dropout);
    }
    ops::embedding_backward(trace.ids, grad, grads.at(param_names::kTokenEmbedding));
    Tensor& grad_pos = grads.at(param_names::kPositionEmbedding);
    for (std::size_t t = 0; t < trace.ids.size(); ++t) {
        auto g = grad.row(t);
        auto dst = grad_pos.row(t);
        for (std::size_t j = 0; j < g.size(); ++j) {
            dst[j] += g[j];
        }
    }
}

namespace {

std::size_t common_length(std::span<const Encoding> batch) {
    if (batch.empty()) {
        throw ShapeError("batch is empty");
    }
    const std::size_t t_len = batch.front().size();
    for (const auto& enc : batch) {
        if (enc.size() != t_len || enc.attention_mask.size() != t_len) {
            throw ShapeError("batch sequences differ in length");
        }
    }
    return t_len;
}

}  // namespace

Tensor embed(const Parameters& params, std::span<const Encoding> batch) {
    const std::size_t t_len = common_length(batch);
    const std::size_t width = params.at(param_names::kTokenEmbedding).cols();
    Tensor out{Shape{batch.size(), t_len, width}};
    for (std::size_t b = 0; b < batch.size(); ++b) {
        Tensor e = embed_sequence(params, batch[b].ids);
        std::copy(e.values().begin(), e.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(b * t_len * width));
    }
    return out;
}

Tensor encoder_forward(const ModelConfig& config, const Parameters& params, std::span<const Encoding> batch) {
    const std::size_t t_len = common_length(batch);
    Tensor out{Shape{batch.size(), t_len, config.hidden_size}};
    for (std::size_t b = 0; b < batch.size(); ++b) {
        Tensor h = encode_sequence(config, params, batch[b].ids, batch[b].attention_mask);
        std::copy(h.values().begin(), h.values().end(),
                  out.values().begin() + static_cast<std::ptrdiff_t>(b * t_len * config.hidden_size));
    }
    return out;
}

Tensor pool_first_token(const Tensor& hidden) {
    if (hidden.rank() != 3 || hidden.dim(1) == 0) {
        throw ShapeError("pool_first_token: expected [B x T x N] with T >= 1, got " + shape_string(hidden.shape()));
    }
    const std::size_t batch = hidden.dim(0);
    const std::size_t t_len = hidden.dim(1);
    const std::size_t width = hidden.dim(2);
    Tensor out{Shape{batch, width}};
    for (std::size_t b = 0; b < batch; ++b) {
        const double* src = hidden.data() + b * t_len * width;
        std::copy(src, src + width, out.data() + b * width);
    }
    return out;
}

std::vector<double> mean_pool(const Tensor& hidden, std::span<const std::uint8_t> mask) {
    std::vector<double> out(hidden.cols(), 0.0);
    std::size_t count = 0;
    for (std::size_t t = 0; t < hidden.rows(); ++t) {
        if (mask[t] == 0) {
            continue;
        }
        ++count;
        auto row = hidden.row(t);
        for (std::size_t j = 0; j < row.size(); ++j) {
            out[j] += row[j];
        }
    }
    if (count == 0) {
        throw Error("mean_pool: every position is masked");
    }
    for (double& v : out) {
        v /= static_cast<double>(count);
    }
    return out;
}

}  // namespace ptft
