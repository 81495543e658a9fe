#include "dygrag/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dygrag {

namespace {

constexpr double kMaskOff = -1e30;
constexpr std::size_t kPrefixReserve = 16;  // positional rows ahead of the tokens

}  // namespace

BackboneConfig backbone_preset(const std::string& name) {
    // (layers, heads, hidden) per dataset; desk is the CI-sized default
    if (name == "desk") return {2, 2, 64, 160, 0.0};
    if (name == "uci") return {6, 8, 768, 1024, 0.1};
    if (name == "hepth") return {12, 2, 256, 1024, 0.1};
    if (name == "mmconv") return {2, 2, 256, 1024, 0.1};
    if (name == "wikipedia") return {2, 6, 768, 1024, 0.1};
    if (name == "enron") return {2, 6, 768, 1024, 0.1};
    if (name == "reddit") return {2, 8, 512, 1024, 0.1};
    throw std::invalid_argument("backbone_preset: unknown preset '" + name + "'");
}

SequenceEncoder::SequenceEncoder(const Vocab& vocab, BackboneConfig cfg, Rng& rng)
    : vocab_(&vocab), cfg_(cfg) {
    if (cfg_.hidden_dim % cfg_.heads != 0) {
        throw std::invalid_argument("backbone: hidden_dim " + std::to_string(cfg_.hidden_dim) +
                                    " not divisible by heads " + std::to_string(cfg_.heads));
    }
    head_dim_ = cfg_.hidden_dim / cfg_.heads;
    const std::size_t d = cfg_.hidden_dim;
    const std::size_t v = vocab.size();
    const double sigma = 0.05;

    auto add = [&](const std::string& name, Shape shape, double init_sigma) {
        params_.emplace_back(name, Tensor::randn(std::move(shape), rng, init_sigma, true));
    };
    auto add_const = [&](const std::string& name, Shape shape, double fill) {
        params_.emplace_back(name, Tensor(std::move(shape), fill, true));
    };

    add("tok_emb", {v, d}, sigma);
    {
        // time tokens share a base embedding: later steps never appear in
        // training sequences, and a shared base keeps their frozen rows in
        // the same neighborhood the trained steps start from
        auto& tok = params_.back().second;
        std::vector<double> base(d);
        for (auto& x : base) x = rng.normal(0.0, sigma);
        const std::size_t t0 = kSpecialCount;
        const std::size_t t1 = kSpecialCount + static_cast<std::size_t>(vocab.steps()) + 1;
        for (std::size_t row = t0; row < t1; ++row) {
            for (std::size_t j = 0; j < d; ++j) {
                tok.at(row, j) = base[j] + rng.normal(0.0, 0.2 * sigma);
            }
        }
    }
    add("pos_emb", {cfg_.max_len + kPrefixReserve, d}, sigma);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string p = "blocks." + std::to_string(l) + ".";
        add_const(p + "ln1.gain", {d}, 1.0);
        add_const(p + "ln1.bias", {d}, 0.0);
        for (std::size_t h = 0; h < cfg_.heads; ++h) {
            const std::string hp = p + "attn.head" + std::to_string(h) + ".";
            add(hp + "wq", {d, head_dim_}, sigma);
            add(hp + "wk", {d, head_dim_}, sigma);
            add(hp + "wv", {d, head_dim_}, sigma);
        }
        add(p + "attn.wo", {d, d}, sigma);
        add_const(p + "attn.bo", {d}, 0.0);
        add_const(p + "ln2.gain", {d}, 1.0);
        add_const(p + "ln2.bias", {d}, 0.0);
        add(p + "mlp.w1", {d, 4 * d}, sigma);
        add_const(p + "mlp.b1", {4 * d}, 0.0);
        add(p + "mlp.w2", {4 * d, d}, sigma);
        add_const(p + "mlp.b2", {d}, 0.0);
    }
    add_const("final_ln.gain", {d}, 1.0);
    add_const("final_ln.bias", {d}, 0.0);
    add("out.w", {d, v}, sigma);
    add_const("out.b", {v}, 0.0);
}

Tensor SequenceEncoder::param(const std::string& name) const {
    for (const auto& [n, t] : params_) {
        if (n == name) return t;
    }
    throw std::invalid_argument("backbone: no parameter named '" + name + "'");
}

std::vector<Tensor> SequenceEncoder::trainable() const {
    std::vector<Tensor> out;
    for (const auto& [n, t] : params_) {
        if (t.requires_grad()) out.push_back(t);
    }
    return out;
}

Tensor SequenceEncoder::embed(const std::vector<TokenId>& tokens, std::size_t pos_offset) const {
    if (tokens.empty()) throw std::invalid_argument("backbone: empty token sequence");
    if (tokens.size() + pos_offset > cfg_.max_len + kPrefixReserve) {
        throw std::invalid_argument("backbone: sequence length " + std::to_string(tokens.size()) +
                                    " exceeds max_len " + std::to_string(cfg_.max_len));
    }
    std::vector<std::size_t> tok_ids(tokens.begin(), tokens.end());
    std::vector<std::size_t> pos_ids(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) pos_ids[i] = pos_offset + i;
    return add(embedding_lookup(param("tok_emb"), tok_ids),
               embedding_lookup(param("pos_emb"), pos_ids));
}

namespace {

Tensor dropout(const Tensor& x, double p, Rng* rng) {
    if (rng == nullptr || p <= 0.0) return x;
    Tensor mask(x.shape(), 0.0, false);
    const double keep = 1.0 - p;
    for (auto& m : mask.data()) m = rng->uniform() < keep ? 1.0 / keep : 0.0;
    return mul(x, mask);
}

}  // namespace

Tensor SequenceEncoder::encode_embedded(const Tensor& embedded, Rng* dropout_rng) const {
    const std::size_t n = embedded.shape()[0];
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim_));

    Tensor causal({n, n}, 0.0, false);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) causal.at(i, j) = kMaskOff;
    }

    Tensor h = embedded;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string p = "blocks." + std::to_string(l) + ".";
        Tensor normed = layer_norm_rows(h, param(p + "ln1.gain"), param(p + "ln1.bias"));
        std::vector<Tensor> heads;
        heads.reserve(cfg_.heads);
        for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
            const std::string hp = p + "attn.head" + std::to_string(hd) + ".";
            Tensor q = matmul(normed, param(hp + "wq"));
            Tensor k = matmul(normed, param(hp + "wk"));
            Tensor v = matmul(normed, param(hp + "wv"));
            Tensor scores = add(scale(matmul(q, transpose(k)), inv_sqrt), causal);
            heads.push_back(matmul(softmax_rows(scores), v));
        }
        Tensor attn = add(matmul(concat(heads, 1), param(p + "attn.wo")), param(p + "attn.bo"));
        h = add(h, dropout(attn, cfg_.dropout, dropout_rng));

        Tensor normed2 = layer_norm_rows(h, param(p + "ln2.gain"), param(p + "ln2.bias"));
        Tensor mid = gelu(add(matmul(normed2, param(p + "mlp.w1")), param(p + "mlp.b1")));
        Tensor out = add(matmul(mid, param(p + "mlp.w2")), param(p + "mlp.b2"));
        h = add(h, dropout(out, cfg_.dropout, dropout_rng));
    }
    return layer_norm_rows(h, param("final_ln.gain"), param("final_ln.bias"));
}

Tensor SequenceEncoder::encode(const std::vector<TokenId>& tokens, Rng* dropout_rng) const {
    if (tokens.size() > cfg_.max_len) {
        throw std::invalid_argument("backbone: sequence length " + std::to_string(tokens.size()) +
                                    " exceeds max_len " + std::to_string(cfg_.max_len));
    }
    return encode_embedded(embed(tokens), dropout_rng);
}

Tensor SequenceEncoder::represent(const std::vector<TokenId>& tokens) const {
    Tensor hidden = encode(tokens);
    std::vector<double> mask(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        mask[i] = tokens[i] == vocab_->special(SpecialToken::pad) ? 0.0 : 1.0;
    }
    return masked_mean(hidden, mask);  // throws on all-pad input
}

Tensor SequenceEncoder::logits_from_hidden(const Tensor& hidden) const {
    return add(matmul(hidden, param("out.w")), param("out.b"));
}

Tensor SequenceEncoder::loss_from_hidden(const Tensor& hidden, const std::vector<int>& targets) const {
    return cross_entropy(logits_from_hidden(hidden), targets, -1);
}

Tensor SequenceEncoder::lm_loss(const std::vector<TokenId>& seq, std::size_t y_begin,
                                Rng* dropout_rng) const {
    if (seq.size() < 2) throw std::invalid_argument("backbone: lm_loss needs >= 2 tokens");
    std::vector<TokenId> inputs(seq.begin(), seq.end() - 1);
    std::vector<int> targets(inputs.size(), -1);
    const TokenId pad = vocab_->special(SpecialToken::pad);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const TokenId t = seq[i + 1];
        if (i + 1 >= y_begin && t != pad) targets[i] = static_cast<int>(t);
    }
    return loss_from_hidden(encode(inputs, dropout_rng), targets);
}

void SequenceEncoder::save(const std::string& path) const { save_checkpoint(path, params_); }

void SequenceEncoder::load(const std::string& path) {
    auto file = load_checkpoint(path);
    restore_params(params_, file);
}

void SequenceEncoder::freeze_all_but_output() {
    for (auto& [name, t] : params_) {
        t.set_requires_grad(name == "out.w" || name == "out.b");
    }
}

TrainStats train_lm(SequenceEncoder& model, const RetrievalPool& pool, const LmTrainConfig& tc,
                    Rng& rng) {
    if (pool.empty()) throw std::invalid_argument("train_lm: empty pool");
    Adam opt(model.trainable(), tc.adam);
    TrainStats stats;
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < order.size(); b += tc.batch_size) {
            const std::size_t end = std::min(order.size(), b + tc.batch_size);
            opt.zero_grad();
            for (std::size_t i = b; i < end; ++i) {
                const auto& s = pool[order[i]];
                std::vector<TokenId> seq = s.x;
                seq.insert(seq.end(), s.y.begin(), s.y.end());
                Tensor loss = model.lm_loss(seq, s.x.size(),
                                            model.config().dropout > 0.0 ? &rng : nullptr);
                if (!std::isfinite(loss.value())) {
                    throw std::runtime_error("train_lm: non-finite loss at step " +
                                             std::to_string(step));
                }
                epoch_loss += loss.value();
                scale(loss, 1.0 / static_cast<double>(end - b)).backward();
            }
            opt.step();
            ++step;
        }
        stats.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    return stats;
}

namespace {

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
    const std::size_t v = logits.cols();
    std::size_t best = 0;
    double best_val = logits.at(row, 0);
    for (std::size_t j = 1; j < v; ++j) {
        if (logits.at(row, j) > best_val) {
            best_val = logits.at(row, j);
            best = j;
        }
    }
    return best;
}

std::vector<TokenId> greedy_loop(const SequenceEncoder& model, const Tensor* prefix,
                                 const std::vector<TokenId>& x, int prediction_step,
                                 std::size_t max_new, bool prefix_positional) {
    const Vocab& vocab = model.vocab();
    const std::size_t n_prefix = prefix ? prefix->shape()[0] : 0;
    std::vector<TokenId> seq = x;
    seq.push_back(vocab.special(SpecialToken::pred));
    seq.push_back(vocab.time_token(prediction_step));
    std::vector<TokenId> emitted(seq.begin() + x.size(), seq.end());

    const TokenId eopred = vocab.special(SpecialToken::eopred);
    for (std::size_t i = 0; i < max_new; ++i) {
        if (seq.size() + n_prefix >= model.config().max_len) break;
        Tensor embedded = model.embed(seq, n_prefix);
        if (prefix) {
            Tensor rows = *prefix;
            if (prefix_positional) {
                std::vector<std::size_t> pos(n_prefix);
                for (std::size_t p = 0; p < n_prefix; ++p) pos[p] = p;
                rows = add(rows, embedding_lookup(model.param("pos_emb"), pos));
            }
            embedded = concat({rows, embedded}, 0);
        }
        Tensor hidden = model.encode_embedded(embedded);
        Tensor logits = model.logits_from_hidden(slice_rows(hidden, hidden.rows() - 1,
                                                            hidden.rows()));
        const TokenId next = static_cast<TokenId>(argmax_row(logits, 0));
        seq.push_back(next);
        emitted.push_back(next);
        if (next == eopred) break;
    }
    return emitted;
}

}  // namespace

std::vector<TokenId> generate(const SequenceEncoder& model, const std::vector<TokenId>& x,
                              int prediction_step, std::size_t max_new) {
    return greedy_loop(model, nullptr, x, prediction_step, max_new, false);
}

std::vector<TokenId> generate_embedded(const SequenceEncoder& model, const Tensor& prefix,
                                       const std::vector<TokenId>& x, int prediction_step,
                                       std::size_t max_new, bool prefix_positional) {
    return greedy_loop(model, &prefix, x, prediction_step, max_new, prefix_positional);
}

std::vector<NodeId> ranked_nodes(const Vocab& vocab, const std::vector<TokenId>& generated) {
    std::vector<NodeId> out;
    for (TokenId t : generated) {
        if (!vocab.is_node(t)) continue;
        const NodeId n = vocab.node_of(t);
        if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    }
    return out;
}

}  // namespace dygrag
