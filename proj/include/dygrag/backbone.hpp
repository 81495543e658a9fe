#pragma once

#include <string>
#include <vector>

#include "dygrag/checkpoint.hpp"
#include "dygrag/optim.hpp"
#include "dygrag/rng.hpp"
#include "dygrag/sequence.hpp"
#include "dygrag/tensor.hpp"

namespace dygrag {

struct BackboneConfig {
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t hidden_dim = 64;
    std::size_t max_len = 160;
    double dropout = 0.0;
};

// Paper-scale per-dataset presets plus the desk-scale default.
BackboneConfig backbone_preset(const std::string& name);

// Decoder-only autoregressive sequence model. Also the retrieval encoder:
// represent() is the mean-pooled f(x) used for contextual similarity.
class SequenceEncoder {
public:
    SequenceEncoder(const Vocab& vocab, BackboneConfig cfg, Rng& rng);

    const BackboneConfig& config() const { return cfg_; }
    const Vocab& vocab() const { return *vocab_; }

    // token + positional embeddings; positions start at pos_offset
    Tensor embed(const std::vector<TokenId>& tokens, std::size_t pos_offset = 0) const;

    // transformer blocks + final layer norm over an embedded sequence
    Tensor encode_embedded(const Tensor& embedded, Rng* dropout_rng = nullptr) const;

    // one hidden vector per position, causal masking; throws when over max_len
    Tensor encode(const std::vector<TokenId>& tokens, Rng* dropout_rng = nullptr) const;

    // f(x): mean of encode() over non-pad positions
    Tensor represent(const std::vector<TokenId>& tokens) const;

    Tensor logits_from_hidden(const Tensor& hidden) const;

    // next-token loss over seq with targets restricted to positions >= y_begin
    Tensor lm_loss(const std::vector<TokenId>& seq, std::size_t y_begin,
                   Rng* dropout_rng = nullptr) const;
    Tensor loss_from_hidden(const Tensor& hidden, const std::vector<int>& targets) const;

    NamedParams& params() { return params_; }
    const NamedParams& params() const { return params_; }
    std::vector<Tensor> trainable() const;
    Tensor param(const std::string& name) const;

    void save(const std::string& path) const;
    void load(const std::string& path);

    // freeze everything except the output projection (out.w / out.b)
    void freeze_all_but_output();

private:
    const Vocab* vocab_ = nullptr;
    BackboneConfig cfg_;
    NamedParams params_;
    std::size_t head_dim_ = 0;
};

struct LmTrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 8;
    AdamConfig adam{3e-3, 0.9, 0.999, 1e-8};
};

struct TrainStats {
    std::vector<double> epoch_loss;
};

// Teacher-forced next-token training on x || y with loss on the y span.
// Throws (with the step index) if the loss goes non-finite.
TrainStats train_lm(SequenceEncoder& model, const RetrievalPool& pool, const LmTrainConfig& tc,
                    Rng& rng);

// Greedy decoding. The output starts with the forced [pred], [time_step]
// prefix and ends at [eopred] or after max_new generated tokens.
std::vector<TokenId> generate(const SequenceEncoder& model, const std::vector<TokenId>& x,
                              int prediction_step, std::size_t max_new);

// Hook for a soft-prefix run: `embedded` already contains prefix rows; the
// forced/emitted tokens are embedded at positions pos_offset + i.
std::vector<TokenId> generate_embedded(const SequenceEncoder& model, const Tensor& prefix,
                                       const std::vector<TokenId>& x, int prediction_step,
                                       std::size_t max_new, bool prefix_positional);

// Ranked prediction list: distinct node tokens of a generated sequence in
// first-occurrence order.
std::vector<NodeId> ranked_nodes(const Vocab& vocab, const std::vector<TokenId>& generated);

}  // namespace dygrag
