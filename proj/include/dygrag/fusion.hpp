#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dygrag/backbone.hpp"
#include "dygrag/retriever.hpp"
#include "dygrag/sequence.hpp"

namespace dygrag {

// Token-node graph fused from retrieved demonstrations. Node order is
// canonical (ascending token id), which makes the readout invariant to
// demo order and node relabeling, bit for bit.
struct SummaryGraph {
    std::vector<TokenId> nodes;                            // sorted unique tokens
    std::vector<std::pair<std::size_t, std::size_t>> edges;  // node-index pairs, i < j
    std::vector<double> norm_adj;  // dense D^{-1/2}(A+I)D^{-1/2}, row-major n x n
};

// Each demonstration contributes a path: consecutive tokens become an
// undirected edge; repeated tokens collapse into one node and parallel
// edges are dropped. Throws on an empty demo list.
SummaryGraph build_summary_graph(const std::vector<std::vector<TokenId>>& demos);

enum class FusionStrategy { graph, concat, mlp };

FusionStrategy fusion_strategy_from(const std::string& name);
std::string to_string(FusionStrategy s);

struct FusionConfig {
    FusionStrategy strategy = FusionStrategy::graph;
    std::size_t k = 7;
    std::size_t epochs = 8;
    std::size_t batch_size = 8;
    AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
    bool include_demo_outputs = true;  // y_k joins the summary graph / demo text
    bool prefix_positional = true;     // prefix rows receive position embeddings
    std::size_t mlp_prefix = 15;       // m prefix vectors for the mlp strategy
    std::size_t mlp_hidden = 64;
};

// Generator with the backbone frozen except its output projection; the
// strategy decides what, if anything, is learned on top (GCN weights or
// the demo-compression MLP).
class FusionModel {
public:
    FusionModel(SequenceEncoder& backbone, FusionConfig cfg, Rng& rng);

    const FusionConfig& config() const { return cfg_; }
    SequenceEncoder& backbone() { return *backbone_; }
    const SequenceEncoder& backbone() const { return *backbone_; }

    // one symmetric-normalized GCN layer + ReLU, then mean over nodes
    Tensor gcn_readout(const SummaryGraph& g) const;

    // demo token sequences for a ranked list (top-k, x_k or x_k || y_k)
    std::vector<std::vector<TokenId>> demo_sequences(const RetrievalPool& pool,
                                                     const RankedDemos& ranked) const;

    // strategy-dependent soft prefix (1 x d for graph, m x d for mlp)
    Tensor prefix_rows(const std::vector<std::vector<TokenId>>& demos) const;

    // e_fus (or the mlp prefix) prepended at position 0; token positions
    // shift by the prefix length
    Tensor augment_query(const Tensor& prefix, const std::vector<TokenId>& x_q) const;

    // next-token loss on y with the strategy's context in place
    Tensor loss_for_sample(const EgoSample& s, const RankedDemos& ranked,
                           const RetrievalPool& pool) const;

    std::vector<NodeId> predict(const EgoSample& query, const RankedDemos& ranked,
                                const RetrievalPool& pool, std::size_t max_new) const;

    // trainable set: fusion parameters + the backbone output projection;
    // everything else in the backbone is frozen for the duration
    TrainStats finetune(const RetrievalPool& pool, const std::vector<RankedDemos>& train_ranked,
                        Rng& rng);

    NamedParams& fusion_params() { return fusion_params_; }
    std::size_t concat_truncations() const { return concat_truncations_; }

    void save(const std::string& path) const;  // backbone + fusion parameters
    void load(const std::string& path);

private:
    std::vector<TokenId> concat_tokens(const EgoSample& q,
                                       const std::vector<std::vector<TokenId>>& demos,
                                       std::size_t reserve) const;

    SequenceEncoder* backbone_ = nullptr;
    FusionConfig cfg_;
    NamedParams fusion_params_;
    mutable std::size_t concat_truncations_ = 0;
};

}  // namespace dygrag
