#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dygrag/backbone.hpp"
#include "dygrag/sequence.hpp"

namespace dygrag {

// Jaccard similarity of the node-token sets of two output sequences;
// 0 when both sets are empty.
double output_jaccard(const Vocab& vocab, const std::vector<TokenId>& y_i,
                      const std::vector<TokenId>& y_j);

struct Annotation {
    double threshold = 0.8;
    std::vector<std::vector<std::size_t>> positives;  // per pool index, ascending
    // similarity cache for annotated (i,j) pairs, key i * pool_size + j
    std::unordered_map<std::uint64_t, double> similarity;
    std::size_t pool_size = 0;
    std::size_t pair_count = 0;  // ordered positive pairs
    std::size_t queries_without_positives = 0;

    bool is_positive(std::size_t i, std::size_t j) const;
};

Annotation annotate_pool(const Vocab& vocab, const RetrievalPool& pool, double threshold = 0.8);

void save_annotation(const Annotation& ann, const std::string& path);
Annotation load_annotation(const std::string& path, std::size_t pool_size, double threshold);

// mu(t_q, t_p) = exp(-lambda |t_q - t_p|); throws on negative lambda
double time_decay(double t_q, double t_p, double lambda);

struct RetrieverConfig {
    double lambda = 0.0;   // decay rate per raw-time unit
    double alpha = 1.0;    // CCL weight
    double tau = 0.1;      // temperature
    std::size_t batch = 128;
    double mask_portion = 0.4;
    double crop_portion = 0.4;
    std::size_t epochs = 10;
    bool use_decay = true;  // ablation: w/o Decay
    bool use_ccl = true;    // ablation: w/o CCL
    AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
};

// Shared in-batch softmax core: rows of `emb` are n_anchors anchors followed
// by their aligned positives; anchor i scores every row j != i, the positive
// sits at n_anchors + i. When `times` is present scores are decay-reweighted.
Tensor in_batch_contrastive_loss(const Tensor& emb, const std::vector<double>* times,
                                 double lambda, double tau, std::size_t n_anchors);

// Time-aware contrastive loss over explicit (query, positive) index pairs.
Tensor tcl_loss(const SequenceEncoder& encoder, const RetrievalPool& pool,
                const std::vector<std::pair<std::size_t, std::size_t>>& batch, double lambda,
                double tau);

enum class AugmentKind { mask, crop };

// Masking replaces round(portion * n_maskable) node/time tokens with [mask];
// cropping deletes one contiguous run of that many maskable tokens and drops
// any emptied time block. [hist], the target token and [eohist] never move.
std::vector<TokenId> augment(const Vocab& vocab, const std::vector<TokenId>& x, AugmentKind kind,
                             double portion, Rng& rng);

// Context-aware contrastive loss: NT-Xent between a masked and a cropped
// view of every query in the batch.
Tensor ccl_loss(const SequenceEncoder& encoder, const RetrievalPool& pool,
                const std::vector<std::size_t>& batch, double mask_portion, double crop_portion,
                double tau, Rng& rng);

TrainStats train_retriever(SequenceEncoder& encoder, const RetrievalPool& pool,
                           const Annotation& ann, const RetrieverConfig& cfg, Rng& rng);

struct RankedDemos {
    std::size_t query_id = 0;
    std::size_t k = 0;
    bool no_signal = false;  // cold start: the method cannot score this query
    std::vector<std::pair<std::size_t, double>> candidates;  // (pool id, score), scores nonincreasing
};

// plain-value pool embeddings for repeated ranking
std::vector<std::vector<double>> embed_pool(const SequenceEncoder& encoder,
                                            const RetrievalPool& pool);

// Contextual-similarity ranking (dot products only; no decay at inference).
// time_filter drops candidates with t_p >= t_q; exclude_self removes that
// pool index (a training query ranking its own pool).
RankedDemos rank(const SequenceEncoder& encoder, const EgoSample& query, std::size_t query_id,
                 const RetrievalPool& pool, const std::vector<std::vector<double>>& pool_emb,
                 std::size_t k, bool time_filter,
                 std::optional<std::size_t> exclude_self = std::nullopt);

// BM25 over the history-node bags of the pool inputs (k1=1.2, b=0.75).
class Bm25Index {
public:
    Bm25Index(const Vocab& vocab, const RetrievalPool& pool);
    RankedDemos rank(const EgoSample& query, std::size_t query_id, std::size_t k,
                     bool time_filter,
                     std::optional<std::size_t> exclude_self = std::nullopt) const;

private:
    const Vocab* vocab_ = nullptr;
    std::vector<std::vector<std::pair<NodeId, double>>> doc_terms_;  // (term, tf)
    std::unordered_map<NodeId, std::size_t> doc_freq_;
    std::vector<double> doc_len_;
    std::vector<double> last_raw_;
    double avg_len_ = 0.0;
    double k1_ = 1.2;
    double b_ = 0.75;
};

RankedDemos jaccard_rank(const Vocab& vocab, const EgoSample& query, std::size_t query_id,
                         const RetrievalPool& pool, std::size_t k, bool time_filter,
                         std::optional<std::size_t> exclude_self = std::nullopt);

// ground-truth retrieval: candidates ordered by output Jaccard against the
// query's true output sequence
RankedDemos ground_truth_rank(const Vocab& vocab, const EgoSample& query, std::size_t query_id,
                              const RetrievalPool& pool, std::size_t k, bool time_filter,
                              std::optional<std::size_t> exclude_self = std::nullopt);

// 1 iff any of the top-k candidates is relevant
int hr_at_k(const RankedDemos& ranked, const std::vector<std::size_t>& relevant, std::size_t k);

struct HrAggregate {
    double rate = 0.0;
    std::size_t evaluated = 0;
    std::size_t skipped_no_relevant = 0;
    std::size_t skipped_no_signal = 0;
};

HrAggregate hr_over_queries(const std::vector<RankedDemos>& ranked,
                            const std::vector<std::vector<std::size_t>>& relevant, std::size_t k);

void save_ranked(const std::vector<RankedDemos>& ranked, const std::string& path);
std::vector<RankedDemos> load_ranked(const std::string& path);

}  // namespace dygrag
