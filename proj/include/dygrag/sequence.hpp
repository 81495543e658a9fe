#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dygrag/graph.hpp"

namespace dygrag {

using TokenId = std::uint32_t;

enum class SpecialToken : TokenId {
    pad = 0,
    hist = 1,
    eohist = 2,
    pred = 3,
    eopred = 4,
    mask = 5,
    unk = 6,
};

inline constexpr std::size_t kSpecialCount = 7;

// Token alphabet: 7 specials, time_1..time_{T+1}, then one token per node
// observed anywhere in the dataset (train, val and test), so unseen-in-
// training nodes still own a token. Index 0 is pad.
class Vocab {
public:
    Vocab() = default;
    Vocab(std::size_t node_count, int steps);

    std::size_t size() const { return kSpecialCount + time_count_ + node_count_; }
    std::size_t node_count() const { return node_count_; }
    int steps() const { return steps_; }

    TokenId special(SpecialToken s) const { return static_cast<TokenId>(s); }
    TokenId time_token(int step) const;  // step in [1..T+1]
    TokenId node_token(NodeId node) const;

    bool is_special(TokenId t) const { return t < kSpecialCount; }
    bool is_time(TokenId t) const { return t >= kSpecialCount && t < kSpecialCount + time_count_; }
    bool is_node(TokenId t) const { return t >= kSpecialCount + time_count_ && t < size(); }
    int time_step(TokenId t) const;
    NodeId node_of(TokenId t) const;

    std::string to_string(TokenId t) const;
    TokenId parse(const std::string& s) const;

private:
    std::size_t node_count_ = 0;
    std::size_t time_count_ = 0;
    int steps_ = 0;
};

Vocab build_vocab(const TemporalGraph& g);

// One target node's serialized history and prediction target.
struct EgoSample {
    NodeId target = 0;
    std::vector<TokenId> x;  // [hist], target, ([time_k], partners...)*, [eohist]
    std::vector<TokenId> y;  // [pred], [time_p], partners..., [eopred]
    int last_step = 0;       // greatest step with a partner in x; 0 if none
    double last_raw = 0.0;   // raw time of the final interaction in x; 0 if none
    int prediction_step = 0;
};

using RetrievalPool = std::vector<EgoSample>;

// History of `target` at steps < prediction_step, prediction target at
// prediction_step exactly. Histories longer than max_len truncate whole
// time blocks from the oldest side. Throws if the target never appears;
// empty histories are legal only when allow_empty_history (the inductive
// query case).
EgoSample ego_sequence(const TemporalGraph& g, const Vocab& vocab, NodeId target,
                       int prediction_step, std::size_t max_len = 0,
                       bool allow_empty_history = false);

struct PoolBuildResult {
    RetrievalPool pool;           // training samples / retrieval candidates
    RetrievalPool val_queries;    // predict step T-1
    RetrievalPool test_queries;   // predict step T
    std::size_t skipped = 0;      // nodes with nothing to supervise
};

PoolBuildResult build_pool(const TemporalGraph& g, const Vocab& vocab, const SplitSpec& spec,
                           std::size_t max_len = 0);

// Node-token multiset helpers for similarity and metrics.
std::vector<NodeId> node_tokens(const Vocab& vocab, const std::vector<TokenId>& seq);

void save_samples(const Vocab& vocab, const RetrievalPool& samples, const std::string& path);
RetrievalPool load_samples(const Vocab& vocab, const std::string& path);

}  // namespace dygrag
