#include "dygrag/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dygrag {

namespace {

std::set<NodeId> node_set(const Vocab& vocab, const std::vector<TokenId>& seq) {
    std::set<NodeId> out;
    for (TokenId t : seq) {
        if (vocab.is_node(t)) out.insert(vocab.node_of(t));
    }
    return out;
}

// history node tokens: everything except the leading target marker
std::vector<NodeId> history_nodes(const Vocab& vocab, const std::vector<TokenId>& x) {
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (i == 1) continue;  // target token
        if (vocab.is_node(x[i])) out.push_back(vocab.node_of(x[i]));
    }
    return out;
}

double jaccard_of_sets(const std::set<NodeId>& a, const std::set<NodeId>& b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t inter = 0;
    for (NodeId n : a) inter += b.count(n);
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double output_jaccard(const Vocab& vocab, const std::vector<TokenId>& y_i,
                      const std::vector<TokenId>& y_j) {
    return jaccard_of_sets(node_set(vocab, y_i), node_set(vocab, y_j));
}

bool Annotation::is_positive(std::size_t i, std::size_t j) const {
    const auto& p = positives[i];
    return std::binary_search(p.begin(), p.end(), j);
}

Annotation annotate_pool(const Vocab& vocab, const RetrievalPool& pool, double threshold) {
    Annotation ann;
    ann.threshold = threshold;
    ann.pool_size = pool.size();
    ann.positives.resize(pool.size());

    std::vector<std::set<NodeId>> sets;
    sets.reserve(pool.size());
    for (const auto& s : pool) sets.push_back(node_set(vocab, s.y));

    for (std::size_t i = 0; i < pool.size(); ++i) {
        for (std::size_t j = i + 1; j < pool.size(); ++j) {
            const double r = jaccard_of_sets(sets[i], sets[j]);
            if (r >= threshold) {
                ann.positives[i].push_back(j);
                ann.positives[j].push_back(i);
                ann.similarity[i * pool.size() + j] = r;
                ann.similarity[j * pool.size() + i] = r;
                ann.pair_count += 2;
            }
        }
    }
    for (auto& p : ann.positives) {
        std::sort(p.begin(), p.end());
        if (p.empty()) ++ann.queries_without_positives;
    }
    return ann;
}

void save_annotation(const Annotation& ann, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_annotation: cannot open " + path);
    for (std::size_t i = 0; i < ann.positives.size(); ++i) {
        out << i << ':';
        for (std::size_t j = 0; j < ann.positives[i].size(); ++j) {
            out << (j ? "," : " ") << ann.positives[i][j];
        }
        out << '\n';
    }
}

Annotation load_annotation(const std::string& path, std::size_t pool_size, double threshold) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_annotation: cannot open " + path);
    Annotation ann;
    ann.threshold = threshold;
    ann.pool_size = pool_size;
    ann.positives.resize(pool_size);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
            throw std::runtime_error("load_annotation: malformed line in " + path);
        }
        const auto q = static_cast<std::size_t>(std::stoul(line.substr(0, colon)));
        std::string rest = line.substr(colon + 1);
        std::replace(rest.begin(), rest.end(), ',', ' ');
        std::istringstream rs(rest);
        std::size_t p = 0;
        while (rs >> p) {
            ann.positives.at(q).push_back(p);
            ++ann.pair_count;
        }
    }
    for (auto& p : ann.positives) {
        std::sort(p.begin(), p.end());
        if (p.empty()) ++ann.queries_without_positives;
    }
    return ann;
}

double time_decay(double t_q, double t_p, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("time_decay: negative lambda");
    return std::exp(-lambda * std::abs(t_q - t_p));
}

Tensor in_batch_contrastive_loss(const Tensor& emb, const std::vector<double>* times,
                                 double lambda, double tau, std::size_t n_anchors) {
    const std::size_t m = emb.shape()[0];
    if (n_anchors < 2 || m != 2 * n_anchors) {
        throw std::invalid_argument("contrastive loss: need 2N rows with N >= 2, got " +
                                    std::to_string(m) + " rows for N = " +
                                    std::to_string(n_anchors));
    }
    if (times != nullptr && times->size() != m) {
        throw std::invalid_argument("contrastive loss: times length mismatch");
    }
    if (tau <= 0.0) throw std::invalid_argument("contrastive loss: tau must be positive");

    Tensor emb_t = transpose(emb);
    Tensor total = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < n_anchors; ++i) {
        Tensor scores = reshape(matmul(slice_rows(emb, i, i + 1), emb_t), {m});
        if (times != nullptr && lambda > 0.0) {
            Tensor decay({m}, 0.0, false);
            for (std::size_t j = 0; j < m; ++j) {
                decay.at(j) = time_decay((*times)[i], (*times)[j], lambda);
            }
            scores = mul(scores, decay);
        }
        Tensor scaled = scale(scores, 1.0 / tau);
        Tensor mask({m}, 0.0, false);
        mask.at(i) = -1e30;  // exclude the anchor itself
        Tensor loss_i = add(logsumexp(add(scaled, mask)),
                            scale(pick(scaled, n_anchors + i), -1.0));
        total = add(total, loss_i);
    }
    return scale(total, 1.0 / static_cast<double>(n_anchors));
}

Tensor tcl_loss(const SequenceEncoder& encoder, const RetrievalPool& pool,
                const std::vector<std::pair<std::size_t, std::size_t>>& batch, double lambda,
                double tau) {
    if (batch.size() < 2) {
        throw std::invalid_argument("tcl_loss: batch must hold at least 2 pairs");
    }
    std::vector<Tensor> rows;
    std::vector<double> times;
    rows.reserve(2 * batch.size());
    times.reserve(2 * batch.size());
    for (const auto& [q, p] : batch) {
        rows.push_back(encoder.represent(pool.at(q).x));
        times.push_back(pool.at(q).last_raw);
    }
    for (const auto& [q, p] : batch) {
        rows.push_back(encoder.represent(pool.at(p).x));
        times.push_back(pool.at(p).last_raw);
    }
    return in_batch_contrastive_loss(stack_rows(rows), &times, lambda, tau, batch.size());
}

std::vector<TokenId> augment(const Vocab& vocab, const std::vector<TokenId>& x, AugmentKind kind,
                             double portion, Rng& rng) {
    if (portion < 0.0 || portion >= 1.0) {
        throw std::invalid_argument("augment: portion must lie in [0,1)");
    }
    if (x.size() < 5) {
        throw std::invalid_argument("augment: sequence has fewer than 2 maskable tokens");
    }
    const std::size_t lo = 2;               // first maskable position
    const std::size_t hi = x.size() - 2;    // last maskable position
    const std::size_t maskable = hi - lo + 1;
    const std::size_t k =
        static_cast<std::size_t>(std::lround(portion * static_cast<double>(maskable)));
    if (k == 0) return x;
    if (k >= maskable) {
        throw std::invalid_argument("augment: portion leaves zero maskable tokens");
    }

    std::vector<TokenId> out = x;
    if (kind == AugmentKind::mask) {
        auto chosen = rng.sample_indices(maskable, k);
        for (std::size_t off : chosen) out[lo + off] = vocab.special(SpecialToken::mask);
        return out;
    }

    // crop: delete one contiguous run, then drop emptied time blocks
    const std::size_t start = lo + rng.below(maskable - k + 1);
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(start),
              out.begin() + static_cast<std::ptrdiff_t>(start + k));
    std::vector<TokenId> cleaned;
    cleaned.reserve(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (vocab.is_time(out[i]) && (i + 1 >= out.size() || !vocab.is_node(out[i + 1]))) {
            continue;  // time block with no nodes left
        }
        cleaned.push_back(out[i]);
    }
    return cleaned;
}

Tensor ccl_loss(const SequenceEncoder& encoder, const RetrievalPool& pool,
                const std::vector<std::size_t>& batch, double mask_portion, double crop_portion,
                double tau, Rng& rng) {
    if (batch.size() < 2) {
        throw std::invalid_argument("ccl_loss: batch must hold at least 2 queries");
    }
    const Vocab& vocab = encoder.vocab();
    std::vector<Tensor> rows(2 * batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& x = pool.at(batch[i]).x;
        rows[i] = encoder.represent(augment(vocab, x, AugmentKind::mask, mask_portion, rng));
        rows[batch.size() + i] =
            encoder.represent(augment(vocab, x, AugmentKind::crop, crop_portion, rng));
    }
    return in_batch_contrastive_loss(stack_rows(rows), nullptr, 0.0, tau, batch.size());
}

TrainStats train_retriever(SequenceEncoder& encoder, const RetrievalPool& pool,
                           const Annotation& ann, const RetrieverConfig& cfg, Rng& rng) {
    if (ann.positives.size() != pool.size()) {
        throw std::invalid_argument("train_retriever: annotation does not match the pool");
    }
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (!ann.positives[i].empty()) eligible.push_back(i);
    }
    if (eligible.empty()) {
        throw std::runtime_error("train_retriever: the annotation holds no positive pairs");
    }

    const double lambda_eff = cfg.use_decay ? cfg.lambda : 0.0;
    Adam opt(encoder.trainable(), cfg.adam);
    TrainStats stats;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(eligible);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < eligible.size(); b += cfg.batch) {
            const std::size_t end = std::min(eligible.size(), b + cfg.batch);
            if (end - b < 2) continue;  // a lone pair has no in-batch negatives
            std::vector<std::pair<std::size_t, std::size_t>> pairs;
            std::vector<std::size_t> queries;
            for (std::size_t i = b; i < end; ++i) {
                const std::size_t q = eligible[i];
                const auto& pos = ann.positives[q];
                pairs.emplace_back(q, pos[rng.below(pos.size())]);
                queries.push_back(q);
            }
            Tensor loss = tcl_loss(encoder, pool, pairs, lambda_eff, cfg.tau);
            if (cfg.use_ccl && cfg.alpha > 0.0) {
                loss = add(loss, scale(ccl_loss(encoder, pool, queries, cfg.mask_portion,
                                                cfg.crop_portion, cfg.tau, rng),
                                       cfg.alpha));
            }
            if (!std::isfinite(loss.value())) {
                throw std::runtime_error("train_retriever: non-finite loss at step " +
                                         std::to_string(step));
            }
            opt.zero_grad();
            loss.backward();
            opt.step();
            epoch_loss += loss.value();
            ++batches;
            ++step;
        }
        stats.epoch_loss.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
    }
    return stats;
}

std::vector<std::vector<double>> embed_pool(const SequenceEncoder& encoder,
                                            const RetrievalPool& pool) {
    std::vector<std::vector<double>> out;
    out.reserve(pool.size());
    for (const auto& s : pool) out.push_back(encoder.represent(s.x).data());
    return out;
}

namespace {

RankedDemos finish_ranking(std::size_t query_id, std::size_t k,
                           std::vector<std::pair<std::size_t, double>> scored) {
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;  // ties: smaller candidate id
    });
    if (scored.size() > k) scored.resize(k);
    RankedDemos out;
    out.query_id = query_id;
    out.k = k;
    out.candidates = std::move(scored);
    return out;
}

bool candidate_allowed(const EgoSample& query, const EgoSample& cand, bool time_filter,
                       std::optional<std::size_t> exclude_self, std::size_t cand_id) {
    if (exclude_self && *exclude_self == cand_id) return false;
    if (time_filter && cand.last_raw >= query.last_raw) return false;
    return true;
}

}  // namespace

RankedDemos rank(const SequenceEncoder& encoder, const EgoSample& query, std::size_t query_id,
                 const RetrievalPool& pool, const std::vector<std::vector<double>>& pool_emb,
                 std::size_t k, bool time_filter, std::optional<std::size_t> exclude_self) {
    if (pool_emb.size() != pool.size()) {
        throw std::invalid_argument("rank: pool embeddings do not match the pool");
    }
    const auto q_emb = encoder.represent(query.x).data();
    std::vector<std::pair<std::size_t, double>> scored;
    for (std::size_t c = 0; c < pool.size(); ++c) {
        if (!candidate_allowed(query, pool[c], time_filter, exclude_self, c)) continue;
        double s = 0.0;
        for (std::size_t j = 0; j < q_emb.size(); ++j) s += q_emb[j] * pool_emb[c][j];
        scored.emplace_back(c, s);
    }
    if (scored.empty()) throw std::runtime_error("rank: pool is empty after filtering");
    return finish_ranking(query_id, k, std::move(scored));
}

Bm25Index::Bm25Index(const Vocab& vocab, const RetrievalPool& pool) : vocab_(&vocab) {
    doc_terms_.reserve(pool.size());
    doc_len_.reserve(pool.size());
    for (const auto& s : pool) {
        const auto nodes = history_nodes(vocab, s.x);
        std::unordered_map<NodeId, double> tf;
        for (NodeId n : nodes) tf[n] += 1.0;
        std::vector<std::pair<NodeId, double>> terms(tf.begin(), tf.end());
        std::sort(terms.begin(), terms.end());
        for (const auto& [term, count] : terms) doc_freq_[term] += 1;
        doc_terms_.push_back(std::move(terms));
        doc_len_.push_back(static_cast<double>(nodes.size()));
        last_raw_.push_back(s.last_raw);
        avg_len_ += static_cast<double>(nodes.size());
    }
    if (!pool.empty()) avg_len_ /= static_cast<double>(pool.size());
}

RankedDemos Bm25Index::rank(const EgoSample& query, std::size_t query_id, std::size_t k,
                            bool time_filter, std::optional<std::size_t> exclude_self) const {
    RankedDemos out;
    out.query_id = query_id;
    out.k = k;

    const auto q_nodes = history_nodes(*vocab_, query.x);
    if (q_nodes.empty()) {
        out.no_signal = true;  // cold start: no history terms to match
        return out;
    }
    std::set<NodeId> q_terms(q_nodes.begin(), q_nodes.end());

    const double n_docs = static_cast<double>(doc_terms_.size());
    std::vector<std::pair<std::size_t, double>> scored;
    for (std::size_t c = 0; c < doc_terms_.size(); ++c) {
        if (exclude_self && *exclude_self == c) continue;
        if (time_filter && last_raw_[c] >= query.last_raw) continue;
        double score = 0.0;
        for (NodeId term : q_terms) {
            double tf = 0.0;
            for (const auto& [t, f] : doc_terms_[c]) {
                if (t == term) {
                    tf = f;
                    break;
                }
            }
            if (tf == 0.0) continue;  // absent terms contribute nothing
            const auto df_it = doc_freq_.find(term);
            const double df = df_it == doc_freq_.end() ? 0.0 : static_cast<double>(df_it->second);
            const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
            const double norm = k1_ * (1.0 - b_ + b_ * doc_len_[c] / avg_len_);
            score += idf * tf * (k1_ + 1.0) / (tf + norm);
        }
        scored.emplace_back(c, score);
    }
    if (scored.empty()) throw std::runtime_error("bm25_rank: pool is empty after filtering");
    return finish_ranking(query_id, k, std::move(scored));
}

RankedDemos jaccard_rank(const Vocab& vocab, const EgoSample& query, std::size_t query_id,
                         const RetrievalPool& pool, std::size_t k, bool time_filter,
                         std::optional<std::size_t> exclude_self) {
    const auto q_nodes = history_nodes(vocab, query.x);
    RankedDemos out;
    out.query_id = query_id;
    out.k = k;
    if (q_nodes.empty()) {
        out.no_signal = true;  // cold start: nothing to match on
        return out;
    }
    std::set<NodeId> q_set(q_nodes.begin(), q_nodes.end());
    std::vector<std::pair<std::size_t, double>> scored;
    for (std::size_t c = 0; c < pool.size(); ++c) {
        if (!candidate_allowed(query, pool[c], time_filter, exclude_self, c)) continue;
        const auto c_nodes = history_nodes(vocab, pool[c].x);
        std::set<NodeId> c_set(c_nodes.begin(), c_nodes.end());
        scored.emplace_back(c, jaccard_of_sets(q_set, c_set));
    }
    if (scored.empty()) throw std::runtime_error("jaccard_rank: pool is empty after filtering");
    return finish_ranking(query_id, k, std::move(scored));
}

RankedDemos ground_truth_rank(const Vocab& vocab, const EgoSample& query, std::size_t query_id,
                              const RetrievalPool& pool, std::size_t k, bool time_filter,
                              std::optional<std::size_t> exclude_self) {
    std::vector<std::pair<std::size_t, double>> scored;
    for (std::size_t c = 0; c < pool.size(); ++c) {
        if (!candidate_allowed(query, pool[c], time_filter, exclude_self, c)) continue;
        scored.emplace_back(c, output_jaccard(vocab, query.y, pool[c].y));
    }
    if (scored.empty()) throw std::runtime_error("ground_truth_rank: pool empty after filtering");
    return finish_ranking(query_id, k, std::move(scored));
}

int hr_at_k(const RankedDemos& ranked, const std::vector<std::size_t>& relevant, std::size_t k) {
    if (k > ranked.k) throw std::invalid_argument("hr_at_k: k exceeds the ranked depth");
    for (std::size_t i = 0; i < std::min(k, ranked.candidates.size()); ++i) {
        if (std::binary_search(relevant.begin(), relevant.end(), ranked.candidates[i].first)) {
            return 1;
        }
    }
    return 0;
}

HrAggregate hr_over_queries(const std::vector<RankedDemos>& ranked,
                            const std::vector<std::vector<std::size_t>>& relevant,
                            std::size_t k) {
    if (ranked.size() != relevant.size()) {
        throw std::invalid_argument("hr_over_queries: size mismatch");
    }
    HrAggregate agg;
    double hits = 0.0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (ranked[i].no_signal) {
            ++agg.skipped_no_signal;
            continue;
        }
        if (relevant[i].empty()) {
            ++agg.skipped_no_relevant;
            continue;
        }
        hits += hr_at_k(ranked[i], relevant[i], k);
        ++agg.evaluated;
    }
    agg.rate = agg.evaluated ? hits / static_cast<double>(agg.evaluated) : 0.0;
    return agg;
}

void save_ranked(const std::vector<RankedDemos>& ranked, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_ranked: cannot open " + path);
    char buf[64];
    for (const auto& r : ranked) {
        out << r.query_id << ':';
        if (r.no_signal) {
            out << " -";
        } else {
            for (std::size_t i = 0; i < r.candidates.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.9g", r.candidates[i].second);
                out << (i ? ", " : " ") << r.candidates[i].first << ' ' << buf;
            }
        }
        out << '\n';
    }
}

std::vector<RankedDemos> load_ranked(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_ranked: cannot open " + path);
    std::vector<RankedDemos> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
            throw std::runtime_error("load_ranked: malformed line in " + path);
        }
        RankedDemos r;
        r.query_id = static_cast<std::size_t>(std::stoul(line.substr(0, colon)));
        std::string rest = line.substr(colon + 1);
        if (rest == " -") {
            r.no_signal = true;
        } else {
            std::replace(rest.begin(), rest.end(), ',', ' ');
            std::istringstream rs(rest);
            std::size_t id = 0;
            double score = 0.0;
            while (rs >> id >> score) r.candidates.emplace_back(id, score);
        }
        r.k = r.candidates.size();
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace dygrag
