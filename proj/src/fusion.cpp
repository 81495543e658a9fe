#include "dygrag/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace dygrag {

SummaryGraph build_summary_graph(const std::vector<std::vector<TokenId>>& demos) {
    if (demos.empty()) throw std::invalid_argument("build_summary_graph: no demonstrations");

    std::set<TokenId> node_set;
    for (const auto& d : demos) {
        for (TokenId t : d) node_set.insert(t);
    }
    SummaryGraph g;
    g.nodes.assign(node_set.begin(), node_set.end());

    auto index_of = [&](TokenId t) {
        return static_cast<std::size_t>(
            std::lower_bound(g.nodes.begin(), g.nodes.end(), t) - g.nodes.begin());
    };

    std::set<std::pair<std::size_t, std::size_t>> edge_set;
    for (const auto& d : demos) {
        for (std::size_t i = 0; i + 1 < d.size(); ++i) {
            std::size_t a = index_of(d[i]);
            std::size_t b = index_of(d[i + 1]);
            if (a == b) continue;  // A + I supplies the self-loop
            if (a > b) std::swap(a, b);
            edge_set.insert({a, b});
        }
    }
    g.edges.assign(edge_set.begin(), edge_set.end());

    const std::size_t n = g.nodes.size();
    std::vector<double> adj(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) adj[i * n + i] = 1.0;
    for (const auto& [a, b] : g.edges) {
        adj[a * n + b] = 1.0;
        adj[b * n + a] = 1.0;
    }
    std::vector<double> inv_sqrt_deg(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += adj[i * n + j];
        inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    g.norm_adj.resize(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            g.norm_adj[i * n + j] = inv_sqrt_deg[i] * adj[i * n + j] * inv_sqrt_deg[j];
        }
    }
    return g;
}

FusionStrategy fusion_strategy_from(const std::string& name) {
    if (name == "graph") return FusionStrategy::graph;
    if (name == "concat") return FusionStrategy::concat;
    if (name == "mlp") return FusionStrategy::mlp;
    throw std::invalid_argument("fusion: unknown strategy '" + name + "'");
}

std::string to_string(FusionStrategy s) {
    switch (s) {
        case FusionStrategy::graph: return "graph";
        case FusionStrategy::concat: return "concat";
        case FusionStrategy::mlp: return "mlp";
    }
    return "?";
}

FusionModel::FusionModel(SequenceEncoder& backbone, FusionConfig cfg, Rng& rng)
    : backbone_(&backbone), cfg_(cfg) {
    const std::size_t d = backbone.config().hidden_dim;
    if (cfg_.strategy == FusionStrategy::graph) {
        fusion_params_.emplace_back("gcn.w", Tensor::randn({d, d}, rng, 0.05, true));
    } else if (cfg_.strategy == FusionStrategy::mlp) {
        fusion_params_.emplace_back("mlp.w1",
                                    Tensor::randn({cfg_.k * d, cfg_.mlp_hidden}, rng, 0.05, true));
        fusion_params_.emplace_back("mlp.b1", Tensor({cfg_.mlp_hidden}, 0.0, true));
        fusion_params_.emplace_back(
            "mlp.w2", Tensor::randn({cfg_.mlp_hidden, cfg_.mlp_prefix * d}, rng, 0.05, true));
        fusion_params_.emplace_back("mlp.b2", Tensor({cfg_.mlp_prefix * d}, 0.0, true));
    }
}

namespace {

Tensor fusion_param(const NamedParams& params, const std::string& name) {
    for (const auto& [n, t] : params) {
        if (n == name) return t;
    }
    throw std::invalid_argument("fusion: no parameter named '" + name + "'");
}

}  // namespace

Tensor FusionModel::gcn_readout(const SummaryGraph& g) const {
    if (g.nodes.empty()) throw std::invalid_argument("gcn_readout: empty summary graph");
    const std::size_t n = g.nodes.size();
    std::vector<std::size_t> ids(g.nodes.begin(), g.nodes.end());
    Tensor x = embedding_lookup(backbone_->param("tok_emb"), ids);
    Tensor norm({n, n}, g.norm_adj, false);
    Tensor h = relu(matmul(matmul(norm, x), fusion_param(fusion_params_, "gcn.w")));
    return masked_mean(h, std::vector<double>(n, 1.0));
}

std::vector<std::vector<TokenId>> FusionModel::demo_sequences(const RetrievalPool& pool,
                                                              const RankedDemos& ranked) const {
    std::vector<std::vector<TokenId>> demos;
    const std::size_t take = std::min(cfg_.k, ranked.candidates.size());
    for (std::size_t i = 0; i < take; ++i) {
        const auto& s = pool.at(ranked.candidates[i].first);
        std::vector<TokenId> seq = s.x;
        if (cfg_.include_demo_outputs) seq.insert(seq.end(), s.y.begin(), s.y.end());
        demos.push_back(std::move(seq));
    }
    return demos;
}

Tensor FusionModel::prefix_rows(const std::vector<std::vector<TokenId>>& demos) const {
    const std::size_t d = backbone_->config().hidden_dim;
    if (cfg_.strategy == FusionStrategy::graph) {
        return reshape(gcn_readout(build_summary_graph(demos)), {1, d});
    }
    if (cfg_.strategy == FusionStrategy::mlp) {
        // concatenated demo representations -> m soft prefix vectors
        std::vector<Tensor> reps;
        for (std::size_t i = 0; i < cfg_.k; ++i) {
            if (i < demos.size()) {
                reps.push_back(backbone_->represent(demos[i]));
            } else {
                reps.push_back(Tensor({d}, 0.0));  // short pools pad with zeros
            }
        }
        Tensor flat = reshape(stack_rows(reps), {1, cfg_.k * d});
        Tensor mid = relu(add(matmul(flat, fusion_param(fusion_params_, "mlp.w1")),
                              fusion_param(fusion_params_, "mlp.b1")));
        Tensor out = add(matmul(mid, fusion_param(fusion_params_, "mlp.w2")),
                         fusion_param(fusion_params_, "mlp.b2"));
        return reshape(out, {cfg_.mlp_prefix, d});
    }
    throw std::logic_error("prefix_rows: the concat strategy has no soft prefix");
}

Tensor FusionModel::augment_query(const Tensor& prefix, const std::vector<TokenId>& x_q) const {
    const std::size_t d = backbone_->config().hidden_dim;
    if (prefix.shape().size() != 2 || prefix.shape()[1] != d) {
        throw std::invalid_argument("augment_query: prefix must be (p, hidden_dim)");
    }
    const std::size_t p = prefix.shape()[0];
    if (p + x_q.size() > backbone_->config().max_len + 1) {
        throw std::invalid_argument("augment_query: prefixed length exceeds max_len+1");
    }
    Tensor rows = prefix;
    if (cfg_.prefix_positional) {
        std::vector<std::size_t> pos(p);
        for (std::size_t i = 0; i < p; ++i) pos[i] = i;
        rows = add(rows, embedding_lookup(backbone_->param("pos_emb"), pos));
    }
    return concat({rows, backbone_->embed(x_q, p)}, 0);
}

std::vector<TokenId> FusionModel::concat_tokens(const EgoSample& q,
                                                const std::vector<std::vector<TokenId>>& demos,
                                                std::size_t reserve) const {
    // worst-ranked demo first, best-ranked adjacent to the query; when the
    // budget overflows the front (worst) demos are dropped first
    std::vector<std::vector<TokenId>> ordered(demos.rbegin(), demos.rend());
    const std::size_t budget = backbone_->config().max_len - std::min<std::size_t>(
                                                                 backbone_->config().max_len,
                                                                 reserve + q.x.size());
    std::size_t total = 0;
    for (const auto& dseq : ordered) total += dseq.size();
    std::size_t first = 0;
    while (first < ordered.size() && total > budget) {
        total -= ordered[first].size();
        ++first;
        ++concat_truncations_;
    }
    std::vector<TokenId> out;
    for (std::size_t i = first; i < ordered.size(); ++i) {
        out.insert(out.end(), ordered[i].begin(), ordered[i].end());
    }
    out.insert(out.end(), q.x.begin(), q.x.end());
    return out;
}

Tensor FusionModel::loss_for_sample(const EgoSample& s, const RankedDemos& ranked,
                                    const RetrievalPool& pool) const {
    auto demos = demo_sequences(pool, ranked);
    if (cfg_.strategy == FusionStrategy::concat || demos.empty()) {
        std::vector<TokenId> x = cfg_.strategy == FusionStrategy::concat && !demos.empty()
                                     ? concat_tokens(s, demos, s.y.size() + 1)
                                     : s.x;
        std::vector<TokenId> seq = x;
        seq.insert(seq.end(), s.y.begin(), s.y.end());
        return backbone_->lm_loss(seq, x.size());
    }

    Tensor prefix = prefix_rows(demos);
    const std::size_t p = prefix.shape()[0];
    std::vector<TokenId> seq = s.x;
    seq.insert(seq.end(), s.y.begin(), s.y.end());
    std::vector<TokenId> inputs(seq.begin(), seq.end() - 1);

    Tensor rows = prefix;
    if (cfg_.prefix_positional) {
        std::vector<std::size_t> pos(p);
        for (std::size_t i = 0; i < p; ++i) pos[i] = i;
        rows = add(rows, embedding_lookup(backbone_->param("pos_emb"), pos));
    }
    Tensor embedded = concat({rows, backbone_->embed(inputs, p)}, 0);
    Tensor hidden = backbone_->encode_embedded(embedded);

    std::vector<int> targets(p + inputs.size(), -1);
    const TokenId pad = backbone_->vocab().special(SpecialToken::pad);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const TokenId t = seq[i + 1];
        if (i + 1 >= s.x.size() && t != pad) targets[p + i] = static_cast<int>(t);
    }
    return backbone_->loss_from_hidden(hidden, targets);
}

std::vector<NodeId> FusionModel::predict(const EgoSample& query, const RankedDemos& ranked,
                                         const RetrievalPool& pool, std::size_t max_new) const {
    auto demos = demo_sequences(pool, ranked);
    if (cfg_.k == 0 || demos.empty()) {  // explicit bypass to the plain backbone
        return ranked_nodes(backbone_->vocab(),
                            generate(*backbone_, query.x, query.prediction_step, max_new));
    }
    if (cfg_.strategy == FusionStrategy::concat) {
        auto x = concat_tokens(query, demos, max_new + 2);
        return ranked_nodes(backbone_->vocab(),
                            generate(*backbone_, x, query.prediction_step, max_new));
    }
    Tensor prefix = prefix_rows(demos);
    return ranked_nodes(backbone_->vocab(),
                        generate_embedded(*backbone_, prefix, query.x, query.prediction_step,
                                          max_new, cfg_.prefix_positional));
}

TrainStats FusionModel::finetune(const RetrievalPool& pool,
                                 const std::vector<RankedDemos>& train_ranked, Rng& rng) {
    if (train_ranked.size() != pool.size()) {
        throw std::invalid_argument("finetune: one ranked list per pool sample required");
    }
    backbone_->freeze_all_but_output();
    std::vector<Tensor> trainable = backbone_->trainable();
    for (auto& [name, t] : fusion_params_) {
        t.set_requires_grad(true);
        trainable.push_back(t);
    }

    Adam opt(trainable, cfg_.adam);
    TrainStats stats;
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < order.size(); b += cfg_.batch_size) {
            const std::size_t end = std::min(order.size(), b + cfg_.batch_size);
            opt.zero_grad();
            for (std::size_t i = b; i < end; ++i) {
                const std::size_t q = order[i];
                Tensor loss = loss_for_sample(pool[q], train_ranked[q], pool);
                if (!std::isfinite(loss.value())) {
                    throw std::runtime_error("finetune: non-finite loss at step " +
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

void FusionModel::save(const std::string& path) const {
    NamedParams all = backbone_->params();
    for (const auto& [name, t] : fusion_params_) all.emplace_back("fusion." + name, t);
    save_checkpoint(path, all);
}

void FusionModel::load(const std::string& path) {
    auto file = load_checkpoint(path);
    restore_params(backbone_->params(), file);
    // tensors are shared-state, so restoring through the aliased view
    // updates fusion_params_ in place
    NamedParams prefixed;
    for (auto& [name, t] : fusion_params_) prefixed.emplace_back("fusion." + name, t);
    restore_params(prefixed, file);
}

}  // namespace dygrag
