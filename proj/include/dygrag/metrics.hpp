#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dygrag/graph.hpp"

namespace dygrag {

// |top-k intersection truth| / |truth|
double recall_at_k(const std::vector<NodeId>& ranked, const std::set<NodeId>& truth,
                   std::size_t k);

// binary relevance, gain 1/log2(pos+1), ideal over min(|truth|, k) positions
double ndcg_at_k(const std::vector<NodeId>& ranked, const std::set<NodeId>& truth, std::size_t k);

// Jaccard between the distinct top-k predictions and the truth set
double jaccard_metric(const std::vector<NodeId>& ranked, const std::set<NodeId>& truth,
                      std::size_t k);

struct EvalRecord {
    std::size_t query_id = 0;
    double recall = 0.0;
    double ndcg = 0.0;
    double jaccard = 0.0;
};

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample std; 0 for a single observation
};

MetricSummary summarize(const std::vector<double>& values);

struct RunReport {
    std::vector<EvalRecord> records;
    std::size_t skipped_empty_truth = 0;
    MetricSummary recall, ndcg, jaccard;

    std::string text() const;  // aligned-column table
    std::string kv() const;    // "metric=mean±std" lines
};

using PredictionDump = std::map<std::size_t, std::vector<NodeId>>;  // query id -> ranked nodes
using TruthDump = std::map<std::size_t, std::set<NodeId>>;

// Scores every aligned query; queries with empty truth are excluded from
// the means and counted. Throws when the id sets disagree, listing the
// offending ids.
RunReport evaluate_run(const PredictionDump& predictions, const TruthDump& truth, std::size_t k);

void save_predictions(const PredictionDump& predictions, const std::string& path);
PredictionDump load_predictions(const std::string& path);
void save_truth(const TruthDump& truth, const std::string& path);
TruthDump load_truth(const std::string& path);

}  // namespace dygrag
