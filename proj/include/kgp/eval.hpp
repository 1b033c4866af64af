#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kgp/graph.hpp"
#include "kgp/model.hpp"

namespace kgp {

enum class Side { Subject, Object };
enum class TiePolicy { Average, Optimistic, Pessimistic };
enum class TargetSide { Subject, Object, Both };

TiePolicy tie_policy_from_string(const std::string& name);

struct RankOptions {
    bool filtered = true;
    TiePolicy tie_policy = TiePolicy::Average;
    int workers = 1;
};

// Rank of the true entity among {true} ∪ surviving corruptions on one side.
// Filtered mode removes corruptions present in train ∪ valid ∪ test (never the
// true triple itself). Average ties can yield half-integer ranks.
double rank(const EmbeddingModel& model, const Triple& t, const KnowledgeGraph& kg, Side side,
            bool filtered, TiePolicy policy = TiePolicy::Average);

struct EvalReport {
    struct Entry {
        Triple t;
        double subject_rank = 0.0;
        double object_rank = 0.0;
    };
    std::vector<Entry> entries;
    double mr = 0.0;
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits3 = 0.0;
    double hits10 = 0.0;
};

struct RankAggregates {
    double mr = 0.0;
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits3 = 0.0;
    double hits10 = 0.0;
};

RankAggregates aggregate_ranks(std::span<const double> ranks);

// Aggregates over both sides of every triple (2·|triples| rank observations).
EvalReport evaluate(const EmbeddingModel& model, const KnowledgeGraph& kg,
                    std::span<const Triple> triples, const RankOptions& opts = {});

// Test triples whose ranks meet the threshold; uniform random subsample of
// size cap (cap = 0 means no cap) when more qualify.
std::vector<Triple> select_targets(const EvalReport& report, double rank_threshold, size_t cap,
                                   uint64_t seed, TargetSide side = TargetSide::Both);

struct DeltaMrr {
    double original_mrr = 0.0;
    double poisoned_mrr = 0.0;
    // (original - poisoned) / original * 100: positive when the attack worked.
    double orig_minus_pois_pct = 0.0;
    // (poisoned - original) / original * 100: the tables' convention, negative
    // when the attack worked.
    double pois_minus_orig_pct = 0.0;
};

DeltaMrr delta_mrr(const EvalReport& original, const EvalReport& poisoned);

// TSV: s r o subject_rank object_rank (labels).
void write_ranks_tsv(const EvalReport& report, const KnowledgeGraph& kg,
                     const std::filesystem::path& path);
// key=value lines: mr, mrr, hits1, hits3, hits10.
void write_metrics(const EvalReport& report, const std::filesystem::path& path);

void write_targets_tsv(const std::vector<Triple>& targets, const KnowledgeGraph& kg,
                       const std::filesystem::path& path);
std::vector<Triple> read_targets_tsv(const KnowledgeGraph& kg, const std::filesystem::path& path);

}  // namespace kgp
