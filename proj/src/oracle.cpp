#include "kgp/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include "kgp/error.hpp"

namespace kgp {

namespace {

double mean_both_side_rank(const EmbeddingModel& model, const KnowledgeGraph& kg,
                           const Triple& target) {
    const double rs = rank(model, target, kg, Side::Subject, /*filtered=*/true);
    const double ro = rank(model, target, kg, Side::Object, /*filtered=*/true);
    return 0.5 * (rs + ro);
}

}  // namespace

LooResult loo_oracle(const KnowledgeGraph& kg, const ModelSpec& spec, const TrainConfig& cfg,
                     const Triple& target, const Triple& candidate,
                     const EmbeddingModel* original) {
    require(kg.in_train(candidate), "LOO candidate must be a train triple");
    const auto start = std::chrono::steady_clock::now();

    EmbeddingModel base;
    if (original == nullptr) {
        base = train(kg, spec, cfg).model;
        original = &base;
    }
    const double orig_score = original->score(target);
    const double orig_rank = mean_both_side_rank(*original, kg, target);

    const KnowledgeGraph reduced = kg.apply_edits({candidate}, {});
    const EmbeddingModel retrained = train(reduced, spec, cfg).model;

    LooResult res;
    res.candidate = candidate;
    res.delta_score = orig_score - retrained.score(target);
    res.delta_rank = mean_both_side_rank(retrained, reduced, target) - orig_rank;
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

std::vector<AdditionOracleEntry> brute_force_addition_oracle(const KnowledgeGraph& kg,
                                                             const ModelSpec& spec,
                                                             const TrainConfig& cfg,
                                                             const Triple& target,
                                                             const std::vector<Triple>& pool) {
    require(pool.size() <= 500, "addition oracle pool too large (", pool.size(), " > 500)");
    std::vector<AdditionOracleEntry> entries;
    if (pool.empty()) return entries;

    const EmbeddingModel original = train(kg, spec, cfg).model;
    const double orig_score = original.score(target);
    const double orig_rank = mean_both_side_rank(original, kg, target);

    for (const Triple& cand : pool) {
        AdditionOracleEntry e;
        e.candidate = cand;
        if (kg.in_train(cand)) {
            // Duplicate additions are dropped by apply_edits; the retrained
            // model would be bit-identical, so the delta is exactly zero.
            entries.push_back(e);
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        const KnowledgeGraph poisoned = kg.apply_edits({}, {cand});
        const EmbeddingModel retrained = train(poisoned, spec, cfg).model;
        e.delta_score = orig_score - retrained.score(target);
        e.delta_rank = mean_both_side_rank(retrained, poisoned, target) - orig_rank;
        e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        entries.push_back(e);
    }
    std::sort(entries.begin(), entries.end(), [](const AdditionOracleEntry& a,
                                                 const AdditionOracleEntry& b) {
        if (a.delta_rank != b.delta_rank) return a.delta_rank > b.delta_rank;
        return a.candidate < b.candidate;
    });
    return entries;
}

void write_oracle_csv(const std::vector<AdditionOracleEntry>& entries, const KnowledgeGraph& kg,
                      const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write ", path.string());
    out << "candidate,delta_score,delta_rank,seconds\n";
    for (const auto& e : entries) {
        out << kg.entity_name(e.candidate.s) << ' ' << kg.relation_name(e.candidate.r) << ' '
            << kg.entity_name(e.candidate.o) << ',' << e.delta_score << ',' << e.delta_rank << ','
            << e.seconds << '\n';
    }
    require(out.good(), "write failed: ", path.string());
}

}  // namespace kgp
