#include "kgp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "kgp/error.hpp"
#include "kgp/rng.hpp"

namespace kgp {

TiePolicy tie_policy_from_string(const std::string& name) {
    if (name == "average") return TiePolicy::Average;
    if (name == "optimistic") return TiePolicy::Optimistic;
    if (name == "pessimistic") return TiePolicy::Pessimistic;
    fail("unknown tie policy '", name, "'");
}

namespace {

double rank_from_counts(size_t greater, size_t equal, TiePolicy policy) {
    switch (policy) {
        case TiePolicy::Optimistic: return 1.0 + static_cast<double>(greater);
        case TiePolicy::Pessimistic: return 1.0 + static_cast<double>(greater + equal);
        case TiePolicy::Average:
            return 1.0 + static_cast<double>(greater) + static_cast<double>(equal) / 2.0;
    }
    return 0.0;
}

double rank_with_buffer(const EmbeddingModel& model, const Triple& t, const KnowledgeGraph& kg,
                        Side side, bool filtered, TiePolicy policy, std::vector<double>& scores) {
    const double true_score = model.score(t);
    if (side == Side::Object)
        model.score_all_objects(t.s, t.r, scores);
    else
        model.score_all_subjects(t.r, t.o, scores);
    const int32_t true_entity = side == Side::Object ? t.o : t.s;
    size_t greater = 0, equal = 0;
    for (size_t e = 0; e < scores.size(); ++e) {
        if (static_cast<int32_t>(e) == true_entity) continue;
        if (filtered) {
            const Triple c = side == Side::Object ? Triple{t.s, t.r, static_cast<int32_t>(e)}
                                                  : Triple{static_cast<int32_t>(e), t.r, t.o};
            if (kg.exists_anywhere(c)) continue;
        }
        if (scores[e] > true_score)
            ++greater;
        else if (scores[e] == true_score)
            ++equal;
    }
    return rank_from_counts(greater, equal, policy);
}

}  // namespace

namespace {
void require_compatible(const EmbeddingModel& model, const KnowledgeGraph& kg) {
    require(model.n_entities == kg.num_entities() && model.n_relations == kg.num_relations(),
            "model and graph vocabulary sizes do not match (", model.n_entities, "x",
            model.n_relations, " vs ", kg.num_entities(), "x", kg.num_relations(), ")");
}
}  // namespace

double rank(const EmbeddingModel& model, const Triple& t, const KnowledgeGraph& kg, Side side,
            bool filtered, TiePolicy policy) {
    require_compatible(model, kg);
    model.check_range(t);
    kg.check_triple(t);
    std::vector<double> scores(model.n_entities);
    return rank_with_buffer(model, t, kg, side, filtered, policy, scores);
}

EvalReport evaluate(const EmbeddingModel& model, const KnowledgeGraph& kg,
                    std::span<const Triple> triples, const RankOptions& opts) {
    require(!triples.empty(), "evaluate: empty triple set");
    require_compatible(model, kg);
    EvalReport report;
    report.entries.resize(triples.size());

    auto worker = [&](size_t begin, size_t end) {
        std::vector<double> scores(model.n_entities);
        for (size_t i = begin; i < end; ++i) {
            const Triple& t = triples[i];
            EvalReport::Entry e;
            e.t = t;
            e.subject_rank = rank_with_buffer(model, t, kg, Side::Subject, opts.filtered,
                                              opts.tie_policy, scores);
            e.object_rank = rank_with_buffer(model, t, kg, Side::Object, opts.filtered,
                                             opts.tie_policy, scores);
            report.entries[i] = e;
        }
    };

    const int workers = std::max(1, opts.workers);
    if (workers == 1 || triples.size() < 2) {
        worker(0, triples.size());
    } else {
        std::vector<std::thread> threads;
        const size_t chunk = (triples.size() + static_cast<size_t>(workers) - 1) / static_cast<size_t>(workers);
        for (int w = 0; w < workers; ++w) {
            const size_t begin = static_cast<size_t>(w) * chunk;
            const size_t end = std::min(triples.size(), begin + chunk);
            if (begin >= end) break;
            threads.emplace_back(worker, begin, end);
        }
        for (auto& th : threads) th.join();
    }

    std::vector<double> ranks;
    ranks.reserve(2 * report.entries.size());
    for (const auto& e : report.entries) {
        ranks.push_back(e.subject_rank);
        ranks.push_back(e.object_rank);
    }
    const RankAggregates agg = aggregate_ranks(ranks);
    report.mr = agg.mr;
    report.mrr = agg.mrr;
    report.hits1 = agg.hits1;
    report.hits3 = agg.hits3;
    report.hits10 = agg.hits10;
    return report;
}

RankAggregates aggregate_ranks(std::span<const double> ranks) {
    require(!ranks.empty(), "aggregate_ranks: empty input");
    RankAggregates agg;
    for (double r : ranks) {
        require(r >= 1.0, "rank below 1: ", r);
        agg.mr += r;
        agg.mrr += 1.0 / r;
        agg.hits1 += r <= 1.0 ? 1.0 : 0.0;
        agg.hits3 += r <= 3.0 ? 1.0 : 0.0;
        agg.hits10 += r <= 10.0 ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(ranks.size());
    agg.mr /= n;
    agg.mrr /= n;
    agg.hits1 /= n;
    agg.hits3 /= n;
    agg.hits10 /= n;
    return agg;
}

std::vector<Triple> select_targets(const EvalReport& report, double rank_threshold, size_t cap,
                                   uint64_t seed, TargetSide side) {
    std::vector<Triple> qualified;
    for (const auto& e : report.entries) {
        bool ok = false;
        switch (side) {
            case TargetSide::Subject: ok = e.subject_rank <= rank_threshold; break;
            case TargetSide::Object: ok = e.object_rank <= rank_threshold; break;
            case TargetSide::Both:
                ok = e.subject_rank <= rank_threshold && e.object_rank <= rank_threshold;
                break;
        }
        if (ok) qualified.push_back(e.t);
    }
    require(!qualified.empty(), "no test triples qualify as targets at rank threshold ",
            rank_threshold);
    if (cap > 0 && qualified.size() > cap) {
        Rng rng(seed);
        rng.shuffle(qualified);
        qualified.resize(cap);
        std::sort(qualified.begin(), qualified.end());
    }
    return qualified;
}

DeltaMrr delta_mrr(const EvalReport& original, const EvalReport& poisoned) {
    require(original.entries.size() == poisoned.entries.size(),
            "delta_mrr: reports cover different target sets");
    for (size_t i = 0; i < original.entries.size(); ++i)
        require(original.entries[i].t == poisoned.entries[i].t,
                "delta_mrr: reports cover different target sets");
    require(original.mrr != 0.0, "delta_mrr: original MRR is zero");
    DeltaMrr d;
    d.original_mrr = original.mrr;
    d.poisoned_mrr = poisoned.mrr;
    d.orig_minus_pois_pct = (original.mrr - poisoned.mrr) / original.mrr * 100.0;
    d.pois_minus_orig_pct = (poisoned.mrr - original.mrr) / original.mrr * 100.0;
    return d;
}

namespace {
std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}
}  // namespace

void write_ranks_tsv(const EvalReport& report, const KnowledgeGraph& kg,
                     const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write ", path.string());
    for (const auto& e : report.entries) {
        out << kg.entity_name(e.t.s) << '\t' << kg.relation_name(e.t.r) << '\t'
            << kg.entity_name(e.t.o) << '\t' << fmt(e.subject_rank) << '\t' << fmt(e.object_rank)
            << '\n';
    }
    require(out.good(), "write failed: ", path.string());
}

void write_metrics(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write ", path.string());
    out << "mr=" << fmt(report.mr) << '\n';
    out << "mrr=" << fmt(report.mrr) << '\n';
    out << "hits1=" << fmt(report.hits1) << '\n';
    out << "hits3=" << fmt(report.hits3) << '\n';
    out << "hits10=" << fmt(report.hits10) << '\n';
    require(out.good(), "write failed: ", path.string());
}

void write_targets_tsv(const std::vector<Triple>& targets, const KnowledgeGraph& kg,
                       const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write ", path.string());
    for (const auto& t : targets)
        out << kg.entity_name(t.s) << '\t' << kg.relation_name(t.r) << '\t' << kg.entity_name(t.o)
            << '\n';
    require(out.good(), "write failed: ", path.string());
}

std::vector<Triple> read_targets_tsv(const KnowledgeGraph& kg, const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open ", path.string());
    std::vector<Triple> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        size_t t1 = line.find('\t');
        size_t t2 = (t1 == std::string::npos) ? std::string::npos : line.find('\t', t1 + 1);
        require(t1 != std::string::npos && t2 != std::string::npos, "malformed line in ",
                path.string(), ":", line_no);
        int32_t s = kg.entity_id(line.substr(0, t1));
        int32_t r = kg.relation_id(line.substr(t1 + 1, t2 - t1 - 1));
        int32_t o = kg.entity_id(line.substr(t2 + 1));
        require(s >= 0 && r >= 0 && o >= 0, path.string(), ":", line_no, ": unknown label");
        out.push_back({s, r, o});
    }
    return out;
}

}  // namespace kgp
