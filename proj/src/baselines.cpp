#include "kgp/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kgp/error.hpp"
#include "kgp/rng.hpp"

namespace kgp {

namespace {

constexpr size_t kMaxSampleAttempts = 200000;

double score_rows(ModelKind kind, int k, int p, std::span<const double> s,
                  std::span<const double> r, std::span<const double> o) {
    switch (kind) {
        case ModelKind::DistMult: {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) acc += s[i] * r[i] * o[i];
            return acc;
        }
        case ModelKind::ComplEx: {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) {
                acc += (s[i] * r[i] - s[k + i] * r[k + i]) * o[i] +
                       (s[i] * r[k + i] + s[k + i] * r[i]) * o[k + i];
            }
            return acc;
        }
        case ModelKind::TransE: {
            double acc = 0.0;
            if (p == 1) {
                for (int i = 0; i < k; ++i) acc += std::abs(s[i] + r[i] - o[i]);
            } else {
                for (int i = 0; i < k; ++i) {
                    const double d = s[i] + r[i] - o[i];
                    acc += d * d;
                }
                acc = std::sqrt(acc);
            }
            return -acc;
        }
    }
    return 0.0;
}

// Perturbed rows for the target's two entities: e ← e - ε·ĝ where g is the
// gradient of the target score w.r.t. that entity's embedding.
struct Perturbation {
    int32_t s_entity, o_entity;
    std::vector<double> s_row, o_row;
};

Perturbation perturb_target_entities(const EmbeddingModel& model, const Triple& target,
                                     const DirectConfig& cfg) {
    const TripleGrad tg = model.grad_score(target);
    const size_t d = static_cast<size_t>(model.dim());
    std::vector<double> gs = tg.s, go = tg.o;
    if (target.s == target.o) {
        // One shared row: combine both contributions.
        for (size_t i = 0; i < d; ++i) {
            gs[i] += tg.o[i];
            go[i] = gs[i];
        }
    }
    double ns = 0.0, no = 0.0;
    for (size_t i = 0; i < d; ++i) {
        ns += gs[i] * gs[i];
        no += go[i] * go[i];
    }
    ns = std::sqrt(ns);
    no = std::sqrt(no);
    require(ns > 0.0 || no > 0.0, "zero gradient at the target; no perturbation direction");

    Perturbation pert;
    pert.s_entity = target.s;
    pert.o_entity = target.o;
    const auto es = model.entity(static_cast<size_t>(target.s));
    const auto eo = model.entity(static_cast<size_t>(target.o));
    pert.s_row.assign(es.begin(), es.end());
    pert.o_row.assign(eo.begin(), eo.end());
    const double ss = cfg.normalize_gradient ? (ns > 0.0 ? cfg.epsilon / ns : 0.0) : cfg.epsilon;
    const double so = cfg.normalize_gradient ? (no > 0.0 ? cfg.epsilon / no : 0.0) : cfg.epsilon;
    for (size_t i = 0; i < d; ++i) {
        pert.s_row[i] -= ss * gs[i];
        pert.o_row[i] -= so * go[i];
    }
    return pert;
}

double perturbed_score(const EmbeddingModel& model, const Perturbation& pert, const Triple& t) {
    auto entity_row = [&](int32_t e) -> std::span<const double> {
        if (e == pert.s_entity) return pert.s_row;
        if (e == pert.o_entity) return pert.o_row;
        return model.entity(static_cast<size_t>(e));
    };
    return score_rows(model.kind, model.k, model.p, entity_row(t.s),
                      model.relation(static_cast<size_t>(t.r)), entity_row(t.o));
}

}  // namespace

double direct_score_drop(const EmbeddingModel& model, const Triple& target, const Triple& candidate,
                         const DirectConfig& cfg) {
    const Perturbation pert = perturb_target_entities(model, target, cfg);
    return model.score(candidate) - perturbed_score(model, pert, candidate);
}

Triple direct_del(const EmbeddingModel& model, const KnowledgeGraph& kg, const Triple& target,
                  const DirectConfig& cfg) {
    const Neighbourhood n = kg.neighbourhood(target);
    require(!n.members.empty(), "target has no attack surface (empty neighbourhood)");
    const Perturbation pert = perturb_target_entities(model, target, cfg);
    Triple best = n.members.front();
    double best_drop = -std::numeric_limits<double>::infinity();
    for (const Triple& x : n.members) {
        const double drop = model.score(x) - perturbed_score(model, pert, x);
        if (drop > best_drop) {
            best_drop = drop;
            best = x;
        }
    }
    return best;
}

Triple direct_add(const EmbeddingModel& model, const KnowledgeGraph& kg, const Triple& target,
                  const DirectConfig& cfg, uint64_t seed) {
    require(cfg.downsample_pct > 0.0 && cfg.downsample_pct <= 100.0,
            "downsample percentage must be in (0, 100]");
    const Perturbation pert = perturb_target_entities(model, target, cfg);
    Rng rng(seed ^ 0x6469726563746164ull);
    const double keep = cfg.downsample_pct / 100.0;

    Triple best{};
    double best_drop = -std::numeric_limits<double>::infinity();
    bool found = false;

    std::vector<int32_t> anchors{target.s};
    if (target.o != target.s) anchors.push_back(target.o);
    for (int32_t anchor : anchors) {
        for (size_t r = 0; r < kg.num_relations(); ++r) {
            for (int side = 0; side < 2; ++side) {
                for (size_t e = 0; e < kg.num_entities(); ++e) {
                    if (rng.uniform01() >= keep) continue;
                    const Triple cand = side == 0
                                            ? Triple{anchor, static_cast<int32_t>(r),
                                                     static_cast<int32_t>(e)}
                                            : Triple{static_cast<int32_t>(e),
                                                     static_cast<int32_t>(r), anchor};
                    if (kg.in_train(cand) || cand == target) continue;
                    const double drop = model.score(cand) - perturbed_score(model, pert, cand);
                    if (!found || drop > best_drop || (drop == best_drop && cand < best)) {
                        best = cand;
                        best_drop = drop;
                        found = true;
                    }
                }
            }
        }
    }
    require(found, "direct_add: candidate space exhausted after down-sampling");
    return best;
}

std::vector<Edit> random_edit(const KnowledgeGraph& kg, const Triple& target, EditMode mode,
                              EditOp op, size_t count, uint64_t seed) {
    require(count >= 1, "count must be >= 1");
    kg.check_triple(target);
    Rng rng(seed ^ 0x72616e646f6d65ull);
    std::vector<Edit> edits;
    TripleSet chosen;

    if (op == EditOp::Del) {
        std::vector<Triple> pool;
        if (mode == EditMode::Neighbourhood) {
            pool = kg.neighbourhood(target).members;
        } else {
            pool = kg.train();
        }
        require(pool.size() >= count, "candidate space exhausted: need ", count, " deletions, have ",
                pool.size());
        for (size_t i = 0; i < count; ++i) {
            const size_t j = i + rng.below(pool.size() - i);
            std::swap(pool[i], pool[j]);
            edits.push_back({Edit::Op::Del, pool[i]});
        }
        return edits;
    }

    const uint64_t n_entities = kg.num_entities();
    const uint64_t n_relations = kg.num_relations();
    size_t attempts = 0;
    while (edits.size() < count) {
        require(++attempts < kMaxSampleAttempts, "candidate space exhausted while sampling additions");
        Triple t;
        if (mode == EditMode::Global) {
            t = {static_cast<int32_t>(rng.below(n_entities)),
                 static_cast<int32_t>(rng.below(n_relations)),
                 static_cast<int32_t>(rng.below(n_entities))};
        } else {
            const int32_t anchor = rng.below(2) == 0 ? target.s : target.o;
            const int32_t other = static_cast<int32_t>(rng.below(n_entities));
            const int32_t rel = static_cast<int32_t>(rng.below(n_relations));
            t = rng.below(2) == 0 ? Triple{anchor, rel, other} : Triple{other, rel, anchor};
        }
        if (kg.in_train(t) || chosen.count(t)) continue;
        chosen.insert(t);
        edits.push_back({Edit::Op::Add, t});
    }
    return edits;
}

}  // namespace kgp
