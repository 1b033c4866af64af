#include "kgp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kgp/error.hpp"
#include "kgp/rng.hpp"

namespace kgp {

std::string to_string(Pattern p) {
    switch (p) {
        case Pattern::Symmetry: return "symmetry";
        case Pattern::Inversion: return "inversion";
        case Pattern::Composition: return "composition";
    }
    return "?";
}

std::string to_string(DecoyHeuristic h) {
    switch (h) {
        case DecoyHeuristic::SoftTruth: return "soft_truth";
        case DecoyHeuristic::KgeRank: return "kge_rank";
        case DecoyHeuristic::CosDistance: return "cos_distance";
    }
    return "?";
}

Pattern pattern_from_string(const std::string& name) {
    if (name == "symmetry" || name == "sym") return Pattern::Symmetry;
    if (name == "inversion" || name == "inv") return Pattern::Inversion;
    if (name == "composition" || name == "com") return Pattern::Composition;
    fail("unknown inference pattern '", name, "'");
}

DecoyHeuristic decoy_heuristic_from_string(const std::string& name) {
    if (name == "soft_truth" || name == "truth") return DecoyHeuristic::SoftTruth;
    if (name == "kge_rank" || name == "rank") return DecoyHeuristic::KgeRank;
    if (name == "cos_distance" || name == "cos") return DecoyHeuristic::CosDistance;
    fail("unknown decoy heuristic '", name, "'");
}

double soft_truth(const EmbeddingModel& model, const Triple& t) {
    const double f = model.score(t);
    double p = f >= 0.0 ? 1.0 / (1.0 + std::exp(-f)) : std::exp(f) / (1.0 + std::exp(f));
    // The sigmoid never reaches 0 or 1; keep the double in the open interval
    // too so the t-norm algebra stays well-defined at extreme scores.
    if (p >= 1.0) p = std::nextafter(1.0, 0.0);
    if (p <= 0.0) p = std::nextafter(0.0, 1.0);
    return p;
}

double tnorm_and(double a, double b) { return a * b; }
double tnorm_or(double a, double b) { return a + b - a * b; }
double tnorm_not(double a) { return 1.0 - a; }

double grounding_score(const EmbeddingModel& model, Grounding& g) {
    require(!g.body.empty(), "grounding without body atoms");
    double body = 1.0;
    for (const Triple& atom : g.body) body = tnorm_and(body, soft_truth(model, atom));
    const double head = soft_truth(model, g.head);
    double score = 1.0 - body * (1.0 - head);
    if (score >= 1.0) score = std::nextafter(1.0, 0.0);
    if (score <= 0.0) score = std::nextafter(0.0, 1.0);
    g.soft_truth = score;
    return g.soft_truth;
}

// --- Relation algebra ---

double inverse_residual(const EmbeddingModel& model, int32_t r_i, int32_t r) {
    const auto a = model.relation(static_cast<size_t>(r_i));
    const auto b = model.relation(static_cast<size_t>(r));
    const int k = model.k;
    double acc = 0.0;
    switch (model.kind) {
        case ModelKind::DistMult:
            for (int i = 0; i < k; ++i) {
                const double d = a[i] * b[i] - 1.0;
                acc += d * d;
            }
            break;
        case ModelKind::ComplEx:
            // Complex elementwise product against the ones vector. A trained
            // inverse pair satisfies e_ri ≈ conj(e_r) (score-exact inversion),
            // making the product real and positive; conjugating a factor here
            // would cancel exactly that signal.
            for (int i = 0; i < k; ++i) {
                const double re = a[i] * b[i] - a[k + i] * b[k + i] - 1.0;
                const double im = a[i] * b[k + i] + a[k + i] * b[i];
                acc += re * re + im * im;
            }
            break;
        case ModelKind::TransE:
            for (int i = 0; i < k; ++i) {
                const double d = a[i] + b[i];
                acc += d * d;
            }
            break;
    }
    return std::sqrt(acc);
}

std::vector<std::pair<int32_t, double>> inverse_relation_candidates(const EmbeddingModel& model,
                                                                    int32_t r) {
    require(model.n_relations >= 2, "need at least two relations");
    std::vector<std::pair<int32_t, double>> c;
    for (size_t i = 0; i < model.n_relations; ++i) {
        if (static_cast<int32_t>(i) == r) continue;
        c.emplace_back(static_cast<int32_t>(i), inverse_residual(model, static_cast<int32_t>(i), r));
    }
    std::sort(c.begin(), c.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });
    return c;
}

int32_t find_inverse_relation(const EmbeddingModel& model, int32_t r) {
    return inverse_relation_candidates(model, r)[0].first;
}

double composition_residual(const EmbeddingModel& model, int32_t r1, int32_t r2, int32_t r) {
    const auto a = model.relation(static_cast<size_t>(r1));
    const auto b = model.relation(static_cast<size_t>(r2));
    const auto c = model.relation(static_cast<size_t>(r));
    const int k = model.k;
    double acc = 0.0;
    switch (model.kind) {
        case ModelKind::DistMult:
            for (int i = 0; i < k; ++i) {
                const double d = a[i] * b[i] - c[i];
                acc += d * d;
            }
            break;
        case ModelKind::ComplEx:
            for (int i = 0; i < k; ++i) {
                const double re = a[i] * b[i] - a[k + i] * b[k + i] - c[i];
                const double im = a[i] * b[k + i] + a[k + i] * b[i] - c[k + i];
                acc += re * re + im * im;
            }
            break;
        case ModelKind::TransE:
            for (int i = 0; i < k; ++i) {
                const double d = a[i] + b[i] - c[i];
                acc += d * d;
            }
            break;
    }
    return std::sqrt(acc);
}

std::pair<int32_t, int32_t> find_composition_pair(const EmbeddingModel& model, int32_t r) {
    require(model.n_relations >= 1, "need at least one relation");
    std::pair<int32_t, int32_t> best{0, 0};
    double best_residual = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < model.n_relations; ++i) {
        for (size_t j = 0; j < model.n_relations; ++j) {
            const double res =
                composition_residual(model, static_cast<int32_t>(i), static_cast<int32_t>(j), r);
            if (res < best_residual) {
                best_residual = res;
                best = {static_cast<int32_t>(i), static_cast<int32_t>(j)};
            }
        }
    }
    return best;
}

// --- K-means ---

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace

Clustering kmeans_entities(const EmbeddingModel& model, int k, uint64_t seed) {
    const size_t n = model.n_entities;
    require(k >= 1 && static_cast<size_t>(k) <= n, "k must be in [1, |E|], got ", k);
    const size_t d = static_cast<size_t>(model.dim());

    Clustering cl;
    cl.k = k;
    cl.assignment.assign(n, 0);
    cl.centroids.assign(static_cast<size_t>(k), std::vector<double>(d, 0.0));

    // k-means++ style seeding for spread-out initial centroids.
    Rng rng(seed ^ 0x6b6d65616e73ull);
    std::vector<size_t> centers;
    centers.push_back(rng.below(n));
    std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
    while (centers.size() < static_cast<size_t>(k)) {
        const auto last = model.entity(centers.back());
        double total = 0.0;
        for (size_t e = 0; e < n; ++e) {
            dist2[e] = std::min(dist2[e], sq_dist(model.entity(e), last));
            total += dist2[e];
        }
        size_t chosen = 0;
        if (total <= 0.0) {
            chosen = rng.below(n);
        } else {
            double pick = rng.uniform01() * total, acc = 0.0;
            for (size_t e = 0; e < n; ++e) {
                acc += dist2[e];
                if (acc >= pick) {
                    chosen = e;
                    break;
                }
            }
        }
        centers.push_back(chosen);
    }
    for (int c = 0; c < k; ++c) {
        const auto row = model.entity(centers[static_cast<size_t>(c)]);
        std::copy(row.begin(), row.end(), cl.centroids[static_cast<size_t>(c)].begin());
    }

    std::vector<size_t> counts(static_cast<size_t>(k), 0);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (size_t e = 0; e < n; ++e) {
            const auto row = model.entity(e);
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double dd = sq_dist(row, cl.centroids[static_cast<size_t>(c)]);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            if (cl.assignment[e] != best) {
                cl.assignment[e] = best;
                changed = true;
            }
        }

        for (auto& c : cl.centroids) std::fill(c.begin(), c.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (size_t e = 0; e < n; ++e) {
            auto& c = cl.centroids[static_cast<size_t>(cl.assignment[e])];
            const auto row = model.entity(e);
            for (size_t i = 0; i < d; ++i) c[i] += row[i];
            ++counts[static_cast<size_t>(cl.assignment[e])];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] == 0) {
                // Reseed the empty cluster from the entity farthest from its centroid.
                size_t far = 0;
                double far_d = -1.0;
                for (size_t e = 0; e < n; ++e) {
                    const double dd = sq_dist(
                        model.entity(e),
                        cl.centroids[static_cast<size_t>(cl.assignment[e])]);
                    if (dd > far_d) {
                        far_d = dd;
                        far = e;
                    }
                }
                const auto row = model.entity(far);
                std::copy(row.begin(), row.end(), cl.centroids[static_cast<size_t>(c)].begin());
                cl.assignment[far] = c;
                changed = true;
                continue;
            }
            for (auto& v : cl.centroids[static_cast<size_t>(c)])
                v /= static_cast<double>(counts[static_cast<size_t>(c)]);
        }
        if (!changed) break;
    }

    cl.wcss = 0.0;
    for (size_t e = 0; e < n; ++e)
        cl.wcss += sq_dist(model.entity(e), cl.centroids[static_cast<size_t>(cl.assignment[e])]);
    return cl;
}

std::vector<int> default_elbow_grid() {
    return {5, 20, 50, 100, 150, 200, 250, 300, 350, 400, 450, 500};
}

int elbow_k(const EmbeddingModel& model, const std::vector<int>& grid, uint64_t seed) {
    std::vector<int> usable;
    for (int k : grid)
        if (k >= 1 && static_cast<size_t>(k) <= model.n_entities) usable.push_back(k);
    require(!usable.empty(), "no usable cluster counts in the elbow grid for |E|=",
            model.n_entities);
    if (usable.size() < 3) return usable.front();
    std::vector<double> wcss;
    wcss.reserve(usable.size());
    for (int k : usable) wcss.push_back(kmeans_entities(model, k, seed).wcss);
    size_t best = 1;
    double best_d2 = -std::numeric_limits<double>::infinity();
    for (size_t i = 1; i + 1 < usable.size(); ++i) {
        const double d2 = wcss[i - 1] - 2.0 * wcss[i] + wcss[i + 1];
        if (d2 > best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return usable[best];
}

// --- Decoy selection ---

int32_t InferenceContext::inverse_of(int32_t r) {
    if (inverse_cache_.empty()) inverse_cache_.assign(model_->n_relations, -1);
    auto& slot = inverse_cache_[static_cast<size_t>(r)];
    if (slot < 0) slot = find_inverse_relation(*model_, r);
    return slot;
}

std::pair<int32_t, int32_t> InferenceContext::composition_of(int32_t r) {
    if (composition_cache_.empty()) composition_cache_.assign(model_->n_relations, {-1, -1});
    auto& slot = composition_cache_[static_cast<size_t>(r)];
    if (slot.first < 0) slot = find_composition_pair(*model_, r);
    return slot;
}

const Clustering& InferenceContext::clustering() {
    if (!have_clustering_) {
        int k = cluster_cfg_.k;
        if (k <= 0) k = elbow_k(*model_, cluster_cfg_.grid, cluster_cfg_.seed);
        k = std::min<int>(k, static_cast<int>(model_->n_entities));
        clustering_ = kmeans_entities(*model_, k, cluster_cfg_.seed);
        have_clustering_ = true;
    }
    return clustering_;
}

namespace {

// Candidate decoy triple for replacing the `side` entity of the target with e.
Triple decoy_triple(const Triple& target, Side side, int32_t e) {
    return side == Side::Object ? Triple{target.s, target.r, e} : Triple{e, target.r, target.o};
}

// Symmetry/inversion body atom for a decoy on the given side.
Triple body_atom(const Triple& target, Side side, int32_t e, int32_t body_relation) {
    // Object side: (o', r_b, s). Subject side: (o, r_b, s').
    return side == Side::Object ? Triple{e, body_relation, target.s}
                                : Triple{target.o, body_relation, e};
}

// Entity ids nearest to each cluster centroid, used as composition
// representatives for the greedy per-cluster scan.
std::vector<int32_t> cluster_representatives(const EmbeddingModel& model, const Clustering& cl) {
    std::vector<int32_t> rep(static_cast<size_t>(cl.k), -1);
    std::vector<double> best(static_cast<size_t>(cl.k), std::numeric_limits<double>::infinity());
    for (size_t e = 0; e < model.n_entities; ++e) {
        const int c = cl.assignment[e];
        const double dd = sq_dist(model.entity(e), cl.centroids[static_cast<size_t>(c)]);
        if (dd < best[static_cast<size_t>(c)]) {
            best[static_cast<size_t>(c)] = dd;
            rep[static_cast<size_t>(c)] = static_cast<int32_t>(e);
        }
    }
    std::vector<int32_t> out;
    for (int32_t r : rep)
        if (r >= 0) out.push_back(r);
    return out;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 1.0;
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

DecoyChoice select_decoy(const EmbeddingModel& model, const KnowledgeGraph& kg, const Triple& target,
                         Side side, Pattern pattern, DecoyHeuristic heuristic,
                         InferenceContext& ctx) {
    model.check_range(target);
    kg.check_triple(target);
    const int32_t replaced = side == Side::Object ? target.o : target.s;
    const int32_t anchor = side == Side::Object ? target.s : target.o;

    // Legal decoy entities: a non-train corruption on the chosen side. For
    // symmetry the body atom must not coincide with the decoy head itself.
    std::vector<int32_t> pool;
    pool.reserve(model.n_entities);
    for (size_t e = 0; e < model.n_entities; ++e) {
        const int32_t id = static_cast<int32_t>(e);
        if (id == replaced) continue;
        if (pattern == Pattern::Symmetry && id == anchor) continue;
        if (kg.in_train(decoy_triple(target, side, id))) continue;
        pool.push_back(id);
    }
    require(!pool.empty(), "no legal decoy candidate (all corruptions exist in train)");

    DecoyChoice choice;
    choice.target = target;
    choice.side = side;
    choice.heuristic = heuristic;

    switch (heuristic) {
        case DecoyHeuristic::SoftTruth: {
            int32_t body_rel = target.r;
            if (pattern == Pattern::Inversion) body_rel = ctx.inverse_of(target.r);
            double best = std::numeric_limits<double>::infinity();
            int32_t best_e = -1;
            if (pattern == Pattern::Composition) {
                const auto [r1, r2] = ctx.composition_of(target.r);
                const auto reps = cluster_representatives(model, ctx.clustering());
                for (int32_t mid : reps) {
                    for (int32_t e : pool) {
                        const Triple head = decoy_triple(target, side, e);
                        Grounding g;
                        g.pattern = pattern;
                        g.head = head;
                        if (side == Side::Object)
                            g.body = {{target.s, r1, mid}, {mid, r2, e}};
                        else
                            g.body = {{e, r1, mid}, {mid, r2, target.o}};
                        const double score = grounding_score(model, g);
                        if (score < best || (score == best && e < best_e)) {
                            best = score;
                            best_e = e;
                        }
                    }
                }
            } else {
                for (int32_t e : pool) {
                    Grounding g;
                    g.pattern = pattern;
                    g.head = decoy_triple(target, side, e);
                    g.body = {body_atom(target, side, e, body_rel)};
                    const double score = grounding_score(model, g);
                    if (score < best || (score == best && e < best_e)) {
                        best = score;
                        best_e = e;
                    }
                }
            }
            choice.decoy = decoy_triple(target, side, best_e);
            choice.score = best;
            break;
        }
        case DecoyHeuristic::KgeRank: {
            // The corruption at filtered rank target_rank + 1: the best-scored
            // legal candidate at or below the target's score (ties by entity id).
            std::vector<double> scores(model.n_entities);
            if (side == Side::Object)
                model.score_all_objects(target.s, target.r, scores);
            else
                model.score_all_subjects(target.r, target.o, scores);
            const double target_score = model.score(target);
            std::vector<int32_t> order;
            for (int32_t e : pool) {
                // Filtered protocol also ignores valid/test corruptions.
                if (kg.exists_anywhere(decoy_triple(target, side, e))) continue;
                order.push_back(e);
            }
            require(!order.empty(), "no legal decoy candidate under the filtered protocol");
            std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
                const double sa = scores[static_cast<size_t>(a)];
                const double sb = scores[static_cast<size_t>(b)];
                if (sa != sb) return sa > sb;
                return a < b;
            });
            int32_t chosen = order.back();
            double chosen_rank = static_cast<double>(order.size());
            for (size_t i = 0; i < order.size(); ++i) {
                if (scores[static_cast<size_t>(order[i])] <= target_score) {
                    chosen = order[i];
                    chosen_rank = static_cast<double>(i + 1);
                    break;
                }
            }
            choice.decoy = decoy_triple(target, side, chosen);
            choice.score = chosen_rank;
            break;
        }
        case DecoyHeuristic::CosDistance: {
            const auto ref = model.entity(static_cast<size_t>(replaced));
            double best = -1.0;
            int32_t best_e = -1;
            for (int32_t e : pool) {
                const double d = cosine_distance(ref, model.entity(static_cast<size_t>(e)));
                if (d > best || (d == best && e < best_e)) {
                    best = d;
                    best_e = e;
                }
            }
            choice.decoy = decoy_triple(target, side, best_e);
            choice.score = best;
            break;
        }
    }
    return choice;
}

int32_t select_adversarial_entity(const EmbeddingModel& model, const KnowledgeGraph& kg,
                                  const DecoyChoice& decoy, int32_t r1, int32_t r2) {
    const Triple& head = decoy.decoy;
    const Triple& target = decoy.target;
    // The body chain always runs head.s -> mid -> head.o, whichever side the
    // decoy replaced.
    const int32_t from = head.s;
    const int32_t to = head.o;

    double best = -std::numeric_limits<double>::infinity();
    int32_t best_e = -1;
    for (size_t mid = 0; mid < model.n_entities; ++mid) {
        const int32_t m = static_cast<int32_t>(mid);
        const Triple body1{from, r1, m};
        const Triple body2{m, r2, to};
        if (kg.in_train(body1) && kg.in_train(body2)) continue;  // nothing new to add
        if (body1 == head || body2 == head) continue;            // never add the decoy itself
        if (body1 == target || body2 == target) continue;        // never add the target fact
        Grounding g;
        g.pattern = Pattern::Composition;
        g.head = head;
        g.body = {body1, body2};
        const double score = grounding_score(model, g);
        if (score > best || (score == best && m < best_e)) {
            best = score;
            best_e = m;
        }
    }
    require(best_e >= 0, "no legal intermediate entity (body space saturated)");
    return best_e;
}

InferenceAttackResult inference_attack(const EmbeddingModel& model, const KnowledgeGraph& kg,
                                       const Triple& target, Pattern pattern,
                                       DecoyHeuristic heuristic, InferenceContext& ctx) {
    InferenceAttackResult result;
    auto push_edit = [&](const Triple& t, const Triple& decoy) {
        if (kg.in_train(t)) return;   // filtered out: already present
        if (t == decoy) return;       // the threat model forbids adding the decoy
        if (t == target) return;      // never inject the target fact
        if (std::find(result.additions.begin(), result.additions.end(), t) ==
            result.additions.end()) {
            result.additions.push_back(t);
            result.addition_decoy.push_back(result.decoys.size());
        }
    };

    for (Side side : {Side::Object, Side::Subject}) {
        DecoyChoice decoy = select_decoy(model, kg, target, side, pattern, heuristic, ctx);
        switch (pattern) {
            case Pattern::Symmetry: {
                const Triple add = side == Side::Object
                                       ? Triple{decoy.decoy.o, target.r, target.s}
                                       : Triple{target.o, target.r, decoy.decoy.s};
                push_edit(add, decoy.decoy);
                Grounding g{pattern, decoy.decoy, {add}, 0.0};
                result.grounding_scores.push_back(grounding_score(model, g));
                break;
            }
            case Pattern::Inversion: {
                const int32_t r_i = ctx.inverse_of(target.r);
                const Triple add = side == Side::Object
                                       ? Triple{decoy.decoy.o, r_i, target.s}
                                       : Triple{target.o, r_i, decoy.decoy.s};
                push_edit(add, decoy.decoy);
                Grounding g{pattern, decoy.decoy, {add}, 0.0};
                result.grounding_scores.push_back(grounding_score(model, g));
                break;
            }
            case Pattern::Composition: {
                const auto [r1, r2] = ctx.composition_of(target.r);
                const int32_t mid = select_adversarial_entity(model, kg, decoy, r1, r2);
                const Triple body1{decoy.decoy.s, r1, mid};
                const Triple body2{mid, r2, decoy.decoy.o};
                push_edit(body1, decoy.decoy);
                push_edit(body2, decoy.decoy);
                Grounding g{pattern, decoy.decoy, {body1, body2}, 0.0};
                result.grounding_scores.push_back(grounding_score(model, g));
                break;
            }
        }
        result.decoys.push_back(decoy);
    }
    return result;
}

}  // namespace kgp
