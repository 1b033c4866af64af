#include "kgp/attribution.hpp"

#include <algorithm>
#include <cmath>

#include "grad_accum.hpp"
#include "kgp/error.hpp"
#include "kgp/rng.hpp"

namespace kgp {

std::string to_string(AttributionMethod m) {
    switch (m) {
        case AttributionMethod::Dot: return "dot";
        case AttributionMethod::L2: return "l2";
        case AttributionMethod::Cos: return "cos";
        case AttributionMethod::GD: return "gd";
        case AttributionMethod::GL: return "gl";
        case AttributionMethod::GC: return "gc";
        case AttributionMethod::IF: return "if";
    }
    return "?";
}

AttributionMethod attribution_method_from_string(const std::string& name) {
    if (name == "dot") return AttributionMethod::Dot;
    if (name == "l2") return AttributionMethod::L2;
    if (name == "cos") return AttributionMethod::Cos;
    if (name == "gd") return AttributionMethod::GD;
    if (name == "gl") return AttributionMethod::GL;
    if (name == "gc") return AttributionMethod::GC;
    if (name == "if") return AttributionMethod::IF;
    fail("unknown attribution method '", name, "'");
}

bool is_gradient_method(AttributionMethod m) {
    return m == AttributionMethod::GD || m == AttributionMethod::GL || m == AttributionMethod::GC ||
           m == AttributionMethod::IF;
}

// --- Sparse/dense parameter-space vectors ---

double SparseGrad::dot(const SparseGrad& other) const {
    double acc = 0.0;
    size_t i = 0, j = 0;
    while (i < rows.size() && j < other.rows.size()) {
        if (rows[i].first < other.rows[j].first) {
            ++i;
        } else if (rows[i].first > other.rows[j].first) {
            ++j;
        } else {
            const auto& a = rows[i].second;
            const auto& b = other.rows[j].second;
            for (size_t q = 0; q < a.size(); ++q) acc += a[q] * b[q];
            ++i;
            ++j;
        }
    }
    return acc;
}

double SparseGrad::squared_norm() const {
    double acc = 0.0;
    for (const auto& [row, vals] : rows)
        for (double v : vals) acc += v * v;
    return acc;
}

double SparseGrad::norm() const { return std::sqrt(squared_norm()); }

void ParamVec::add(const SparseGrad& g, double scale) {
    for (const auto& [row, vals] : g.rows) {
        double* dst = data.data() + row * dim;
        for (size_t i = 0; i < vals.size(); ++i) dst[i] += scale * vals[i];
    }
}

double ParamVec::dot(const SparseGrad& g) const {
    double acc = 0.0;
    for (const auto& [row, vals] : g.rows) {
        const double* src = data.data() + row * dim;
        for (size_t i = 0; i < vals.size(); ++i) acc += src[i] * vals[i];
    }
    return acc;
}

double ParamVec::norm() const {
    double acc = 0.0;
    for (double v : data) acc += v * v;
    return std::sqrt(acc);
}

// --- Per-triple loss gradients ---

namespace {

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

SparseGrad grad_from_buffer(detail::GradBuffer& buf) {
    buf.sort_touched();
    SparseGrad g;
    g.rows.reserve(buf.touched_.size());
    for (size_t row : buf.touched_) {
        const double* src = buf.data_.data() + row * buf.dim_;
        g.rows.emplace_back(row, std::vector<double>(src, src + buf.dim_));
    }
    return g;
}

// BCE per-triple loss with label 1: loss = softplus(f) - f, dloss/df = σ(f) - 1.
double bce_dscore(double f) { return sigmoid(f) - 1.0; }

SparseGrad bce_grad(const EmbeddingModel& model, const Triple& t, size_t n_entities) {
    detail::GradBuffer buf(n_entities + model.n_relations, static_cast<size_t>(model.dim()));
    detail::accumulate_triple(model, t, bce_dscore(model.score(t)), buf, n_entities);
    return grad_from_buffer(buf);
}

// 1vsAll cross entropy over both sides of the triple (sum of the two sides).
SparseGrad ce_grad(const EmbeddingModel& model, const Triple& t, size_t n_entities) {
    detail::GradBuffer buf(n_entities + model.n_relations, static_cast<size_t>(model.dim()));
    std::vector<double> scores(model.n_entities), dl(model.n_entities);
    for (int side = 0; side < 2; ++side) {
        const bool object_side = side == 0;
        if (object_side)
            model.score_all_objects(t.s, t.r, scores);
        else
            model.score_all_subjects(t.r, t.o, scores);
        const double max_score = *std::max_element(scores.begin(), scores.end());
        double z = 0.0;
        for (double f : scores) z += std::exp(f - max_score);
        for (size_t e = 0; e < scores.size(); ++e) dl[e] = std::exp(scores[e] - max_score) / z;
        dl[static_cast<size_t>(object_side ? t.o : t.s)] -= 1.0;
        if (object_side)
            detail::accumulate_all_objects(model, t.s, t.r, dl, buf, n_entities);
        else
            detail::accumulate_all_subjects(model, t.r, t.o, dl, buf, n_entities);
    }
    return grad_from_buffer(buf);
}

// Gradient of the trilinear score form with one argument replaced by an
// arbitrary vector; the workhorse for analytic Hessian-vector products.
struct MultTriGrads {
    // dscore/ds as a function of (r, o) rows, etc.
    static void ds(const EmbeddingModel& m, std::span<const double> r, std::span<const double> o,
                   std::span<double> out) {
        const int k = m.k;
        if (m.kind == ModelKind::DistMult) {
            for (int i = 0; i < k; ++i) out[static_cast<size_t>(i)] = r[i] * o[i];
        } else {
            for (int i = 0; i < k; ++i) {
                out[static_cast<size_t>(i)] = r[i] * o[i] + r[k + i] * o[k + i];
                out[static_cast<size_t>(k + i)] = -r[k + i] * o[i] + r[i] * o[k + i];
            }
        }
    }
    static void dr(const EmbeddingModel& m, std::span<const double> s, std::span<const double> o,
                   std::span<double> out) {
        const int k = m.k;
        if (m.kind == ModelKind::DistMult) {
            for (int i = 0; i < k; ++i) out[static_cast<size_t>(i)] = s[i] * o[i];
        } else {
            for (int i = 0; i < k; ++i) {
                out[static_cast<size_t>(i)] = s[i] * o[i] + s[k + i] * o[k + i];
                out[static_cast<size_t>(k + i)] = -s[k + i] * o[i] + s[i] * o[k + i];
            }
        }
    }
    static void do_(const EmbeddingModel& m, std::span<const double> s, std::span<const double> r,
                    std::span<double> out) {
        const int k = m.k;
        if (m.kind == ModelKind::DistMult) {
            for (int i = 0; i < k; ++i) out[static_cast<size_t>(i)] = s[i] * r[i];
        } else {
            for (int i = 0; i < k; ++i) {
                out[static_cast<size_t>(i)] = s[i] * r[i] - s[k + i] * r[k + i];
                out[static_cast<size_t>(k + i)] = s[i] * r[k + i] + s[k + i] * r[i];
            }
        }
    }
};

}  // namespace

SparseGrad triple_loss_grad(const EmbeddingModel& model, const Triple& t, const GradConfig& cfg) {
    model.check_range(t);
    const size_t n_entities = model.n_entities;
    return cfg.loss == TripleLossKind::BCE ? bce_grad(model, t, n_entities)
                                           : ce_grad(model, t, n_entities);
}

SparseGrad triple_loss_hvp(const EmbeddingModel& model, const Triple& t, const GradConfig& cfg,
                           const ParamVec& v) {
    model.check_range(t);
    const size_t n_entities = model.n_entities;
    const size_t d = static_cast<size_t>(model.dim());
    require(v.data.size() == (n_entities + model.n_relations) * d, "hvp: vector size mismatch");

    if (cfg.loss == TripleLossKind::CE) {
        // Central finite differences of the analytic gradient; generic but
        // needs two full parameter copies per call.
        double vmax = 0.0;
        for (double x : v.data) vmax = std::max(vmax, std::abs(x));
        if (vmax == 0.0) return {};
        const double eps = 1e-5 / vmax;
        EmbeddingModel plus = model, minus = model;
        for (size_t row = 0; row < v.n_rows; ++row) {
            double* p = row < n_entities ? plus.E.data() + row * d
                                         : plus.R.data() + (row - n_entities) * d;
            double* q = row < n_entities ? minus.E.data() + row * d
                                         : minus.R.data() + (row - n_entities) * d;
            const double* vv = v.data.data() + row * d;
            for (size_t i = 0; i < d; ++i) {
                p[i] += eps * vv[i];
                q[i] -= eps * vv[i];
            }
        }
        SparseGrad gp = ce_grad(plus, t, n_entities);
        SparseGrad gm = ce_grad(minus, t, n_entities);
        ParamVec acc(v.n_rows, d);
        acc.add(gp, 1.0 / (2.0 * eps));
        acc.add(gm, -1.0 / (2.0 * eps));
        SparseGrad out;
        for (const auto& [row, _] : gp.rows) {
            const double* src = acc.data.data() + row * d;
            out.rows.emplace_back(row, std::vector<double>(src, src + d));
        }
        return out;
    }

    // Analytic HVP for the BCE per-triple loss:
    //   H = σ'(f) ∇f ∇fᵀ + (σ(f) − 1) ∇²f
    const double f = model.score(t);
    const TripleGrad tg = model.grad_score(t);
    const detail::Rows rw = detail::rows_of(t, n_entities);
    const bool self_loop = rw.s == rw.o;

    auto row_slice = [&](size_t row) -> std::span<const double> {
        return {v.data.data() + row * d, d};
    };
    const auto vs = row_slice(rw.s);
    const auto vr = row_slice(rw.r);
    const auto vo = row_slice(rw.o);

    // ∇f · v over the triple's rows. For self loops the s and o slices are the
    // same row and both contributions apply.
    double gdotv = 0.0;
    for (size_t i = 0; i < d; ++i)
        gdotv += tg.s[i] * vs[i] + tg.r[i] * vr[i] + tg.o[i] * vo[i];

    std::vector<double> hs(d, 0.0), hr(d, 0.0), ho(d, 0.0);
    const auto es = model.entity(static_cast<size_t>(t.s));
    const auto er = model.relation(static_cast<size_t>(t.r));
    const auto eo = model.entity(static_cast<size_t>(t.o));

    if (model.kind != ModelKind::TransE) {
        // Trilinear form: ∂²f/∂a∂b · v_b = ∂f/∂a with b replaced by v_b.
        std::vector<double> tmp(d);
        auto add_to = [&](std::vector<double>& dst, std::span<const double> t2) {
            for (size_t i = 0; i < d; ++i) dst[i] += t2[i];
        };
        MultTriGrads::ds(model, vr, eo, tmp);
        add_to(hs, tmp);
        MultTriGrads::ds(model, er, vo, tmp);
        add_to(hs, tmp);
        MultTriGrads::dr(model, vs, eo, tmp);
        add_to(hr, tmp);
        MultTriGrads::dr(model, es, vo, tmp);
        add_to(hr, tmp);
        MultTriGrads::do_(model, vs, er, tmp);
        add_to(ho, tmp);
        MultTriGrads::do_(model, es, vr, tmp);
        add_to(ho, tmp);
    } else if (model.p == 2) {
        // f = -||u||, u = s + r - o. ∇²_u f = -(I - ûûᵀ)/||u||.
        std::vector<double> u(d);
        double norm = 0.0;
        for (size_t i = 0; i < d; ++i) {
            u[i] = es[i] + er[i] - eo[i];
            norm += u[i] * u[i];
        }
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            std::vector<double> w(d);
            double udotw = 0.0;
            for (size_t i = 0; i < d; ++i) {
                w[i] = vs[i] + vr[i] - vo[i];
                udotw += u[i] / norm * w[i];
            }
            for (size_t i = 0; i < d; ++i) {
                const double mw = -(w[i] - u[i] / norm * udotw) / norm;
                hs[i] = mw;
                hr[i] = mw;
                ho[i] = -mw;
            }
        }
    }
    // TransE p=1: ∇²f = 0 almost everywhere.

    const double sig = sigmoid(f);
    const double sig_prime = sig * (1.0 - sig);
    const double outer_coeff = sig_prime * gdotv;
    const double curve_coeff = sig - 1.0;

    detail::GradBuffer buf(n_entities + model.n_relations, d);
    double* bs = buf.row(rw.s);
    double* br = buf.row(rw.r);
    double* bo = buf.row(rw.o);
    for (size_t i = 0; i < d; ++i) {
        bs[i] += outer_coeff * tg.s[i] + curve_coeff * hs[i];
        br[i] += outer_coeff * tg.r[i] + curve_coeff * hr[i];
        bo[i] += outer_coeff * tg.o[i] + curve_coeff * ho[i];
    }
    (void)self_loop;
    return grad_from_buffer(buf);
}

ParamVec lissa_inverse_hvp(const EmbeddingModel& model, const KnowledgeGraph& kg,
                           const GradConfig& grad_cfg, const LissaConfig& cfg,
                           const SparseGrad& v) {
    require(!kg.train().empty(), "LiSSA needs a non-empty train set");
    require(cfg.scale > 0.0 && cfg.damping >= 0.0, "invalid LiSSA config");
    const size_t n_rows = model.n_entities + model.n_relations;
    const size_t d = static_cast<size_t>(model.dim());
    const size_t depth = cfg.depth > 0 ? cfg.depth : std::min<size_t>(kg.train().size(), 5000);

    ParamVec v_dense(n_rows, d);
    v_dense.add(v);
    const double v_norm = v_dense.norm();

    ParamVec estimate(n_rows, d);
    Rng rng(cfg.sample_seed ^ 0x4c69535341ull);

    for (int rep = 0; rep < std::max(1, cfg.repeats); ++rep) {
        ParamVec h = v_dense;
        for (size_t step = 0; step < depth; ++step) {
            const Triple& t = kg.train()[rng.below(kg.train().size())];
            SparseGrad hv = triple_loss_hvp(model, t, grad_cfg, h);
            // h ← v + h − (H_t h + damping·h)/scale
            for (auto& x : h.data) x *= 1.0 - cfg.damping / cfg.scale;
            h.add(hv, -1.0 / cfg.scale);
            for (size_t i = 0; i < h.data.size(); ++i) h.data[i] += v_dense.data[i];

            if ((step + 1) % cfg.check_every == 0 || step + 1 == depth) {
                const double cur = h.norm();
                if (!std::isfinite(cur) || cur > cfg.divergence_factor * (v_norm + 1.0))
                    fail("LiSSA estimate diverged at step ", step + 1,
                         " (norm ", cur, "); increase damping or scale");
            }
        }
        for (size_t i = 0; i < h.data.size(); ++i)
            estimate.data[i] += h.data[i] / cfg.scale / static_cast<double>(std::max(1, cfg.repeats));
    }
    return estimate;
}

// --- Influence scores ---

namespace {

double vec_dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double vec_norm(std::span<const double> a) { return std::sqrt(vec_dot(a, a)); }

double cos_sim(std::span<const double> a, std::span<const double> b) {
    const double na = vec_norm(a), nb = vec_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return vec_dot(a, b) / (na * nb);
}

void sort_scores(std::vector<InfluenceScore>& scores) {
    std::sort(scores.begin(), scores.end(), [](const InfluenceScore& a, const InfluenceScore& b) {
        if (a.value != b.value) return a.value > b.value;
        return a.candidate < b.candidate;
    });
}

}  // namespace

std::vector<InfluenceScore> influence_scores_from_vec(const EmbeddingModel& model,
                                                      const Triple& target,
                                                      const Neighbourhood& neighbourhood,
                                                      const GradConfig& grad_cfg,
                                                      const ParamVec& v) {
    std::vector<InfluenceScore> scores;
    scores.reserve(neighbourhood.members.size());
    for (const Triple& x : neighbourhood.members) {
        const SparseGrad gx = triple_loss_grad(model, x, grad_cfg);
        scores.push_back({target, x, AttributionMethod::IF, v.dot(gx)});
    }
    sort_scores(scores);
    return scores;
}

std::vector<InfluenceScore> influence_scores(AttributionMethod method, const EmbeddingModel& model,
                                             const Triple& target, const Neighbourhood& neighbourhood,
                                             const GradConfig& grad_cfg, const LissaConfig& lissa_cfg,
                                             const KnowledgeGraph* kg) {
    require(!neighbourhood.members.empty(), "influence_scores: empty neighbourhood");
    model.check_range(target);
    std::vector<InfluenceScore> scores;
    scores.reserve(neighbourhood.members.size());

    switch (method) {
        case AttributionMethod::Dot:
        case AttributionMethod::L2:
        case AttributionMethod::Cos: {
            const std::vector<double> fz = model.feature_vector(target);
            for (const Triple& x : neighbourhood.members) {
                const std::vector<double> fx = model.feature_vector(x);
                double value = 0.0;
                if (method == AttributionMethod::Dot) {
                    value = vec_dot(fz, fx);
                } else if (method == AttributionMethod::L2) {
                    double acc = 0.0;
                    for (size_t i = 0; i < fz.size(); ++i) {
                        const double diff = fz[i] - fx[i];
                        acc += diff * diff;
                    }
                    value = -std::sqrt(acc);
                } else {
                    value = cos_sim(fz, fx);
                }
                scores.push_back({target, x, method, value});
            }
            break;
        }
        case AttributionMethod::GD:
        case AttributionMethod::GL:
        case AttributionMethod::GC: {
            const SparseGrad gz = triple_loss_grad(model, target, grad_cfg);
            for (const Triple& x : neighbourhood.members) {
                const SparseGrad gx = triple_loss_grad(model, x, grad_cfg);
                double value = 0.0;
                if (method == AttributionMethod::GD) {
                    value = gz.dot(gx);
                } else if (method == AttributionMethod::GL) {
                    value = -std::sqrt(std::max(
                        0.0, gz.squared_norm() + gx.squared_norm() - 2.0 * gz.dot(gx)));
                } else {
                    const double nz = gz.norm(), nx = gx.norm();
                    value = (nz == 0.0 || nx == 0.0) ? 0.0 : gz.dot(gx) / (nz * nx);
                }
                scores.push_back({target, x, method, value});
            }
            break;
        }
        case AttributionMethod::IF: {
            require(kg != nullptr, "IF scoring needs the knowledge graph for LiSSA sampling");
            const SparseGrad gz = triple_loss_grad(model, target, grad_cfg);
            const ParamVec v = lissa_inverse_hvp(model, *kg, grad_cfg, lissa_cfg, gz);
            return influence_scores_from_vec(model, target, neighbourhood, grad_cfg, v);
        }
    }
    sort_scores(scores);
    return scores;
}

Triple select_deletion(AttributionMethod method, const EmbeddingModel& model,
                       const KnowledgeGraph& kg, const Triple& target, const GradConfig& grad_cfg,
                       const LissaConfig& lissa_cfg) {
    const Neighbourhood n = kg.neighbourhood(target);
    require(!n.members.empty(), "target has no attack surface (empty neighbourhood)");
    return influence_scores(method, model, target, n, grad_cfg, lissa_cfg, &kg)[0].candidate;
}

Triple dissimilar_replacement(const EmbeddingModel& model, const KnowledgeGraph& kg,
                              const Triple& target, const Triple& influential) {
    // Keep the shared entity; replace the other end with the most dissimilar
    // entity. The paper uses cosine distance for multiplicative models and
    // Euclidean distance for additive ones.
    const bool subject_shared = influential.s == target.s || influential.s == target.o;
    const int32_t replaced = subject_shared ? influential.o : influential.s;
    const auto ref = model.entity(static_cast<size_t>(replaced));

    int32_t best = -1;
    double best_dist = -1.0;
    for (size_t e = 0; e < model.n_entities; ++e) {
        const Triple cand = subject_shared
                                ? Triple{influential.s, influential.r, static_cast<int32_t>(e)}
                                : Triple{static_cast<int32_t>(e), influential.r, influential.o};
        if (kg.in_train(cand) || cand == target) continue;
        const auto row = model.entity(e);
        double dist = 0.0;
        if (is_multiplicative(model.kind)) {
            dist = 1.0 - cos_sim(ref, row);
        } else {
            double acc = 0.0;
            for (size_t i = 0; i < row.size(); ++i) {
                const double diff = ref[i] - row[i];
                acc += diff * diff;
            }
            dist = std::sqrt(acc);
        }
        if (dist > best_dist) {
            best_dist = dist;
            best = static_cast<int32_t>(e);
        }
    }
    require(best >= 0, "no legal replacement entity (all candidates exist in train)");
    return subject_shared ? Triple{influential.s, influential.r, best}
                          : Triple{best, influential.r, influential.o};
}

std::vector<Triple> select_additions(AttributionMethod method, const EmbeddingModel& model,
                                     const KnowledgeGraph& kg, const Triple& target, size_t budget,
                                     const GradConfig& grad_cfg, const LissaConfig& lissa_cfg) {
    require(budget >= 1, "addition budget must be >= 1");
    const Neighbourhood n = kg.neighbourhood(target);
    require(!n.members.empty(), "target has no attack surface (empty neighbourhood)");
    const auto scores = influence_scores(method, model, target, n, grad_cfg, lissa_cfg, &kg);
    std::vector<Triple> additions;
    for (size_t i = 0; i < scores.size() && i < budget; ++i) {
        const Triple add = dissimilar_replacement(model, kg, target, scores[i].candidate);
        if (std::find(additions.begin(), additions.end(), add) == additions.end())
            additions.push_back(add);
    }
    return additions;
}

Triple select_addition(AttributionMethod method, const EmbeddingModel& model,
                       const KnowledgeGraph& kg, const Triple& target, const GradConfig& grad_cfg,
                       const LissaConfig& lissa_cfg) {
    return select_additions(method, model, kg, target, 1, grad_cfg, lissa_cfg)[0];
}

}  // namespace kgp
