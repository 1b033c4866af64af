#pragma once

// Internal gradient-accumulation helpers shared by the trainer and the
// attribution code. Parameter rows are indexed entities-first, then relations.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "kgp/model.hpp"

namespace kgp::detail {

struct GradBuffer {
    GradBuffer(size_t n_rows, size_t dim)
        : dim_(dim), data_(n_rows * dim, 0.0), touched_flag_(n_rows, 0) {}

    void add(size_t row, std::span<const double> g, double scale) {
        touch(row);
        double* dst = data_.data() + row * dim_;
        for (size_t i = 0; i < dim_; ++i) dst[i] += scale * g[i];
    }

    double* row(size_t r) {
        touch(r);
        return data_.data() + r * dim_;
    }

    void touch(size_t row) {
        if (!touched_flag_[row]) {
            touched_flag_[row] = 1;
            touched_.push_back(row);
        }
    }

    void clear() {
        for (size_t row : touched_) {
            std::fill_n(data_.data() + row * dim_, dim_, 0.0);
            touched_flag_[row] = 0;
        }
        touched_.clear();
    }

    void sort_touched() { std::sort(touched_.begin(), touched_.end()); }

    size_t dim_;
    std::vector<double> data_;
    std::vector<size_t> touched_;
    std::vector<uint8_t> touched_flag_;
};

struct Rows {
    size_t s, r, o;
};

inline Rows rows_of(const Triple& t, size_t n_entities) {
    return {static_cast<size_t>(t.s), n_entities + static_cast<size_t>(t.r),
            static_cast<size_t>(t.o)};
}

inline void accumulate_triple(const EmbeddingModel& model, const Triple& t, double dscore,
                              GradBuffer& g, size_t n_entities) {
    const TripleGrad tg = model.grad_score(t);
    const Rows rw = rows_of(t, n_entities);
    g.add(rw.s, tg.s, dscore);
    g.add(rw.r, tg.r, dscore);
    g.add(rw.o, tg.o, dscore);
}

// Chain rule for a full object-side candidate sweep: dl[e] = dLoss/dscore(s,r,e).
inline void accumulate_all_objects(const EmbeddingModel& model, int32_t s, int32_t r,
                                   std::span<const double> dl, GradBuffer& g, size_t n_entities) {
    const int k = model.k;
    const size_t d = static_cast<size_t>(model.dim());
    const auto es = model.entity(static_cast<size_t>(s));
    const auto er = model.relation(static_cast<size_t>(r));
    double* gs = g.row(static_cast<size_t>(s));
    double* gr = g.row(n_entities + static_cast<size_t>(r));
    switch (model.kind) {
        case ModelKind::DistMult: {
            std::vector<double> q(d), w(d, 0.0);
            for (int i = 0; i < k; ++i) q[static_cast<size_t>(i)] = es[i] * er[i];
            for (size_t e = 0; e < model.n_entities; ++e) {
                if (dl[e] == 0.0) continue;
                const double* row = model.E.data() + e * d;
                double* ge = g.row(e);
                for (size_t i = 0; i < d; ++i) {
                    ge[i] += dl[e] * q[i];
                    w[i] += dl[e] * row[i];
                }
            }
            for (int i = 0; i < k; ++i) {
                gs[i] += er[i] * w[static_cast<size_t>(i)];
                gr[i] += es[i] * w[static_cast<size_t>(i)];
            }
            break;
        }
        case ModelKind::ComplEx: {
            std::vector<double> qr(static_cast<size_t>(k)), qi(static_cast<size_t>(k));
            std::vector<double> wr(static_cast<size_t>(k), 0.0), wi(static_cast<size_t>(k), 0.0);
            for (int i = 0; i < k; ++i) {
                qr[static_cast<size_t>(i)] = es[i] * er[i] - es[k + i] * er[k + i];
                qi[static_cast<size_t>(i)] = es[i] * er[k + i] + es[k + i] * er[i];
            }
            for (size_t e = 0; e < model.n_entities; ++e) {
                if (dl[e] == 0.0) continue;
                const double* row = model.E.data() + e * d;
                double* ge = g.row(e);
                for (int i = 0; i < k; ++i) {
                    ge[i] += dl[e] * qr[static_cast<size_t>(i)];
                    ge[k + i] += dl[e] * qi[static_cast<size_t>(i)];
                    wr[static_cast<size_t>(i)] += dl[e] * row[i];
                    wi[static_cast<size_t>(i)] += dl[e] * row[k + i];
                }
            }
            for (int i = 0; i < k; ++i) {
                gs[i] += er[i] * wr[static_cast<size_t>(i)] + er[k + i] * wi[static_cast<size_t>(i)];
                gs[k + i] +=
                    -er[k + i] * wr[static_cast<size_t>(i)] + er[i] * wi[static_cast<size_t>(i)];
                gr[i] += es[i] * wr[static_cast<size_t>(i)] + es[k + i] * wi[static_cast<size_t>(i)];
                gr[k + i] +=
                    -es[k + i] * wr[static_cast<size_t>(i)] + es[i] * wi[static_cast<size_t>(i)];
            }
            break;
        }
        case ModelKind::TransE: {
            std::vector<double> q(d);
            for (int i = 0; i < k; ++i) q[static_cast<size_t>(i)] = es[i] + er[i];
            for (size_t e = 0; e < model.n_entities; ++e) {
                if (dl[e] == 0.0) continue;
                const double* row = model.E.data() + e * d;
                double* ge = g.row(e);
                if (model.p == 1) {
                    for (size_t i = 0; i < d; ++i) {
                        const double diff = q[i] - row[i];
                        const double sg = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                        gs[i] += dl[e] * -sg;
                        gr[i] += dl[e] * -sg;
                        ge[i] += dl[e] * sg;
                    }
                } else {
                    double norm = 0.0;
                    for (size_t i = 0; i < d; ++i) {
                        const double diff = q[i] - row[i];
                        norm += diff * diff;
                    }
                    norm = std::sqrt(norm);
                    if (norm == 0.0) continue;
                    for (size_t i = 0; i < d; ++i) {
                        const double dir = (q[i] - row[i]) / norm;
                        gs[i] += dl[e] * -dir;
                        gr[i] += dl[e] * -dir;
                        ge[i] += dl[e] * dir;
                    }
                }
            }
            break;
        }
    }
}

inline void accumulate_all_subjects(const EmbeddingModel& model, int32_t r, int32_t o,
                                    std::span<const double> dl, GradBuffer& g, size_t n_entities) {
    const int k = model.k;
    const size_t d = static_cast<size_t>(model.dim());
    const auto er = model.relation(static_cast<size_t>(r));
    const auto eo = model.entity(static_cast<size_t>(o));
    double* go = g.row(static_cast<size_t>(o));
    double* gr = g.row(n_entities + static_cast<size_t>(r));
    switch (model.kind) {
        case ModelKind::DistMult: {
            std::vector<double> q(d), w(d, 0.0);
            for (int i = 0; i < k; ++i) q[static_cast<size_t>(i)] = er[i] * eo[i];
            for (size_t e = 0; e < model.n_entities; ++e) {
                if (dl[e] == 0.0) continue;
                const double* row = model.E.data() + e * d;
                double* ge = g.row(e);
                for (size_t i = 0; i < d; ++i) {
                    ge[i] += dl[e] * q[i];
                    w[i] += dl[e] * row[i];
                }
            }
            for (int i = 0; i < k; ++i) {
                gr[i] += eo[i] * w[static_cast<size_t>(i)];
                go[i] += er[i] * w[static_cast<size_t>(i)];
            }
            break;
        }
        case ModelKind::ComplEx: {
            // score(e, r, o) = <e_re, w_re> + <e_im, w_im>,
            // w_re = r_re∘o_re + r_im∘o_im, w_im = r_re∘o_im - r_im∘o_re.
            std::vector<double> wr(static_cast<size_t>(k)), wi(static_cast<size_t>(k));
            std::vector<double> ur(static_cast<size_t>(k), 0.0), ui(static_cast<size_t>(k), 0.0);
            for (int i = 0; i < k; ++i) {
                wr[static_cast<size_t>(i)] = er[i] * eo[i] + er[k + i] * eo[k + i];
                wi[static_cast<size_t>(i)] = er[i] * eo[k + i] - er[k + i] * eo[i];
            }
            for (size_t e = 0; e < model.n_entities; ++e) {
                if (dl[e] == 0.0) continue;
                const double* row = model.E.data() + e * d;
                double* ge = g.row(e);
                for (int i = 0; i < k; ++i) {
                    ge[i] += dl[e] * wr[static_cast<size_t>(i)];
                    ge[k + i] += dl[e] * wi[static_cast<size_t>(i)];
                    ur[static_cast<size_t>(i)] += dl[e] * row[i];
                    ui[static_cast<size_t>(i)] += dl[e] * row[k + i];
                }
            }
            for (int i = 0; i < k; ++i) {
                gr[i] += ur[static_cast<size_t>(i)] * eo[i] + ui[static_cast<size_t>(i)] * eo[k + i];
                gr[k + i] +=
                    ur[static_cast<size_t>(i)] * eo[k + i] - ui[static_cast<size_t>(i)] * eo[i];
                go[i] += ur[static_cast<size_t>(i)] * er[i] - ui[static_cast<size_t>(i)] * er[k + i];
                go[k + i] +=
                    ur[static_cast<size_t>(i)] * er[k + i] + ui[static_cast<size_t>(i)] * er[i];
            }
            break;
        }
        case ModelKind::TransE: {
            std::vector<double> q(d);
            for (int i = 0; i < k; ++i) q[static_cast<size_t>(i)] = eo[i] - er[i];
            for (size_t e = 0; e < model.n_entities; ++e) {
                if (dl[e] == 0.0) continue;
                const double* row = model.E.data() + e * d;
                double* ge = g.row(e);
                if (model.p == 1) {
                    for (size_t i = 0; i < d; ++i) {
                        const double diff = row[i] - q[i];  // (e + r - o)_i
                        const double sg = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                        ge[i] += dl[e] * -sg;
                        gr[i] += dl[e] * -sg;
                        go[i] += dl[e] * sg;
                    }
                } else {
                    double norm = 0.0;
                    for (size_t i = 0; i < d; ++i) {
                        const double diff = row[i] - q[i];
                        norm += diff * diff;
                    }
                    norm = std::sqrt(norm);
                    if (norm == 0.0) continue;
                    for (size_t i = 0; i < d; ++i) {
                        const double dir = (row[i] - q[i]) / norm;
                        ge[i] += dl[e] * -dir;
                        gr[i] += dl[e] * -dir;
                        go[i] += dl[e] * dir;
                    }
                }
            }
            break;
        }
    }
}

}  // namespace kgp::detail
