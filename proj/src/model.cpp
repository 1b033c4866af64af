#include "kgp/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "kgp/error.hpp"
#include "kgp/rng.hpp"

namespace kgp {

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::DistMult: return "distmult";
        case ModelKind::ComplEx: return "complex";
        case ModelKind::TransE: return "transe";
    }
    return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "distmult") return ModelKind::DistMult;
    if (name == "complex") return ModelKind::ComplEx;
    if (name == "transe") return ModelKind::TransE;
    fail("unknown model kind '", name, "' (expected distmult, complex or transe)");
}

bool is_multiplicative(ModelKind kind) { return kind != ModelKind::TransE; }

void EmbeddingModel::check_range(const Triple& t) const {
    require(t.s >= 0 && static_cast<size_t>(t.s) < n_entities && t.o >= 0 &&
                static_cast<size_t>(t.o) < n_entities && t.r >= 0 &&
                static_cast<size_t>(t.r) < n_relations,
            "triple ids out of range for model: (", t.s, ", ", t.r, ", ", t.o, ")");
}

double EmbeddingModel::score(const Triple& t) const {
    check_range(t);
    const auto es = entity(static_cast<size_t>(t.s));
    const auto er = relation(static_cast<size_t>(t.r));
    const auto eo = entity(static_cast<size_t>(t.o));
    switch (kind) {
        case ModelKind::DistMult: {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) acc += es[i] * er[i] * eo[i];
            return acc;
        }
        case ModelKind::ComplEx: {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) {
                const double sr = es[i], si = es[k + i];
                const double rr = er[i], ri = er[k + i];
                const double orr = eo[i], oi = eo[k + i];
                acc += (sr * rr - si * ri) * orr + (sr * ri + si * rr) * oi;
            }
            return acc;
        }
        case ModelKind::TransE: {
            double acc = 0.0;
            if (p == 1) {
                for (int i = 0; i < k; ++i) acc += std::abs(es[i] + er[i] - eo[i]);
            } else {
                for (int i = 0; i < k; ++i) {
                    const double d = es[i] + er[i] - eo[i];
                    acc += d * d;
                }
                acc = std::sqrt(acc);
            }
            return -acc;
        }
    }
    return 0.0;
}

std::vector<double> EmbeddingModel::feature_vector(const Triple& t) const {
    check_range(t);
    const auto es = entity(static_cast<size_t>(t.s));
    const auto er = relation(static_cast<size_t>(t.r));
    const auto eo = entity(static_cast<size_t>(t.o));
    std::vector<double> f(static_cast<size_t>(k));
    switch (kind) {
        case ModelKind::DistMult:
            for (int i = 0; i < k; ++i) f[static_cast<size_t>(i)] = es[i] * er[i] * eo[i];
            break;
        case ModelKind::ComplEx:
            for (int i = 0; i < k; ++i) {
                const double sr = es[i], si = es[k + i];
                const double rr = er[i], ri = er[k + i];
                const double orr = eo[i], oi = eo[k + i];
                f[static_cast<size_t>(i)] = (sr * rr - si * ri) * orr + (sr * ri + si * rr) * oi;
            }
            break;
        case ModelKind::TransE:
            for (int i = 0; i < k; ++i) f[static_cast<size_t>(i)] = -(es[i] + er[i] - eo[i]);
            break;
    }
    return f;
}

TripleGrad EmbeddingModel::grad_score(const Triple& t) const {
    check_range(t);
    const auto es = entity(static_cast<size_t>(t.s));
    const auto er = relation(static_cast<size_t>(t.r));
    const auto eo = entity(static_cast<size_t>(t.o));
    const size_t d = static_cast<size_t>(dim());
    TripleGrad g{std::vector<double>(d), std::vector<double>(d), std::vector<double>(d)};
    switch (kind) {
        case ModelKind::DistMult:
            for (int i = 0; i < k; ++i) {
                g.s[static_cast<size_t>(i)] = er[i] * eo[i];
                g.r[static_cast<size_t>(i)] = es[i] * eo[i];
                g.o[static_cast<size_t>(i)] = es[i] * er[i];
            }
            break;
        case ModelKind::ComplEx:
            for (int i = 0; i < k; ++i) {
                const double sr = es[i], si = es[k + i];
                const double rr = er[i], ri = er[k + i];
                const double orr = eo[i], oi = eo[k + i];
                g.s[static_cast<size_t>(i)] = rr * orr + ri * oi;
                g.s[static_cast<size_t>(k + i)] = -ri * orr + rr * oi;
                g.r[static_cast<size_t>(i)] = sr * orr + si * oi;
                g.r[static_cast<size_t>(k + i)] = -si * orr + sr * oi;
                g.o[static_cast<size_t>(i)] = sr * rr - si * ri;
                g.o[static_cast<size_t>(k + i)] = sr * ri + si * rr;
            }
            break;
        case ModelKind::TransE: {
            if (p == 1) {
                for (int i = 0; i < k; ++i) {
                    const double d_i = es[i] + er[i] - eo[i];
                    const double sg = d_i > 0.0 ? 1.0 : (d_i < 0.0 ? -1.0 : 0.0);
                    g.s[static_cast<size_t>(i)] = -sg;
                    g.r[static_cast<size_t>(i)] = -sg;
                    g.o[static_cast<size_t>(i)] = sg;
                }
            } else {
                double norm = 0.0;
                for (int i = 0; i < k; ++i) {
                    const double d_i = es[i] + er[i] - eo[i];
                    norm += d_i * d_i;
                }
                norm = std::sqrt(norm);
                if (norm > 0.0) {
                    for (int i = 0; i < k; ++i) {
                        const double d_i = (es[i] + er[i] - eo[i]) / norm;
                        g.s[static_cast<size_t>(i)] = -d_i;
                        g.r[static_cast<size_t>(i)] = -d_i;
                        g.o[static_cast<size_t>(i)] = d_i;
                    }
                }
                // norm == 0: subgradient chosen as zero.
            }
            break;
        }
    }
    return g;
}

void EmbeddingModel::score_all_objects(int32_t s, int32_t r, std::span<double> out) const {
    require(out.size() == n_entities, "score buffer size mismatch");
    check_range({s, r, 0});
    const auto es = entity(static_cast<size_t>(s));
    const auto er = relation(static_cast<size_t>(r));
    switch (kind) {
        case ModelKind::DistMult: {
            std::vector<double> q(static_cast<size_t>(k));
            for (int i = 0; i < k; ++i) q[static_cast<size_t>(i)] = es[i] * er[i];
            for (size_t e = 0; e < n_entities; ++e) {
                const double* row = E.data() + e * static_cast<size_t>(k);
                double acc = 0.0;
                for (int i = 0; i < k; ++i) acc += q[static_cast<size_t>(i)] * row[i];
                out[e] = acc;
            }
            break;
        }
        case ModelKind::ComplEx: {
            // score = <qr, o_re> + <qi, o_im> with q = s∘r in complex form.
            std::vector<double> qr(static_cast<size_t>(k)), qi(static_cast<size_t>(k));
            for (int i = 0; i < k; ++i) {
                const double sr = es[i], si = es[k + i];
                const double rr = er[i], ri = er[k + i];
                qr[static_cast<size_t>(i)] = sr * rr - si * ri;
                qi[static_cast<size_t>(i)] = sr * ri + si * rr;
            }
            for (size_t e = 0; e < n_entities; ++e) {
                const double* row = E.data() + e * static_cast<size_t>(2 * k);
                double acc = 0.0;
                for (int i = 0; i < k; ++i)
                    acc += qr[static_cast<size_t>(i)] * row[i] + qi[static_cast<size_t>(i)] * row[k + i];
                out[e] = acc;
            }
            break;
        }
        case ModelKind::TransE: {
            std::vector<double> q(static_cast<size_t>(k));
            for (int i = 0; i < k; ++i) q[static_cast<size_t>(i)] = es[i] + er[i];
            for (size_t e = 0; e < n_entities; ++e) {
                const double* row = E.data() + e * static_cast<size_t>(k);
                double acc = 0.0;
                if (p == 1) {
                    for (int i = 0; i < k; ++i) acc += std::abs(q[static_cast<size_t>(i)] - row[i]);
                } else {
                    for (int i = 0; i < k; ++i) {
                        const double d = q[static_cast<size_t>(i)] - row[i];
                        acc += d * d;
                    }
                    acc = std::sqrt(acc);
                }
                out[e] = -acc;
            }
            break;
        }
    }
}

void EmbeddingModel::score_all_subjects(int32_t r, int32_t o, std::span<double> out) const {
    require(out.size() == n_entities, "score buffer size mismatch");
    check_range({0, r, o});
    const auto er = relation(static_cast<size_t>(r));
    const auto eo = entity(static_cast<size_t>(o));
    switch (kind) {
        case ModelKind::DistMult: {
            std::vector<double> q(static_cast<size_t>(k));
            for (int i = 0; i < k; ++i) q[static_cast<size_t>(i)] = er[i] * eo[i];
            for (size_t e = 0; e < n_entities; ++e) {
                const double* row = E.data() + e * static_cast<size_t>(k);
                double acc = 0.0;
                for (int i = 0; i < k; ++i) acc += q[static_cast<size_t>(i)] * row[i];
                out[e] = acc;
            }
            break;
        }
        case ModelKind::ComplEx: {
            // score = <s_re, w_re> + <s_im, w_im> where w = r∘conj(o) conjugated
            // appropriately: re w = rr∘or + ri∘oi, im w = rr∘oi - ri∘or.
            std::vector<double> wr(static_cast<size_t>(k)), wi(static_cast<size_t>(k));
            for (int i = 0; i < k; ++i) {
                const double rr = er[i], ri = er[k + i];
                const double orr = eo[i], oi = eo[k + i];
                wr[static_cast<size_t>(i)] = rr * orr + ri * oi;
                wi[static_cast<size_t>(i)] = rr * oi - ri * orr;
            }
            for (size_t e = 0; e < n_entities; ++e) {
                const double* row = E.data() + e * static_cast<size_t>(2 * k);
                double acc = 0.0;
                for (int i = 0; i < k; ++i)
                    acc += wr[static_cast<size_t>(i)] * row[i] + wi[static_cast<size_t>(i)] * row[k + i];
                out[e] = acc;
            }
            break;
        }
        case ModelKind::TransE: {
            std::vector<double> q(static_cast<size_t>(k));
            for (int i = 0; i < k; ++i) q[static_cast<size_t>(i)] = eo[i] - er[i];
            for (size_t e = 0; e < n_entities; ++e) {
                const double* row = E.data() + e * static_cast<size_t>(k);
                double acc = 0.0;
                if (p == 1) {
                    for (int i = 0; i < k; ++i) acc += std::abs(row[i] - q[static_cast<size_t>(i)]);
                } else {
                    for (int i = 0; i < k; ++i) {
                        const double d = row[i] - q[static_cast<size_t>(i)];
                        acc += d * d;
                    }
                    acc = std::sqrt(acc);
                }
                out[e] = -acc;
            }
            break;
        }
    }
}

EmbeddingModel init_model(ModelKind kind, int k, size_t n_entities, size_t n_relations,
                          uint64_t seed, int transe_norm) {
    require(k >= 1, "embedding dimension must be >= 1, got ", k);
    require(n_entities > 0 && n_relations > 0, "vocabularies must be non-empty (|E|=", n_entities,
            ", |R|=", n_relations, ")");
    require(transe_norm == 1 || transe_norm == 2, "TransE norm order must be 1 or 2");
    EmbeddingModel m;
    m.kind = kind;
    m.k = k;
    m.p = transe_norm;
    m.n_entities = n_entities;
    m.n_relations = n_relations;
    const size_t d = static_cast<size_t>(m.dim());
    const double bound = 6.0 / std::sqrt(static_cast<double>(d));
    Rng rng(seed);
    m.E.resize(n_entities * d);
    m.R.resize(n_relations * d);
    for (auto& v : m.E) v = rng.uniform(-bound, bound);
    for (auto& v : m.R) v = rng.uniform(-bound, bound);
    return m;
}

namespace {
constexpr uint32_t kCheckpointMagic = 0x4b47504dU;  // "KGPM"
constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
}
}  // namespace

void save_checkpoint(const EmbeddingModel& model, const std::filesystem::path& path,
                     uint64_t dataset_hash) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write ", path.string());
    write_pod(out, kCheckpointMagic);
    write_pod(out, kCheckpointVersion);
    write_pod(out, static_cast<uint32_t>(model.kind));
    write_pod(out, static_cast<int32_t>(model.k));
    write_pod(out, static_cast<int32_t>(model.p));
    write_pod(out, static_cast<uint64_t>(model.n_entities));
    write_pod(out, static_cast<uint64_t>(model.n_relations));
    write_pod(out, dataset_hash);
    out.write(reinterpret_cast<const char*>(model.E.data()),
              static_cast<std::streamsize>(model.E.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(model.R.data()),
              static_cast<std::streamsize>(model.R.size() * sizeof(double)));
    require(out.good(), "write failed: ", path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open ", path.string());
    uint32_t magic = 0, version = 0, kind = 0;
    int32_t k = 0, p = 0;
    uint64_t ne = 0, nr = 0;
    Checkpoint ck;
    read_pod(in, magic);
    read_pod(in, version);
    require(in.good() && magic == kCheckpointMagic, "not a model checkpoint: ", path.string());
    require(version == kCheckpointVersion, "unsupported checkpoint version ", version);
    read_pod(in, kind);
    read_pod(in, k);
    read_pod(in, p);
    read_pod(in, ne);
    read_pod(in, nr);
    read_pod(in, ck.dataset_hash);
    require(in.good() && kind <= 2 && k > 0 && ne > 0 && nr > 0, "corrupt checkpoint header: ",
            path.string());
    ck.model.kind = static_cast<ModelKind>(kind);
    ck.model.k = k;
    ck.model.p = p;
    ck.model.n_entities = ne;
    ck.model.n_relations = nr;
    const size_t d = static_cast<size_t>(ck.model.dim());
    ck.model.E.resize(ne * d);
    ck.model.R.resize(nr * d);
    in.read(reinterpret_cast<char*>(ck.model.E.data()),
            static_cast<std::streamsize>(ck.model.E.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(ck.model.R.data()),
            static_cast<std::streamsize>(ck.model.R.size() * sizeof(double)));
    require(in.good(), "truncated checkpoint: ", path.string());
    return ck;
}

}  // namespace kgp
