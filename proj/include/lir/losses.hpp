#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "lir/core.hpp"
#include "lir/mining.hpp"
#include "lir/projection.hpp"
#include "lir/scoring.hpp"

namespace lir {

// ---------------------------------------------------------------------------
// Embedding-space distillation (L2)
// ---------------------------------------------------------------------------

struct MatrixLoss {
    double loss = 0.0;
    TokenMatrix grad;  // w.r.t. the student matrix
};

/// Squared-L2 distillation: per row the squared distance between student and
/// teacher vectors, averaged over the batch. Gradient w.r.t. the student is
/// 2*(student - teacher)/B.
inline MatrixLoss l2_distill_loss(const TokenMatrix& student, const TokenMatrix& teacher) {
    student.check("student vectors");
    teacher.check("teacher vectors");
    if (student.rows != teacher.rows || student.dim != teacher.dim)
        throw Error("l2_distill_loss: shape mismatch");
    const double batch = static_cast<double>(student.rows);
    MatrixLoss out;
    out.grad = TokenMatrix(student.rows, student.dim);
    for (std::size_t i = 0; i < student.values.size(); ++i) {
        double diff = student.values[i] - teacher.values[i];
        out.loss += diff * diff;
        out.grad.values[i] = 2.0 * diff / batch;
    }
    out.loss /= batch;
    return out;
}

// ---------------------------------------------------------------------------
// Tuple-level KL distillation
// ---------------------------------------------------------------------------

enum class KlDirection {
    teacher_to_student,  // KL(p_teacher || q_student), standard distillation
    student_to_teacher,
};

/// Aligned teacher/student scores of one n-way tuple.
struct TupleScores {
    std::vector<double> teacher;
    std::vector<double> student;
};

struct VectorLoss {
    double loss = 0.0;
    std::vector<double> grad;  // w.r.t. the student scores
};

namespace detail {

inline std::vector<double> softmax(const std::vector<double>& scores, double temperature) {
    double hi = scores[0];
    for (double s : scores) hi = std::max(hi, s);
    std::vector<double> out(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp((scores[i] - hi) / temperature);
        total += out[i];
    }
    for (auto& v : out) v /= total;
    return out;
}

}  // namespace detail

/// KL divergence between the teacher and student score distributions of one
/// n-way tuple. Teacher scores are min-max normalized before the softmax
/// (set normalize=false for the raw-score variant); the student side is
/// always used raw, so the gradient w.r.t. student scores is (q - p)/T for
/// the default direction.
inline VectorLoss kl_distill_loss(const std::vector<double>& teacher,
                                  const std::vector<double>& student, double temperature = 1.0,
                                  bool normalize = true,
                                  KlDirection direction = KlDirection::teacher_to_student) {
    if (teacher.size() != student.size()) throw Error("kl_distill_loss: length mismatch");
    if (teacher.size() < 2) throw Error("kl_distill_loss: need at least 2 scores");
    if (!(temperature > 0.0)) throw Error("kl_distill_loss: temperature must be > 0");

    std::vector<double> target = normalize ? minmax_normalize(teacher) : teacher;
    std::vector<double> p = detail::softmax(target, temperature);
    std::vector<double> q = detail::softmax(student, temperature);

    VectorLoss out;
    out.grad.resize(student.size());
    if (direction == KlDirection::teacher_to_student) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i] > 0.0) out.loss += p[i] * std::log(p[i] / q[i]);
            out.grad[i] = (q[i] - p[i]) / temperature;
        }
    } else {
        for (std::size_t i = 0; i < q.size(); ++i)
            if (q[i] > 0.0) out.loss += q[i] * std::log(q[i] / p[i]);
        for (std::size_t i = 0; i < q.size(); ++i)
            out.grad[i] = q[i] / temperature * (std::log(q[i] / p[i]) - out.loss);
    }
    return out;
}

inline VectorLoss kl_distill_loss(const TupleScores& scores, double temperature = 1.0,
                                  bool normalize = true,
                                  KlDirection direction = KlDirection::teacher_to_student) {
    return kl_distill_loss(scores.teacher, scores.student, temperature, normalize, direction);
}

// ---------------------------------------------------------------------------
// In-batch contrastive loss (InfoNCE)
// ---------------------------------------------------------------------------

struct ContrastiveLoss {
    double loss = 0.0;
    TokenMatrix grad_queries;
    TokenMatrix grad_docs;
};

/// In-batch-negative cross-entropy over cosine similarities: row i of the
/// doc matrix is the positive for query i, every other row an in-batch
/// negative. Set symmetric=true to average the query->doc and doc->query
/// directions.
inline ContrastiveLoss info_nce_loss(const TokenMatrix& queries, const TokenMatrix& docs,
                                     double temperature, bool symmetric = false) {
    queries.check("query vectors");
    docs.check("doc vectors");
    if (queries.rows != docs.rows || queries.dim != docs.dim)
        throw Error("info_nce_loss: shape mismatch");
    if (!(temperature > 0.0)) throw Error("info_nce_loss: temperature must be > 0");
    const std::size_t batch = queries.rows;
    const std::size_t dim = queries.dim;

    TokenMatrix qn = normalize_rows(queries);
    TokenMatrix dn = normalize_rows(docs);
    std::vector<double> qnorm(batch), dnorm(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        double sq = 0.0, sd = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            sq += queries.at(i, c) * queries.at(i, c);
            sd += docs.at(i, c) * docs.at(i, c);
        }
        qnorm[i] = std::sqrt(sq);
        dnorm[i] = std::sqrt(sd);
    }

    TokenMatrix sim(batch, batch);
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < batch; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < dim; ++c) dot += qn.at(i, c) * dn.at(j, c);
            sim.at(i, j) = dot;
        }

    ContrastiveLoss out;
    TokenMatrix dsim(batch, batch);  // dL/dSim
    auto accumulate_direction = [&](bool rows_are_queries, double weight) {
        for (std::size_t i = 0; i < batch; ++i) {
            std::vector<double> row(batch);
            for (std::size_t j = 0; j < batch; ++j)
                row[j] = rows_are_queries ? sim.at(i, j) : sim.at(j, i);
            auto probs = detail::softmax(row, temperature);
            out.loss += -weight / static_cast<double>(batch) * std::log(probs[i]);
            for (std::size_t j = 0; j < batch; ++j) {
                double g = weight * (probs[j] - (i == j ? 1.0 : 0.0)) /
                           (temperature * static_cast<double>(batch));
                if (rows_are_queries)
                    dsim.at(i, j) += g;
                else
                    dsim.at(j, i) += g;
            }
        }
    };
    if (symmetric) {
        accumulate_direction(true, 0.5);
        accumulate_direction(false, 0.5);
    } else {
        accumulate_direction(true, 1.0);
    }

    // Chain through the cosine: d sim_ij / d q_i = (d_j^ - sim_ij * q_i^)/|q_i|.
    out.grad_queries = TokenMatrix(batch, dim);
    out.grad_docs = TokenMatrix(batch, dim);
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < batch; ++j) {
            double g = dsim.at(i, j);
            if (g == 0.0) continue;
            for (std::size_t c = 0; c < dim; ++c) {
                out.grad_queries.at(i, c) +=
                    g * (dn.at(j, c) - sim.at(i, j) * qn.at(i, c)) / qnorm[i];
                out.grad_docs.at(j, c) +=
                    g * (qn.at(i, c) - sim.at(i, j) * dn.at(j, c)) / dnorm[j];
            }
        }
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification
// ---------------------------------------------------------------------------

/// Central-difference check of an analytic gradient. Returns the maximum
/// per-coordinate relative error |analytic - numeric| / max(1, |numeric|).
inline double finite_diff_check(const std::function<double(const std::vector<double>&)>& loss_fn,
                                const std::vector<double>& params,
                                const std::vector<double>& analytic_grad, double step = 1e-5) {
    if (params.size() != analytic_grad.size())
        throw Error("finite_diff_check: gradient size mismatch");
    std::vector<double> probe = params;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        probe[i] = params[i] + step;
        double up = loss_fn(probe);
        probe[i] = params[i] - step;
        double down = loss_fn(probe);
        probe[i] = params[i];
        double numeric = (up - down) / (2.0 * step);
        double rel = std::fabs(analytic_grad[i] - numeric) / std::max(1.0, std::fabs(numeric));
        worst = std::max(worst, rel);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Toy projection trainer
// ---------------------------------------------------------------------------

struct TrainerConfig {
    std::size_t batch_size = 128;
    std::size_t steps = 1;
    double learning_rate = 0.0;
    double momentum = 0.9;
    Seed seed = 0;
    double temperature = 1.0;

    void check() const {
        if (batch_size < 1) throw Error("trainer config: batch_size must be >= 1");
        if (steps < 1) throw Error("trainer config: steps must be >= 1");
        if (!(learning_rate >= 0.0)) throw Error("trainer config: learning_rate must be >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw Error("trainer config: momentum must be in [0, 1)");
        if (!(temperature > 0.0)) throw Error("trainer config: temperature must be > 0");
    }
};

struct TrainResult {
    ProjectionHead head;
    std::vector<double> loss_trace;  // per-step mean KL loss
};

namespace detail {

struct HeadGradAccum {
    TokenMatrix w1, b1, w2, b2, res;

    explicit HeadGradAccum(const ProjectionHead& head) {
        w1 = TokenMatrix(head.w1.rows, head.w1.dim);
        b1 = TokenMatrix(head.b1.rows, head.b1.dim);
        if (!head.w2.empty()) {
            w2 = TokenMatrix(head.w2.rows, head.w2.dim);
            b2 = TokenMatrix(head.b2.rows, head.b2.dim);
        }
        if (!head.res.empty()) res = TokenMatrix(head.res.rows, head.res.dim);
    }

    void add(const ProjectionGrads& g) {
        add_into(w1, g.w1);
        add_into(b1, g.b1);
        if (!w2.empty()) {
            add_into(w2, g.w2);
            add_into(b2, g.b2);
        }
        if (!res.empty()) add_into(res, g.res);
    }

    void scale(double factor) {
        for (auto* m : {&w1, &b1, &w2, &b2, &res})
            for (auto& v : m->values) v *= factor;
    }
};

// Dot-product MaxSim with the argmax bookkeeping needed for the backward
// pass: score = sum_r max_j <q_r, d_j>, subgradient flows through the argmax.
inline double maxsim_with_argmax(const TokenMatrix& q, const TokenMatrix& d,
                                 std::vector<std::size_t>& argmax) {
    argmax.assign(q.rows, 0);
    double total = 0.0;
    for (std::size_t r = 0; r < q.rows; ++r) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < d.rows; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < q.dim; ++c) dot += q.at(r, c) * d.at(j, c);
            if (dot > best) {
                best = dot;
                argmax[r] = j;
            }
        }
        total += best;
    }
    return total;
}

}  // namespace detail

/// Momentum-SGD training of a projection head against the tuple-level KL
/// loss, with student scores taken as dot-product MaxSim over the projected
/// backbone embeddings. Batches cycle through a seed-deterministic shuffle
/// of the tuple stream; everything is a pure function of (inputs, seed).
inline TrainResult train_projection_toy(const ProjectionHead& initial_head,
                                        const std::vector<TrainingTuple>& tuples,
                                        const std::map<QueryId, TokenMatrix>& query_embeddings,
                                        const std::map<DocId, TokenMatrix>& doc_embeddings,
                                        const TrainerConfig& config) {
    config.check();
    if (tuples.empty()) throw Error("train_projection_toy: no tuples");
    for (const auto& t : tuples) {
        t.check();
        if (!query_embeddings.count(t.query))
            throw Error("train_projection_toy: missing embedding for query " + t.query);
        if (!doc_embeddings.count(t.positive))
            throw Error("train_projection_toy: missing embedding for doc " + t.positive);
        for (const auto& n : t.negatives)
            if (!doc_embeddings.count(n))
                throw Error("train_projection_toy: missing embedding for doc " + n);
    }

    TrainResult result;
    result.head = initial_head;
    detail::check_head_shapes(result.head);

    detail::HeadGradAccum velocity(result.head);
    SplitMix64 shuffle_rng(config.seed);
    std::vector<std::size_t> order(tuples.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();  // forces a shuffle before the first batch

    auto reshuffle = [&] {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
        cursor = 0;
    };

    for (std::size_t step = 0; step < config.steps; ++step) {
        detail::HeadGradAccum grads(result.head);
        double batch_loss = 0.0;
        for (std::size_t b = 0; b < config.batch_size; ++b) {
            if (cursor >= order.size()) reshuffle();
            const TrainingTuple& tuple = tuples[order[cursor++]];

            const TokenMatrix& q_emb = query_embeddings.at(tuple.query);
            TokenMatrix proj_q = project_forward(result.head, q_emb);

            const std::size_t n_way = tuple.teacher_scores.size();
            std::vector<const TokenMatrix*> member_embs(n_way);
            std::vector<TokenMatrix> proj_docs(n_way);
            std::vector<std::vector<std::size_t>> argmax(n_way);
            std::vector<double> student(n_way);
            for (std::size_t m = 0; m < n_way; ++m) {
                const DocId& did = m == 0 ? tuple.positive : tuple.negatives[m - 1];
                member_embs[m] = &doc_embeddings.at(did);
                proj_docs[m] = project_forward(result.head, *member_embs[m]);
                student[m] = detail::maxsim_with_argmax(proj_q, proj_docs[m], argmax[m]);
            }

            auto kl = kl_distill_loss(tuple.teacher_scores, student, config.temperature);
            batch_loss += kl.loss;

            TokenMatrix d_proj_q(proj_q.rows, proj_q.dim);
            for (std::size_t m = 0; m < n_way; ++m) {
                double g = kl.grad[m];
                TokenMatrix d_proj_d(proj_docs[m].rows, proj_docs[m].dim);
                for (std::size_t r = 0; r < proj_q.rows; ++r) {
                    std::size_t j = argmax[m][r];
                    for (std::size_t c = 0; c < proj_q.dim; ++c) {
                        d_proj_q.at(r, c) += g * proj_docs[m].at(j, c);
                        d_proj_d.at(j, c) += g * proj_q.at(r, c);
                    }
                }
                grads.add(project_backward(result.head, *member_embs[m], d_proj_d));
            }
            grads.add(project_backward(result.head, q_emb, d_proj_q));
        }

        const double inv_batch = 1.0 / static_cast<double>(config.batch_size);
        grads.scale(inv_batch);
        result.loss_trace.push_back(batch_loss * inv_batch);

        auto update = [&](TokenMatrix& param, TokenMatrix& vel, const TokenMatrix& grad) {
            for (std::size_t i = 0; i < param.values.size(); ++i) {
                vel.values[i] =
                    config.momentum * vel.values[i] - config.learning_rate * grad.values[i];
                param.values[i] += vel.values[i];
            }
        };
        update(result.head.w1, velocity.w1, grads.w1);
        update(result.head.b1, velocity.b1, grads.b1);
        if (!result.head.w2.empty()) {
            update(result.head.w2, velocity.w2, grads.w2);
            update(result.head.b2, velocity.b2, grads.b2);
        }
        if (!result.head.res.empty()) update(result.head.res, velocity.res, grads.res);
    }
    return result;
}

/// Loss traces are persisted as CSV: a `step,loss` header then one line per
/// training step, steps numbered from 1.
inline void write_loss_trace(const std::vector<double>& trace, const std::string& path) {
    std::string out = "step,loss\n";
    for (std::size_t i = 0; i < trace.size(); ++i)
        out += std::to_string(i + 1) + "," + detail::format_double(trace[i]) + "\n";
    io::write_file(path, out);
}

}  // namespace lir
