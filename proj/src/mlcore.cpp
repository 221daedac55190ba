#include "blade/mlcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "blade/bytes.hpp"
#include "blade/kernels.hpp"
#include "blade/rng.hpp"

namespace blade::mlcore {

void Dataset::validate() const {
    if (dims <= 0 || num_classes < 2) throw ConfigError("dataset needs dims >= 1 and >= 2 classes");
    if (labels.empty()) throw ConfigError("dataset is empty");
    if (features.size() != labels.size() * static_cast<size_t>(dims))
        throw ConfigError("dataset feature/label size mismatch");
    for (int y : labels)
        if (y < 0 || y >= num_classes) throw ConfigError("dataset label out of range");
}

size_t ModelSpec::param_count() const {
    const size_t d = static_cast<size_t>(input_dim);
    const size_t c = static_cast<size_t>(num_classes);
    if (kind == ModelKind::linear_softmax) return c * d + c;
    const size_t h = static_cast<size_t>(hidden_dim);
    return h * d + h + c * h + c;
}

void ModelSpec::validate() const {
    if (input_dim <= 0) throw ConfigError("model input_dim must be positive");
    if (num_classes < 2) throw ConfigError("model needs at least 2 classes");
    if (kind == ModelKind::mlp && hidden_dim <= 0)
        throw ConfigError("mlp hidden_dim must be positive");
}

ParamVector init_params(const ModelSpec& spec, uint64_t seed) {
    spec.validate();
    ParamVector p(spec.param_count(), 0.0);
    if (spec.kind == ModelKind::linear_softmax) return p;

    Rng rng(seed_mix({seed, hash_tag("init-params")}));
    const size_t d = static_cast<size_t>(spec.input_dim);
    const size_t h = static_cast<size_t>(spec.hidden_dim);
    const size_t c = static_cast<size_t>(spec.num_classes);
    const double s1 = std::sqrt(1.0 / static_cast<double>(d));
    const double s2 = std::sqrt(1.0 / static_cast<double>(h));
    size_t at = 0;
    for (size_t i = 0; i < h * d; ++i) p[at++] = rng.normal() * s1;
    at += h; // b1 stays zero
    for (size_t i = 0; i < c * h; ++i) p[at++] = rng.normal() * s2;
    return p;
}

namespace {

// Softmax with max subtraction; fills probs[0..classes), returns -log p[label].
double softmax_loss(const double* logits, int classes, int label, double* probs) {
    double mx = logits[0];
    for (int k = 1; k < classes; ++k) mx = std::max(mx, logits[k]);
    double z = 0.0;
    for (int k = 0; k < classes; ++k) {
        probs[k] = std::exp(logits[k] - mx);
        z += probs[k];
    }
    const double inv = 1.0 / z;
    for (int k = 0; k < classes; ++k) probs[k] *= inv;
    return -std::log(std::max(probs[label], 1e-300));
}

struct Gather {
    std::vector<double> x; // n x dims
    std::vector<int> y;
};

Gather gather_batch(const Dataset& data, const uint32_t* idx, size_t n) {
    Gather g;
    const size_t d = static_cast<size_t>(data.dims);
    g.x.resize(n * d);
    g.y.resize(n);
    for (size_t s = 0; s < n; ++s) {
        const uint32_t i = idx[s];
        std::memcpy(g.x.data() + s * d, data.row(i), d * sizeof(double));
        g.y[s] = data.labels[i];
    }
    return g;
}

} // namespace

double grad_batch(const ModelSpec& spec, const ParamVector& params, const Dataset& data,
                  const uint32_t* idx, size_t n, ParamVector& grad) {
    spec.validate();
    if (n == 0) throw ConfigError("grad_batch on empty batch");
    if (params.size() != spec.param_count()) throw ConfigError("param size mismatch");
    if (grad.size() != params.size()) grad.assign(params.size(), 0.0);

    const size_t d = static_cast<size_t>(spec.input_dim);
    const size_t c = static_cast<size_t>(spec.num_classes);
    const Gather g = gather_batch(data, idx, n);
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> loss_buf(n);

    if (spec.kind == ModelKind::linear_softmax) {
        const double* w = params.data();
        const double* b = params.data() + c * d;
        std::vector<double> delta(n * c); // probs - onehot, per sample
        const bool par = kernels::parallel_worthwhile(n * c * d);
#pragma omp parallel for schedule(static) num_threads(kernels::max_threads()) if (par)
        for (int64_t si = 0; si < static_cast<int64_t>(n); ++si) {
            const size_t s = static_cast<size_t>(si);
            const double* xs = g.x.data() + s * d;
            double* ds = delta.data() + s * c;
            for (size_t k = 0; k < c; ++k) ds[k] = kernels::dot(w + k * d, xs, d) + b[k];
            loss_buf[s] = softmax_loss(ds, static_cast<int>(c), g.y[s], ds);
            ds[g.y[s]] -= 1.0;
        }
        kernels::transpose_product(delta.data(), g.x.data(), grad.data(), n, c, d);
        kernels::column_sums(delta.data(), grad.data() + c * d, n, c);
        for (double& v : grad) v *= inv_n;
        return kernels::sum(loss_buf.data(), n) * inv_n;
    }

    // mlp: tanh hidden layer
    const size_t h = static_cast<size_t>(spec.hidden_dim);
    const double* w1 = params.data();
    const double* b1 = params.data() + h * d;
    const double* w2 = b1 + h;
    const double* b2 = w2 + c * h;

    std::vector<double> a1(n * h);     // tanh activations
    std::vector<double> delta2(n * c); // output layer error
    std::vector<double> delta1(n * h); // hidden layer error
    const bool par = kernels::parallel_worthwhile(n * h * (d + c));
#pragma omp parallel for schedule(static) num_threads(kernels::max_threads()) if (par)
    for (int64_t si = 0; si < static_cast<int64_t>(n); ++si) {
        const size_t s = static_cast<size_t>(si);
        const double* xs = g.x.data() + s * d;
        double* as = a1.data() + s * h;
        for (size_t j = 0; j < h; ++j) as[j] = std::tanh(kernels::dot(w1 + j * d, xs, d) + b1[j]);
        double* ds = delta2.data() + s * c;
        for (size_t k = 0; k < c; ++k) ds[k] = kernels::dot(w2 + k * h, as, h) + b2[k];
        loss_buf[s] = softmax_loss(ds, static_cast<int>(c), g.y[s], ds);
        ds[g.y[s]] -= 1.0;
        double* d1 = delta1.data() + s * h;
        for (size_t j = 0; j < h; ++j) {
            double acc = 0.0;
            for (size_t k = 0; k < c; ++k) acc += w2[k * h + j] * ds[k];
            d1[j] = acc * (1.0 - as[j] * as[j]);
        }
    }

    double* gw1 = grad.data();
    double* gb1 = grad.data() + h * d;
    double* gw2 = gb1 + h;
    double* gb2 = gw2 + c * h;
    kernels::transpose_product(delta1.data(), g.x.data(), gw1, n, h, d);
    kernels::column_sums(delta1.data(), gb1, n, h);
    kernels::transpose_product(delta2.data(), a1.data(), gw2, n, c, h);
    kernels::column_sums(delta2.data(), gb2, n, c);
    for (double& v : grad) v *= inv_n;
    return kernels::sum(loss_buf.data(), n) * inv_n;
}

ParamVector local_train(const ParamVector& params, const Dataset& data, const ModelSpec& spec,
                        int epochs, double lr, int batch_size, uint64_t seed, int epoch_offset) {
    spec.validate();
    data.validate();
    if (epochs < 1) throw ConfigError("local_train needs epochs >= 1");
    if (batch_size < 1) throw ConfigError("local_train needs batch_size >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("local_train lr must be finite and >= 0");
    if (params.size() != spec.param_count()) throw ConfigError("param size mismatch");

    ParamVector p = params;
    ParamVector grad(p.size(), 0.0);
    const size_t n = data.size();
    std::vector<uint32_t> order(n);

    for (int e = 0; e < epochs; ++e) {
        const int abs_epoch = epoch_offset + e;
        // permutation depends only on (seed, absolute epoch) so a run can be
        // split and resumed at any epoch boundary without changing the result
        std::iota(order.begin(), order.end(), 0u);
        Rng shuffle_rng(seed_mix({seed, hash_tag("epoch-shuffle"),
                                  static_cast<uint64_t>(abs_epoch)}));
        shuffle_rng.shuffle(order);
        for (size_t at = 0; at < n; at += static_cast<size_t>(batch_size)) {
            const size_t take = std::min(static_cast<size_t>(batch_size), n - at);
            const double loss = grad_batch(spec, p, data, order.data() + at, take, grad);
            if (!std::isfinite(loss))
                throw DivergenceError(abs_epoch, "training loss is not finite at epoch " +
                                                     std::to_string(abs_epoch));
            kernels::axpy(-lr, grad.data(), p.data(), p.size());
        }
    }
    for (double v : p)
        if (!std::isfinite(v))
            throw DivergenceError(epoch_offset + epochs - 1, "parameters overflowed during training");
    return p;
}

EvalResult evaluate(const ParamVector& params, const Dataset& data, const ModelSpec& spec) {
    spec.validate();
    data.validate();
    if (params.size() != spec.param_count()) throw ConfigError("param size mismatch");

    const size_t n = data.size();
    const size_t d = static_cast<size_t>(spec.input_dim);
    const size_t c = static_cast<size_t>(spec.num_classes);
    std::vector<double> loss_buf(n), hit_buf(n);

    const size_t per_sample =
        spec.kind == ModelKind::linear_softmax
            ? c * d
            : static_cast<size_t>(spec.hidden_dim) * (d + c);
    const bool par = kernels::parallel_worthwhile(n * per_sample);
#pragma omp parallel for schedule(static) num_threads(kernels::max_threads()) if (par)
    for (int64_t si = 0; si < static_cast<int64_t>(n); ++si) {
        const size_t s = static_cast<size_t>(si);
        const double* xs = data.row(s);
        std::vector<double> logits(c), probs(c);
        if (spec.kind == ModelKind::linear_softmax) {
            const double* w = params.data();
            const double* b = params.data() + c * d;
            for (size_t k = 0; k < c; ++k) logits[k] = kernels::dot(w + k * d, xs, d) + b[k];
        } else {
            const size_t h = static_cast<size_t>(spec.hidden_dim);
            const double* w1 = params.data();
            const double* b1 = params.data() + h * d;
            const double* w2 = b1 + h;
            const double* b2 = w2 + c * h;
            std::vector<double> act(h);
            for (size_t j = 0; j < h; ++j)
                act[j] = std::tanh(kernels::dot(w1 + j * d, xs, d) + b1[j]);
            for (size_t k = 0; k < c; ++k) logits[k] = kernels::dot(w2 + k * h, act.data(), h) + b2[k];
        }
        loss_buf[s] = softmax_loss(logits.data(), static_cast<int>(c), data.labels[s], probs.data());
        size_t best = 0;
        for (size_t k = 1; k < c; ++k)
            if (probs[k] > probs[best]) best = k;
        hit_buf[s] = best == static_cast<size_t>(data.labels[s]) ? 1.0 : 0.0;
    }

    EvalResult r;
    r.loss = kernels::sum(loss_buf.data(), n) / static_cast<double>(n);
    r.accuracy = kernels::sum(hit_buf.data(), n) / static_cast<double>(n);
    return r;
}

PartitionResult make_partitioned_data(uint64_t seed, int n_clients, const SyntheticSpec& spec) {
    if (n_clients < 1) throw ConfigError("need at least one client");
    if (spec.dims < 1 || spec.num_classes < 2) throw ConfigError("bad synthetic data shape");
    if (spec.samples_per_client < 1 || spec.test_samples < 1)
        throw ConfigError("sample counts must be positive");
    if (spec.skew < 0.0 || spec.skew > 1.0) throw ConfigError("skew must be in [0, 1]");
    if (spec.skew == 1.0 && spec.samples_per_client < spec.num_classes &&
        spec.samples_per_client < 2)
        throw ConfigError("cannot populate shards: too few samples per client");

    const size_t d = static_cast<size_t>(spec.dims);
    const int cc = spec.num_classes;
    Rng proto_rng(seed_mix({seed, hash_tag("prototypes")}));
    std::vector<double> proto(static_cast<size_t>(cc) * d);
    for (double& v : proto) v = spec.class_sep * proto_rng.normal();

    auto draw_sample = [&](Rng& rng, int label, Dataset& out) {
        out.labels.push_back(label);
        const double* pc = proto.data() + static_cast<size_t>(label) * d;
        for (size_t j = 0; j < d; ++j) out.features.push_back(pc[j] + spec.noise_std * rng.normal());
    };

    PartitionResult res;
    res.clients.resize(static_cast<size_t>(n_clients));
    for (int i = 0; i < n_clients; ++i) {
        Dataset& ds = res.clients[static_cast<size_t>(i)];
        ds.dims = spec.dims;
        ds.num_classes = cc;
        ds.client_id = static_cast<uint32_t>(i);
        ds.features.reserve(static_cast<size_t>(spec.samples_per_client) * d);
        // two preferred classes per client, spread evenly across the class range
        const int shard_a = (2 * i) % cc;
        const int shard_b = (2 * i + 1) % cc;
        Rng rng(seed_mix({seed, hash_tag("client-data"), static_cast<uint64_t>(i)}));
        for (int s = 0; s < spec.samples_per_client; ++s) {
            int label;
            if (rng.next_double() < spec.skew)
                label = rng.below(2) == 0 ? shard_a : shard_b;
            else
                label = static_cast<int>(rng.below(static_cast<uint64_t>(cc)));
            draw_sample(rng, label, ds);
        }
        ds.validate();
    }

    res.test.dims = spec.dims;
    res.test.num_classes = cc;
    res.test.client_id = 0xffffffffu;
    Rng trng(seed_mix({seed, hash_tag("test-data")}));
    for (int s = 0; s < spec.test_samples; ++s)
        draw_sample(trng, static_cast<int>(trng.below(static_cast<uint64_t>(cc))), res.test);
    res.test.validate();
    return res;
}

std::vector<Dataset> partition_labeled(const Dataset& all, uint64_t seed, int n_clients,
                                       int samples_per_client, double skew) {
    all.validate();
    if (n_clients < 1 || samples_per_client < 1) throw ConfigError("bad partition shape");
    if (skew < 0.0 || skew > 1.0) throw ConfigError("skew must be in [0, 1]");
    const size_t need = static_cast<size_t>(n_clients) * static_cast<size_t>(samples_per_client);
    if (need > all.size()) throw ConfigError("not enough samples to partition");

    // one seeded shuffle per class pool plus one global order; cursors consume
    // them so every source sample is used at most once
    const int cc = all.num_classes;
    std::vector<std::vector<uint32_t>> by_class(static_cast<size_t>(cc));
    for (size_t i = 0; i < all.size(); ++i)
        by_class[static_cast<size_t>(all.labels[i])].push_back(static_cast<uint32_t>(i));
    Rng rng(seed_mix({seed, hash_tag("partition")}));
    for (auto& pool : by_class) rng.shuffle(pool);
    std::vector<size_t> cursor(static_cast<size_t>(cc), 0);

    std::vector<char> taken(all.size(), 0);
    const size_t d = static_cast<size_t>(all.dims);
    std::vector<Dataset> out(static_cast<size_t>(n_clients));

    auto push = [&](Dataset& ds, uint32_t src) {
        taken[src] = 1;
        ds.labels.push_back(all.labels[src]);
        const double* row = all.row(src);
        ds.features.insert(ds.features.end(), row, row + d);
    };

    // first pass: shard-class draws
    const int shard_take = static_cast<int>(std::llround(skew * samples_per_client));
    for (int i = 0; i < n_clients; ++i) {
        Dataset& ds = out[static_cast<size_t>(i)];
        ds.dims = all.dims;
        ds.num_classes = cc;
        ds.client_id = static_cast<uint32_t>(i);
        const int shard[2] = {(2 * i) % cc, (2 * i + 1) % cc};
        for (int s = 0; s < shard_take; ++s) {
            const size_t c0 = static_cast<size_t>(shard[s & 1]);
            const size_t c1 = static_cast<size_t>(shard[(s & 1) ^ 1]);
            size_t pick = cursor[c0] < by_class[c0].size() ? c0 : c1;
            if (cursor[pick] >= by_class[pick].size()) break; // both shard pools drained
            push(ds, by_class[pick][cursor[pick]++]);
        }
    }

    // second pass: top up from the leftover pool in shuffled order
    std::vector<uint32_t> leftover;
    leftover.reserve(all.size());
    for (size_t i = 0; i < all.size(); ++i)
        if (!taken[i]) leftover.push_back(static_cast<uint32_t>(i));
    rng.shuffle(leftover);
    size_t lc = 0;
    for (auto& ds : out) {
        while (ds.labels.size() < static_cast<size_t>(samples_per_client)) {
            if (lc >= leftover.size()) throw ConfigError("not enough samples to partition");
            push(ds, leftover[lc++]);
        }
        ds.validate();
    }
    return out;
}

Digest param_digest(const ParamVector& p) {
    ByteWriter w;
    w.u32(static_cast<uint32_t>(p.size()));
    for (double v : p) w.f64(v);
    return sha256(w.data());
}

std::vector<std::pair<uint32_t, double>> contribution_weights(
    const std::vector<LocalUpdate>& updates) {
    if (updates.empty()) throw ConfigError("aggregate over zero updates");
    std::vector<size_t> order(updates.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return updates[a].client_id < updates[b].client_id;
    });
    uint64_t total = 0;
    for (const auto& u : updates) {
        if (u.n_samples == 0) throw ConfigError("update with zero samples");
        total += u.n_samples;
    }
    std::vector<std::pair<uint32_t, double>> w;
    w.reserve(updates.size());
    for (size_t k : order)
        w.emplace_back(updates[k].client_id,
                       static_cast<double>(updates[k].n_samples) / static_cast<double>(total));
    return w;
}

ParamVector aggregate(const std::vector<LocalUpdate>& updates) {
    if (updates.empty()) throw ConfigError("aggregate over zero updates");
    const size_t dim = updates.front().params.size();
    for (const auto& u : updates)
        if (u.params.size() != dim) throw ConfigError("aggregate dimension mismatch");

    std::vector<size_t> order(updates.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return updates[a].client_id < updates[b].client_id;
    });
    uint64_t total = 0;
    for (const auto& u : updates) {
        if (u.n_samples == 0) throw ConfigError("update with zero samples");
        total += u.n_samples;
    }

    // fixed id-order summation: every verifier reproduces the identical bytes
    ParamVector acc(dim, 0.0);
    for (size_t k : order) {
        const auto& u = updates[k];
        const double w = static_cast<double>(u.n_samples) / static_cast<double>(total);
        const double* v = u.params.data();
        for (size_t j = 0; j < dim; ++j) acc[j] += w * v[j];
    }
    return acc;
}

} // namespace blade::mlcore
