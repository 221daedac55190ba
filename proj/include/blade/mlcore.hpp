#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "blade/digest.hpp"
#include "blade/errors.hpp"

// Datasets, the trainable models, local SGD, evaluation and the
// sample-size-weighted aggregation rule every client runs identically.

namespace blade::mlcore {

// Flat parameter vector; the unit that gets gossiped, clipped, noised,
// watermarked and aggregated.
using ParamVector = std::vector<double>;

struct Dataset {
    std::vector<double> features; // row-major, size() == labels.size() * dims
    std::vector<int> labels;
    int dims = 0;
    int num_classes = 0;
    uint32_t client_id = 0;

    size_t size() const { return labels.size(); }
    const double* row(size_t i) const { return features.data() + i * static_cast<size_t>(dims); }
    void validate() const;
};

enum class ModelKind { linear_softmax, mlp };

struct ModelSpec {
    ModelKind kind = ModelKind::linear_softmax;
    int input_dim = 0;
    int num_classes = 0;
    int hidden_dim = 0; // mlp only

    // Layout: linear = [W (classes x dims), b (classes)];
    // mlp    = [W1 (hidden x dims), b1, W2 (classes x hidden), b2], tanh hidden.
    size_t param_count() const;
    void validate() const;
};

// Deterministic initial parameters: zeros for linear, seeded fan-in normal for mlp.
ParamVector init_params(const ModelSpec& spec, uint64_t seed);

struct PartitionResult {
    std::vector<Dataset> clients;
    Dataset test;
};

struct SyntheticSpec {
    int dims = 100;
    int num_classes = 10;
    int samples_per_client = 200;
    int test_samples = 1000;
    double skew = 0.0;       // 0 = IID, 1 = each client holds at most 2 classes
    double class_sep = 0.3;  // prototype scale
    double noise_std = 1.0;  // per-feature noise around the class prototype
};

// Gaussian-prototype synthetic task split across clients. Deterministic per seed.
PartitionResult make_partitioned_data(uint64_t seed, int n_clients, const SyntheticSpec& spec);

// Shard an existing labeled pool (IDX ingestion path) with the same skew rule.
std::vector<Dataset> partition_labeled(const Dataset& all, uint64_t seed, int n_clients,
                                       int samples_per_client, double skew);

// Mean cross-entropy gradient over the samples selected by idx[0..n).
// Returns the mean loss; grad must have spec.param_count() slots.
double grad_batch(const ModelSpec& spec, const ParamVector& params, const Dataset& data,
                  const uint32_t* idx, size_t n, ParamVector& grad);

// tau epochs of seeded mini-batch SGD; input params untouched. epoch_offset
// continues the shuffle-seed chain so tau=2 equals two chained tau=1 calls.
ParamVector local_train(const ParamVector& params, const Dataset& data, const ModelSpec& spec,
                        int epochs, double lr, int batch_size, uint64_t seed,
                        int epoch_offset = 0);

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};
EvalResult evaluate(const ParamVector& params, const Dataset& data, const ModelSpec& spec);

// A client's round contribution as it travels the network and the ledger.
struct LocalUpdate {
    uint32_t client_id = 0;
    uint64_t round = 0;
    ParamVector params; // delta against the round's global model
    uint64_t n_samples = 0;
    int64_t compute_ticks = 0;
    Digest digest{}; // param_digest(params)
};

Digest param_digest(const ParamVector& p);

// Sample-size-weighted mean, summed in ascending client-id order so the
// result is independent of arrival order, bit for bit.
ParamVector aggregate(const std::vector<LocalUpdate>& updates);

// id-sorted (client_id, weight) pairs used by aggregate; weights sum to 1.
std::vector<std::pair<uint32_t, double>> contribution_weights(
    const std::vector<LocalUpdate>& updates);

} // namespace blade::mlcore
