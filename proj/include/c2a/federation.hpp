/*
 * Copyright 2026 The C2A Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "c2a/data.hpp"
#include "c2a/network.hpp"
#include "c2a/optim.hpp"

namespace c2a {

struct ClientPartition {
    std::size_t client_id = 0;
    std::vector<std::size_t> indices;  // into the training set, ascending
    std::size_t group = 0;
};

/// Label-skew partition: for every class, proportions p ~ Dir(beta * 1_K)
/// split that class's examples over the clients (largest-remainder
/// rounding). Empty clients then take one example from the largest client.
std::vector<ClientPartition> dirichlet_partition(std::span<const std::size_t> labels, std::size_t num_clients,
                                                 double beta, std::uint64_t seed);

/// Client k serves group k % G exclusively; each group's examples are
/// Dirichlet-partitioned among its clients.
std::vector<ClientPartition> group_partition(std::span<const std::size_t> labels,
                                             std::span<const std::size_t> groups, std::size_t num_clients,
                                             std::size_t num_groups, double beta, std::uint64_t seed);

/// ceil(fraction * K) distinct client ids, ascending, drawn from the
/// round's own stream.
std::vector<std::size_t> sample_clients(std::size_t num_clients, double fraction, std::uint64_t seed,
                                        std::size_t round);

struct FederationConfig {
    double fraction = 0.25;
    std::size_t local_epochs = 1;
    std::size_t batch_size = 16;
    AdamWConfig optimizer;
    std::size_t eval_batch_size = 128;
    std::size_t workers = 1;  // threads for local training
    std::uint64_t seed = 0;

    void validate() const;
};

struct LocalResult {
    NamedTensors params;        // trainable set only
    std::vector<double> losses;  // one per mini-batch
    bool aborted = false;
    std::string error;
};

/// A participant. Its examples never leave the object: the server sees
/// only the dataset size and the parameters returned by local_train.
class Client {
public:
    Client(std::size_t id, std::size_t group, Dataset data);

    std::size_t id() const { return id_; }
    std::size_t group() const { return group_; }
    std::size_t size() const { return data_.size(); }

    /// Trains a copy of `global` for `config.local_epochs` epochs with a
    /// fresh AdamW. Batch order comes from the client's stream for `round`.
    /// A non-finite gradient aborts the run instead of throwing.
    LocalResult local_train(const ModelState& global, const FederationConfig& config, std::size_t round) const;

private:
    std::size_t id_;
    std::size_t group_;
    Dataset data_;
};

std::vector<Client> make_clients(const Dataset& train, std::span<const ClientPartition> partitions);

/// Order of mini-batches a client uses in one local epoch.
std::vector<std::size_t> epoch_order(std::size_t num_examples, std::uint64_t seed, std::size_t client_id,
                                     std::size_t round, std::size_t epoch);

struct WeightedUpdate {
    const NamedTensors* params = nullptr;
    std::size_t num_examples = 0;
};

/// Per-tensor mean weighted by dataset size. Computed as a running mean, so
/// identical inputs come back unchanged bit for bit.
NamedTensors fedavg_aggregate(std::span<const WeightedUpdate> updates);

struct ClientRoundLog {
    std::size_t client_id = 0;
    double loss = 0.0;  // mean local mini-batch loss
    std::optional<double> cka_drift;
    bool aborted = false;
};

struct RoundLog {
    std::size_t round = 0;  // 0 is the evaluation before any training
    std::vector<std::size_t> sampled;
    std::vector<ClientRoundLog> clients;
    double test_accuracy = 0.0;
    std::size_t bytes_up = 0;
    std::size_t bytes_down = 0;

    std::optional<double> mean_loss() const;
    std::optional<double> mean_drift() const;
};

class Federation {
public:
    /// `probe` is the fixed drift-probe set; leave it empty to skip drift.
    Federation(ModelState initial, std::vector<Client> clients, Dataset test, Dataset probe, FederationConfig config);

    /// Round 0: evaluate the initial model. Called once, before run_round.
    const RoundLog& evaluate_initial();

    /// sample, broadcast, local training, aggregation, evaluation.
    const RoundLog& run_round();

    /// Runs up to `rounds` rounds, stopping early once test accuracy reaches
    /// `stop_at` when given.
    void run(std::size_t rounds, std::optional<double> stop_at = std::nullopt);

    const ModelState& global() const { return global_; }
    std::size_t round() const { return round_; }
    const std::vector<RoundLog>& logs() const { return logs_; }
    std::size_t num_clients() const { return clients_.size(); }
    std::vector<double> accuracy_trace() const;  // rounds 1..R
    std::size_t total_bytes() const;

private:
    std::vector<LocalResult> train_sampled(const std::vector<std::size_t>& sampled) const;

    ModelState global_;
    std::vector<Client> clients_;
    Dataset test_;
    Dataset probe_;
    FederationConfig config_;
    std::size_t round_ = 0;
    std::vector<RoundLog> logs_;
};

/// Round-log CSV: round, client_id (or AGG), loss, test_acc, cka_drift,
/// bytes_up, bytes_down. Fields that do not apply are left empty.
void write_round_csv(std::ostream& out, std::span<const RoundLog> logs);

}  // namespace c2a
