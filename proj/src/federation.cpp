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

#include "c2a/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "c2a/errors.hpp"
#include "c2a/metrics.hpp"

namespace c2a {

namespace {

std::size_t largest_client(const std::vector<ClientPartition>& parts) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < parts.size(); ++k) {
        if (parts[k].indices.size() > parts[best].indices.size()) best = k;
    }
    return best;
}

// Largest-remainder apportionment of n items by proportions p (sum 1).
// Ties in the remainder go to the lower index.
std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& p) {
    std::vector<std::size_t> counts(p.size());
    std::vector<std::pair<double, std::size_t>> rem(p.size());
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double exact = p[k] * static_cast<double>(n);
        counts[k] = static_cast<std::size_t>(std::floor(exact));
        assigned += counts[k];
        rem[k] = {exact - static_cast<double>(counts[k]), k};
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[rem[i % rem.size()].second];
    return counts;
}

}  // namespace

std::vector<ClientPartition> dirichlet_partition(std::span<const std::size_t> labels, std::size_t num_clients,
                                                 double beta, std::uint64_t seed) {
    if (num_clients == 0) throw PartitionError("dirichlet_partition: need at least one client");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw PartitionError("dirichlet_partition: beta must be positive");
    if (num_clients > labels.size()) {
        throw PartitionError("dirichlet_partition: " + std::to_string(num_clients) + " clients but only " +
                             std::to_string(labels.size()) + " examples");
    }
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    std::vector<ClientPartition> parts(num_clients);
    for (std::size_t k = 0; k < num_clients; ++k) parts[k].client_id = k;
    for (auto& [label, members] : by_class) {
        auto eng = rng::engine(seed, "partition", {label});
        std::shuffle(members.begin(), members.end(), eng);
        const auto counts = apportion(members.size(), rng::dirichlet(num_clients, beta, eng));
        std::size_t offset = 0;
        for (std::size_t k = 0; k < num_clients; ++k) {
            parts[k].indices.insert(parts[k].indices.end(), members.begin() + static_cast<std::ptrdiff_t>(offset),
                                    members.begin() + static_cast<std::ptrdiff_t>(offset + counts[k]));
            offset += counts[k];
        }
    }
    for (auto& part : parts) {
        if (!part.indices.empty()) continue;
        auto& donor = parts[largest_client(parts)].indices;
        part.indices.push_back(donor.back());
        donor.pop_back();
    }
    for (auto& part : parts) std::sort(part.indices.begin(), part.indices.end());
    return parts;
}

std::vector<ClientPartition> group_partition(std::span<const std::size_t> labels,
                                             std::span<const std::size_t> groups, std::size_t num_clients,
                                             std::size_t num_groups, double beta, std::uint64_t seed) {
    if (labels.size() != groups.size()) throw PartitionError("group_partition: labels and groups differ in length");
    if (num_groups == 0) throw PartitionError("group_partition: need at least one group");
    if (num_clients < num_groups) {
        throw PartitionError("group_partition: " + std::to_string(num_clients) + " clients leave some of the " +
                             std::to_string(num_groups) + " groups without a client");
    }
    std::vector<std::vector<std::size_t>> members(num_groups);
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (groups[i] >= num_groups) {
            throw PartitionError("group_partition: example " + std::to_string(i) + " has group " +
                                 std::to_string(groups[i]) + " >= " + std::to_string(num_groups));
        }
        members[groups[i]].push_back(i);
    }
    std::vector<ClientPartition> parts(num_clients);
    for (std::size_t g = 0; g < num_groups; ++g) {
        std::vector<std::size_t> ids;
        for (std::size_t k = g; k < num_clients; k += num_groups) ids.push_back(k);
        if (members[g].size() < ids.size()) {
            throw PartitionError("group_partition: group " + std::to_string(g) + " has " +
                                 std::to_string(members[g].size()) + " examples for " + std::to_string(ids.size()) +
                                 " clients");
        }
        std::vector<std::size_t> group_labels;
        for (auto i : members[g]) group_labels.push_back(labels[i]);
        const auto local = dirichlet_partition(group_labels, ids.size(), beta, rng::derive(seed, "group", {g}));
        for (std::size_t j = 0; j < ids.size(); ++j) {
            auto& part = parts[ids[j]];
            part.client_id = ids[j];
            part.group = g;
            for (auto li : local[j].indices) part.indices.push_back(members[g][li]);
        }
    }
    return parts;
}

std::vector<std::size_t> sample_clients(std::size_t num_clients, double fraction, std::uint64_t seed,
                                        std::size_t round) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
    // The epsilon keeps e.g. 0.25 * 100 from rounding up to 26.
    const auto m = std::min(num_clients, static_cast<std::size_t>(std::ceil(fraction * num_clients - 1e-9)));
    std::vector<std::size_t> ids(num_clients);
    std::iota(ids.begin(), ids.end(), 0);
    auto eng = rng::engine(seed, "sampling", {round});
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, num_clients - 1);
        std::swap(ids[i], ids[pick(eng)]);
    }
    ids.resize(m);
    std::sort(ids.begin(), ids.end());
    return ids;
}

void FederationConfig::validate() const {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (eval_batch_size == 0) throw ConfigError("eval_batch_size must be positive");
    if (workers == 0) throw ConfigError("workers must be positive");
    if (!(optimizer.lr > 0.0)) throw ConfigError("lr must be positive");
}

Client::Client(std::size_t id, std::size_t group, Dataset data) : id_(id), group_(group), data_(std::move(data)) {
    if (data_.empty()) throw PartitionError("client " + std::to_string(id) + " has no examples");
}

std::vector<std::size_t> epoch_order(std::size_t num_examples, std::uint64_t seed, std::size_t client_id,
                                     std::size_t round, std::size_t epoch) {
    std::vector<std::size_t> order(num_examples);
    std::iota(order.begin(), order.end(), 0);
    auto eng = rng::engine(seed, "client", {client_id, round, epoch});
    std::shuffle(order.begin(), order.end(), eng);
    return order;
}

LocalResult Client::local_train(const ModelState& global, const FederationConfig& config, std::size_t round) const {
    ModelState local = global;
    AdamW optimizer(config.optimizer);
    LocalResult result;
    try {
        for (std::size_t epoch = 0; epoch < config.local_epochs; ++epoch) {
            const auto order = epoch_order(data_.size(), config.seed, id_, round, epoch);
            for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
                const std::size_t end = std::min(order.size(), start + config.batch_size);
                const Batch batch = make_batch(data_, std::span(order).subspan(start, end - start));
                result.losses.push_back(train_step(local, optimizer, batch));
            }
        }
    } catch (const PoisonedGradientError& e) {
        result.aborted = true;
        result.error = e.what();
        return result;
    }
    result.params = std::move(local.trainable);
    return result;
}

std::vector<Client> make_clients(const Dataset& train, std::span<const ClientPartition> partitions) {
    std::vector<Client> clients;
    clients.reserve(partitions.size());
    for (const auto& part : partitions) {
        Dataset data;
        data.reserve(part.indices.size());
        for (auto i : part.indices) data.push_back(train.at(i));
        clients.emplace_back(part.client_id, part.group, std::move(data));
    }
    return clients;
}

NamedTensors fedavg_aggregate(std::span<const WeightedUpdate> updates) {
    if (updates.empty()) throw AggregationError("fedavg: no updates to aggregate");
    const NamedTensors& first = *updates.front().params;
    for (std::size_t i = 0; i < updates.size(); ++i) {
        const auto& u = updates[i];
        if (u.num_examples == 0) throw AggregationError("fedavg: update " + std::to_string(i) + " has zero weight");
        if (u.params->size() != first.size()) {
            throw AggregationError("fedavg: update " + std::to_string(i) + " has " + std::to_string(u.params->size()) +
                                   " tensors, expected " + std::to_string(first.size()));
        }
        for (const auto& [name, t] : first) {
            auto it = u.params->find(name);
            if (it == u.params->end()) throw AggregationError("fedavg: update " + std::to_string(i) + " lacks " + name);
            if (it->second.shape != t.shape) {
                throw AggregationError("fedavg: " + name + " is " + shape_str(it->second.shape) + " in update " +
                                       std::to_string(i) + ", expected " + shape_str(t.shape));
            }
        }
    }
    NamedTensors out = first;
    double seen = static_cast<double>(updates.front().num_examples);
    for (std::size_t i = 1; i < updates.size(); ++i) {
        const double w = static_cast<double>(updates[i].num_examples);
        seen += w;
        const double step = w / seen;
        for (auto& [name, t] : out) {
            const auto& src = updates[i].params->at(name).data;
            for (std::size_t j = 0; j < t.data.size(); ++j) t.data[j] += step * (src[j] - t.data[j]);
        }
    }
    return out;
}

std::optional<double> RoundLog::mean_loss() const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : clients) {
        if (c.aborted) continue;
        sum += c.loss;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

std::optional<double> RoundLog::mean_drift() const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : clients) {
        if (!c.cka_drift) continue;
        sum += *c.cka_drift;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

Federation::Federation(ModelState initial, std::vector<Client> clients, Dataset test, Dataset probe,
                       FederationConfig config)
    : global_(std::move(initial)),
      clients_(std::move(clients)),
      test_(std::move(test)),
      probe_(std::move(probe)),
      config_(config) {
    config_.validate();
    if (clients_.empty()) throw ConfigError("federation: no clients");
    if (test_.empty()) throw DataError("federation: empty test set");
    for (std::size_t k = 0; k < clients_.size(); ++k) {
        if (clients_[k].id() != k) throw ConfigError("federation: clients must be ordered by id");
    }
}

const RoundLog& Federation::evaluate_initial() {
    if (!logs_.empty()) throw ContractError("federation: initial evaluation already done");
    RoundLog log;
    log.test_accuracy = evaluate_accuracy(global_, test_, config_.eval_batch_size);
    logs_.push_back(std::move(log));
    return logs_.back();
}

std::vector<LocalResult> Federation::train_sampled(const std::vector<std::size_t>& sampled) const {
    std::vector<LocalResult> results(sampled.size());
    const std::size_t workers = std::min(config_.workers, sampled.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < sampled.size(); ++i) {
            results[i] = clients_[sampled[i]].local_train(global_, config_, round_ + 1);
        }
        return results;
    }
    // Results land in their sampled slot, so worker scheduling cannot change
    // the outcome.
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < sampled.size(); i = next++) {
                results[i] = clients_[sampled[i]].local_train(global_, config_, round_ + 1);
            }
        });
    }
    for (auto& t : pool) t.join();
    return results;
}

const RoundLog& Federation::run_round() {
    if (logs_.empty()) evaluate_initial();
    const std::size_t round = round_ + 1;
    RoundLog log;
    log.round = round;
    log.sampled = sample_clients(clients_.size(), config_.fraction, config_.seed, round);

    auto results = train_sampled(log.sampled);

    std::vector<WeightedUpdate> updates;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        if (r.aborted) {
            spdlog::warn("round {}: client {} aborted: {}", round, log.sampled[i], r.error);
            continue;
        }
        updates.push_back({&r.params, clients_[log.sampled[i]].size()});
    }
    if (updates.empty()) throw RoundError("round " + std::to_string(round) + ": every sampled client aborted");

    ModelState next = global_;
    next.trainable = fedavg_aggregate(updates);

    const std::size_t per_client = count_trainable_params(global_).trainable * kBytesPerScalar;
    log.bytes_down = per_client * log.sampled.size();
    log.bytes_up = per_client * updates.size();

    Tensor global_probe;
    if (!probe_.empty()) global_probe = predict_logits(next, probe_, config_.eval_batch_size);
    for (std::size_t i = 0; i < results.size(); ++i) {
        ClientRoundLog c;
        c.client_id = log.sampled[i];
        c.aborted = results[i].aborted;
        if (!c.aborted) {
            const auto& losses = results[i].losses;
            c.loss = losses.empty() ? 0.0
                                    : std::accumulate(losses.begin(), losses.end(), 0.0) /
                                          static_cast<double>(losses.size());
            if (!probe_.empty()) {
                ModelState local = global_;
                local.trainable = std::move(results[i].params);
                try {
                    c.cka_drift = linear_cka(predict_logits(local, probe_, config_.eval_batch_size), global_probe);
                } catch (const UndefinedSimilarityError& e) {
                    spdlog::warn("round {}: client {} drift undefined: {}", round, c.client_id, e.what());
                }
            }
        }
        log.clients.push_back(c);
    }

    global_ = std::move(next);
    round_ = round;
    log.test_accuracy = evaluate_accuracy(global_, test_, config_.eval_batch_size);
    spdlog::debug("round {}: acc {:.4f}", round, log.test_accuracy);
    logs_.push_back(std::move(log));
    return logs_.back();
}

void Federation::run(std::size_t rounds, std::optional<double> stop_at) {
    if (logs_.empty()) evaluate_initial();
    for (std::size_t r = 0; r < rounds; ++r) {
        const auto& log = run_round();
        if (stop_at && log.test_accuracy >= *stop_at) break;
    }
}

std::vector<double> Federation::accuracy_trace() const {
    std::vector<double> trace;
    for (const auto& log : logs_) {
        if (log.round > 0) trace.push_back(log.test_accuracy);
    }
    return trace;
}

std::size_t Federation::total_bytes() const {
    std::size_t total = 0;
    for (const auto& log : logs_) total += log.bytes_up + log.bytes_down;
    return total;
}

namespace {

std::string fixed(std::optional<double> v) { return v ? fmt::format("{:.6f}", *v) : std::string(); }

}  // namespace

void write_round_csv(std::ostream& out, std::span<const RoundLog> logs) {
    out << "round,client_id,loss,test_acc,cka_drift,bytes_up,bytes_down\n";
    for (const auto& log : logs) {
        const std::size_t participants = log.sampled.empty() ? 1 : log.sampled.size();
        const std::size_t down_each = log.bytes_down / participants;
        for (const auto& c : log.clients) {
            out << fmt::format("{},{},{},,{},{},{}\n", log.round, c.client_id,
                               c.aborted ? std::string() : fixed(c.loss), fixed(c.cka_drift),
                               c.aborted ? 0 : down_each, down_each);
        }
        out << fmt::format("{},AGG,{},{},{},{},{}\n", log.round, fixed(log.mean_loss()), fixed(log.test_accuracy),
                           fixed(log.mean_drift()), log.bytes_up, log.bytes_down);
    }
}

}  // namespace c2a
