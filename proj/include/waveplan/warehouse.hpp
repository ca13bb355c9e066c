#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "waveplan/rng.hpp"

namespace waveplan {

using ProductIdx = int;
using OrderId = int;
using ContainerId = long long;
using Step = int;  // discrete season time step

/// Sparse per-product quantities, sorted by product index, no zero entries.
using SparseQty = std::vector<std::pair<ProductIdx, long long>>;

inline long long sparse_total(const SparseQty& q) {
    long long t = 0;
    for (const auto& [_, v] : q) t += v;
    return t;
}

inline void sparse_add(SparseQty& into, ProductIdx p, long long qty) {
    if (qty == 0) return;
    auto it = std::lower_bound(into.begin(), into.end(), p,
                               [](const auto& e, ProductIdx key) { return e.first < key; });
    if (it != into.end() && it->first == p) {
        it->second += qty;
        if (it->second == 0) into.erase(it);
    } else {
        into.insert(it, {p, qty});
    }
}

inline long long sparse_get(const SparseQty& q, ProductIdx p) {
    const auto it = std::lower_bound(q.begin(), q.end(), p,
                                     [](const auto& e, ProductIdx key) { return e.first < key; });
    return (it != q.end() && it->first == p) ? it->second : 0;
}

struct ProductCatalog {
    std::vector<std::string> product_ids;          // index -> external id
    std::vector<long long> season_total;           // expected items over the season

    int count() const { return static_cast<int>(product_ids.size()); }

    void validate() const {
        if (product_ids.size() != season_total.size())
            throw std::invalid_argument("catalog: id/total size mismatch");
        std::vector<std::string> sorted = product_ids;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw std::invalid_argument("catalog: duplicate product id");
        for (long long t : season_total)
            if (t < 0) throw std::invalid_argument("catalog: negative season total");
    }
};

struct Order {
    OrderId id = 0;
    SparseQty demand;
    Step deadline = 0;
    long long size = 0;  // sum of demand, the scenario-wide n_b

    void finalize() { size = sparse_total(demand); }
};

struct IntermediateContainer {
    ContainerId id = 0;
    Step arrived_at = 0;
    SparseQty contents;
};

/// Containers plus the per-product aggregate view. The aggregate is kept in
/// lockstep with container contents at every mutation; consistency() is the
/// checked invariant.
class Inventory {
public:
    explicit Inventory(int product_count) : aggregate_(product_count, 0) {}

    const std::vector<long long>& aggregate() const { return aggregate_; }
    long long on_hand(ProductIdx p) const { return aggregate_[static_cast<std::size_t>(p)]; }
    const std::vector<IntermediateContainer>& containers() const { return containers_; }

    void add_container(IntermediateContainer c) {
        for (const auto& [p, q] : c.contents) {
            if (q <= 0) throw std::invalid_argument("container with non-positive entry");
            aggregate_[static_cast<std::size_t>(p)] += q;
        }
        containers_.push_back(std::move(c));
    }

    /// Removes qty of product p from a specific container. Container is erased
    /// once empty.
    void take(ContainerId id, ProductIdx p, long long qty) {
        auto it = std::find_if(containers_.begin(), containers_.end(),
                               [&](const auto& c) { return c.id == id; });
        if (it == containers_.end()) throw std::invalid_argument("take: unknown container");
        take_at(static_cast<std::size_t>(it - containers_.begin()), p, qty);
    }

    void take_at(std::size_t index, ProductIdx p, long long qty) {
        auto& c = containers_[index];
        const long long have = sparse_get(c.contents, p);
        if (qty < 0 || qty > have) throw std::invalid_argument("take: quantity not in container");
        sparse_add(c.contents, p, -qty);
        aggregate_[static_cast<std::size_t>(p)] -= qty;
        if (c.contents.empty())
            containers_.erase(containers_.begin() + static_cast<std::ptrdiff_t>(index));
    }

    bool consistent() const {
        std::vector<long long> sum(aggregate_.size(), 0);
        for (const auto& c : containers_)
            for (const auto& [p, q] : c.contents) {
                if (q <= 0) return false;
                sum[static_cast<std::size_t>(p)] += q;
            }
        return sum == aggregate_;
    }

private:
    std::vector<IntermediateContainer> containers_;
    std::vector<long long> aggregate_;
};

struct SortationConfig {
    long long n_c = 250;           // container capacity, items
    int n_w = 400;                 // wave capacity, orders
    int stations = 30;             // induction stations (documentation only)
    int chutes = 400;              // bounds n_w
    double t_setup = 1.0;          // fixed wave overhead, steps
    double t_per_container = 0.1;  // steps per container accessed
    double duration_noise_sigma = 0.0;  // lognormal sigma, 0 disables

    void validate() const {
        if (n_c <= 0) throw std::invalid_argument("sortation: n_c must be positive");
        if (n_w <= 0 || n_w > chutes) throw std::invalid_argument("sortation: need 0 < n_w <= chutes");
        if (t_setup < 0 || t_per_container < 0 || duration_noise_sigma < 0)
            throw std::invalid_argument("sortation: negative timing parameter");
        if (t_setup + t_per_container < 1.0)
            throw std::invalid_argument("sortation: t_setup + t_per_container must be >= 1");
    }
};

/// |C_t| = ceil(total/n_c); containers are filled sequentially in ascending
/// product-id order, so most containers hold one or two products.
inline std::vector<IntermediateContainer> pack_arrivals(const SparseQty& arrivals, Step t,
                                                        const SortationConfig& cfg,
                                                        ContainerId& next_id) {
    std::vector<IntermediateContainer> out;
    const long long total = sparse_total(arrivals);
    if (total == 0) return out;
    for (const auto& [_, q] : arrivals)
        if (q < 0) throw std::invalid_argument("pack_arrivals: negative quantity");

    IntermediateContainer cur{next_id, t, {}};
    long long room = cfg.n_c;
    for (const auto& [p, q] : arrivals) {
        long long left = q;
        while (left > 0) {
            const long long put = std::min(left, room);
            sparse_add(cur.contents, p, put);
            left -= put;
            room -= put;
            if (room == 0) {
                out.push_back(std::move(cur));
                cur = IntermediateContainer{++next_id, t, {}};
                room = cfg.n_c;
            }
        }
    }
    if (!cur.contents.empty()) {
        out.push_back(std::move(cur));
        ++next_id;
    }
    return out;
}

inline double availability_fraction(const Order& order, const std::vector<long long>& aggregate) {
    if (order.size == 0) return 1.0;
    long long avail = 0;
    for (const auto& [p, b] : order.demand) avail += std::min(aggregate[static_cast<std::size_t>(p)], b);
    return static_cast<double>(avail) / static_cast<double>(order.size);
}

inline double availability_fraction(const Order& order, const Inventory& inv) {
    return availability_fraction(order, inv.aggregate());
}

/// Worst-case duration of any single wave: every order in a full wave touching
/// disjoint containers.
inline double worst_case_wave_duration(const SortationConfig& cfg, long long order_size) {
    const long long max_containers = (static_cast<long long>(cfg.n_w) * order_size + cfg.n_c - 1) / cfg.n_c;
    return cfg.t_setup + cfg.t_per_container * static_cast<double>(max_containers);
}

/// True iff starting any later wave could not complete before the deadline.
inline bool is_last_opportunity(const Order& order, Step now, const SortationConfig& cfg) {
    return static_cast<double>(now) + worst_case_wave_duration(cfg, order.size) >=
           static_cast<double>(order.deadline);
}

inline bool preemption_qualified(const Order& order, const std::vector<long long>& aggregate,
                                 double alpha, Step now, const SortationConfig& cfg) {
    return is_last_opportunity(order, now, cfg) &&
           availability_fraction(order, aggregate) >= alpha - 1e-12;
}

/// Stock allocation for a candidate wave. Orders not qualifying for preemption
/// commit their full demand; qualified orders take whatever remains after the
/// full group. Both groups allocate in ascending (deadline, id) order.
struct WaveAllocation {
    bool feasible = false;
    SparseQty committed_total;                  // items the wave will pick
    std::vector<SparseQty> shipped;             // parallel to the input order list
    std::vector<bool> partial;                  // shipped < demand
    std::vector<long long> deficit;             // per product, only when infeasible
};

inline WaveAllocation allocate_wave(const std::vector<const Order*>& orders,
                                    const std::vector<long long>& aggregate, double alpha,
                                    Step now, const SortationConfig& cfg) {
    WaveAllocation out;
    out.shipped.resize(orders.size());
    out.partial.assign(orders.size(), false);

    std::vector<std::size_t> full, preempt;
    for (std::size_t i = 0; i < orders.size(); ++i) {
        if (preemption_qualified(*orders[i], aggregate, alpha, now, cfg))
            preempt.push_back(i);
        else
            full.push_back(i);
    }
    const auto by_deadline = [&](std::size_t a, std::size_t b) {
        if (orders[a]->deadline != orders[b]->deadline) return orders[a]->deadline < orders[b]->deadline;
        return orders[a]->id < orders[b]->id;
    };
    std::sort(full.begin(), full.end(), by_deadline);
    std::sort(preempt.begin(), preempt.end(), by_deadline);

    std::vector<long long> remaining = aggregate;
    for (const std::size_t i : full) {
        out.shipped[i] = orders[i]->demand;
        for (const auto& [p, b] : orders[i]->demand) remaining[static_cast<std::size_t>(p)] -= b;
    }
    bool ok = true;
    for (std::size_t p = 0; p < remaining.size(); ++p) {
        if (remaining[p] < 0) {
            ok = false;
            if (out.deficit.empty()) out.deficit.assign(remaining.size(), 0);
            out.deficit[p] = -remaining[p];
        }
    }
    if (!ok) return out;

    for (const std::size_t i : preempt) {
        SparseQty ship;
        for (const auto& [p, b] : orders[i]->demand) {
            const long long take = std::min(b, remaining[static_cast<std::size_t>(p)]);
            if (take > 0) {
                sparse_add(ship, p, take);
                remaining[static_cast<std::size_t>(p)] -= take;
            }
            if (take < b) out.partial[i] = true;
        }
        out.shipped[i] = std::move(ship);
    }
    for (std::size_t i = 0; i < orders.size(); ++i)
        for (const auto& [p, q] : out.shipped[i]) sparse_add(out.committed_total, p, q);
    out.feasible = true;
    return out;
}

inline bool wave_feasible(const std::vector<const Order*>& orders, const Inventory& inv,
                          double alpha, Step now, const SortationConfig& cfg) {
    if (orders.size() > static_cast<std::size_t>(cfg.n_w)) return false;
    return allocate_wave(orders, inv.aggregate(), alpha, now, cfg).feasible;
}

/// Greedy set cover over containers: repeatedly pick the container whose
/// remaining contents cover the largest outstanding demand mass, lowest id on
/// ties. Indices into inv.containers() are returned alongside ids.
struct ContainerSelection {
    std::vector<ContainerId> ids;
    std::vector<std::size_t> indices;
};

inline ContainerSelection select_containers(const SparseQty& demand, const Inventory& inv) {
    SparseQty outstanding = demand;
    ContainerSelection sel;
    std::vector<bool> used(inv.containers().size(), false);
    while (!outstanding.empty()) {
        long long best_cover = 0;
        std::size_t best_idx = 0;
        ContainerId best_id = 0;
        for (std::size_t i = 0; i < inv.containers().size(); ++i) {
            if (used[i]) continue;
            const auto& c = inv.containers()[i];
            long long cover = 0;
            for (const auto& [p, q] : c.contents) cover += std::min(q, sparse_get(outstanding, p));
            if (cover > best_cover || (cover == best_cover && cover > 0 && c.id < best_id)) {
                best_cover = cover;
                best_idx = i;
                best_id = c.id;
            }
        }
        if (best_cover == 0) {
            std::string msg = "select_containers: unsatisfiable demand, deficit:";
            for (const auto& [p, q] : outstanding) msg += " p" + std::to_string(p) + "=" + std::to_string(q);
            throw std::invalid_argument(msg);
        }
        used[best_idx] = true;
        sel.ids.push_back(best_id);
        sel.indices.push_back(best_idx);
        for (const auto& [p, q] : inv.containers()[best_idx].contents) {
            const long long take = std::min(q, sparse_get(outstanding, p));
            if (take > 0) sparse_add(outstanding, p, -take);
        }
    }
    return sel;
}

struct Wave {
    std::vector<OrderId> orders;
    std::vector<ContainerId> containers_used;
    Step start = 0;
    Step duration = 1;
    std::vector<OrderId> preempted_orders;
};

struct CompletedOrder {
    OrderId id = 0;
    Step fulfilled_at = 0;
    bool partial = false;
    long long shipped_items = 0;
};

struct WaveExecution {
    Wave wave;
    std::vector<CompletedOrder> completed;
};

/// Runs a feasible wave against the live inventory: duration is affine in the
/// container count (optionally noise-scaled), picks are drawn from the
/// selected containers in cover order, and the aggregate stays equal to the
/// container sum throughout.
inline WaveExecution execute_wave(const std::vector<const Order*>& orders, Inventory& inv,
                                  double alpha, Step now, const SortationConfig& cfg, Rng& rng) {
    if (orders.empty()) throw std::invalid_argument("execute_wave: empty wave");
    if (orders.size() > static_cast<std::size_t>(cfg.n_w))
        throw std::invalid_argument("execute_wave: wave exceeds n_w");
    auto alloc = allocate_wave(orders, inv.aggregate(), alpha, now, cfg);
    if (!alloc.feasible) {
        std::string msg = "execute_wave: infeasible wave, deficit:";
        for (std::size_t p = 0; p < alloc.deficit.size(); ++p)
            if (alloc.deficit[p] > 0) msg += " p" + std::to_string(p) + "=" + std::to_string(alloc.deficit[p]);
        throw std::invalid_argument(msg);
    }

    const auto sel = select_containers(alloc.committed_total, inv);
    double dur = cfg.t_setup + cfg.t_per_container * static_cast<double>(sel.ids.size());
    if (cfg.duration_noise_sigma > 0) dur *= rng.lognormal(0.0, cfg.duration_noise_sigma);
    const Step duration = static_cast<Step>(std::max(1LL, std::llround(dur)));

    // Pick committed items out of the selected containers, cover order first.
    SparseQty need = alloc.committed_total;
    for (const ContainerId cid : sel.ids) {
        // Re-resolve by id: indices shift as emptied containers are erased.
        const auto& cs = inv.containers();
        const auto it = std::find_if(cs.begin(), cs.end(), [&](const auto& c) { return c.id == cid; });
        if (it == cs.end()) continue;
        const std::size_t idx = static_cast<std::size_t>(it - cs.begin());
        SparseQty takes;
        for (const auto& [p, q] : it->contents) {
            const long long take = std::min(q, sparse_get(need, p));
            if (take > 0) takes.push_back({p, take});
        }
        for (const auto& [p, take] : takes) {
            inv.take_at(idx, p, take);
            sparse_add(need, p, -take);
        }
    }
    if (!need.empty()) throw std::logic_error("execute_wave: cover did not satisfy demand");

    WaveExecution out;
    out.wave.start = now;
    out.wave.duration = duration;
    out.wave.containers_used = sel.ids;
    for (std::size_t i = 0; i < orders.size(); ++i) {
        out.wave.orders.push_back(orders[i]->id);
        if (alloc.partial[i]) out.wave.preempted_orders.push_back(orders[i]->id);
        out.completed.push_back({orders[i]->id, static_cast<Step>(now + duration), alloc.partial[i],
                                 sparse_total(alloc.shipped[i])});
    }
    return out;
}

// --- JSON snapshots (planner-service reuse and golden-file tests) ---

inline nlohmann::ordered_json sparse_to_json(const SparseQty& q) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [p, v] : q) j[std::to_string(p)] = v;
    return j;
}

inline SparseQty sparse_from_json(const nlohmann::json& j) {
    SparseQty q;
    for (const auto& [k, v] : j.items()) sparse_add(q, std::stoi(k), v.get<long long>());
    return q;
}

inline nlohmann::ordered_json snapshot_to_json(Step t, const std::vector<Order>& orders,
                                               const Inventory& inv) {
    nlohmann::ordered_json j;
    j["t"] = t;
    auto os = nlohmann::ordered_json::array();
    for (const auto& o : orders)
        os.push_back({{"id", o.id}, {"demand", sparse_to_json(o.demand)}, {"deadline", o.deadline}});
    j["orders"] = std::move(os);
    auto cs = nlohmann::ordered_json::array();
    for (const auto& c : inv.containers())
        cs.push_back({{"id", c.id}, {"arrived_at", c.arrived_at}, {"contents", sparse_to_json(c.contents)}});
    j["containers"] = std::move(cs);
    return j;
}

}  // namespace waveplan
