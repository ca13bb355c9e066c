#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "waveplan/csv.hpp"
#include "waveplan/rng.hpp"

namespace waveplan {

/// Cumulative arrival progress is tracked on a fixed integer grid.
inline constexpr int kProgressScale = 1000;

/// One season of raw per-step arrival quantities for a single product.
struct HistoricalSeason {
    std::string product_id;
    std::vector<long long> quantities;  // items per step, length T
};

/// Per-step arrival quantities rescaled so the season total is exactly 1000.
struct NormalizedSeries {
    std::vector<int> per_mille;
};

/// Rescales a raw season to a 1000-point total using largest-remainder
/// apportionment (nearest-integer rounding can miss the total, which would
/// leave cumulative paths short of the grid endpoint). Remainder ties go to
/// the earliest time step.
inline NormalizedSeries normalize_season(const HistoricalSeason& raw, int season_index = 0) {
    const long long total = std::accumulate(raw.quantities.begin(), raw.quantities.end(), 0LL);
    for (long long q : raw.quantities) {
        if (q < 0)
            throw std::invalid_argument("normalize_season: negative quantity in product '" +
                                        raw.product_id + "' season " + std::to_string(season_index));
    }
    if (total <= 0)
        throw std::invalid_argument("normalize_season: all-zero season for product '" +
                                    raw.product_id + "' season " + std::to_string(season_index));

    const std::size_t n = raw.quantities.size();
    NormalizedSeries out;
    out.per_mille.resize(n);
    std::vector<long long> remainder(n);
    long long assigned = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const long long scaled = raw.quantities[t] * kProgressScale;
        out.per_mille[t] = static_cast<int>(scaled / total);
        remainder[t] = scaled % total;
        assigned += out.per_mille[t];
    }
    long long leftover = kProgressScale - assigned;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return remainder[a] > remainder[b];  // stable keeps earliest-index tie-break
    });
    for (std::size_t i = 0; i < n && leftover > 0; ++i, --leftover) out.per_mille[order[i]] += 1;
    return out;
}

/// Time-varying Markov chain over cumulative per-mille arrival progress,
/// states {0,...,1000}. Rows are stored sparsely for observed (t, s) pairs
/// only; transition index t runs over [1, T] and consumes the arrival mass of
/// season step t-1 (every cumulative path starts from a virtual state 0).
/// Unseen (t, s) pairs self-loop, so sampling never invents arrivals and
/// progress never decreases.
class TvmcModel {
public:
    struct Entry {
        int state;
        double p;
    };
    using Row = std::vector<Entry>;  // sorted by state ascending

    TvmcModel() = default;

    const std::string& product_id() const { return product_id_; }
    int season_length() const { return season_length_; }
    std::size_t row_count() const { return rows_.size(); }

    const Row* row(int t, int s) const {
        const auto it = rows_.find(key(t, s));
        return it == rows_.end() ? nullptr : &it->second;
    }

    /// Counting estimator over cumulative paths:
    ///   P_t(s, s') = #(s -> s' at t) / #(s at t-1), aggregated across seasons.
    static TvmcModel fit(const std::string& product_id,
                         const std::vector<NormalizedSeries>& seasons) {
        if (seasons.empty()) throw std::invalid_argument("fit_tvmc: no seasons for product '" + product_id + "'");
        const std::size_t len = seasons.front().per_mille.size();
        if (len == 0) throw std::invalid_argument("fit_tvmc: empty season for product '" + product_id + "'");

        std::map<std::uint32_t, std::map<int, long long>> counts;
        for (std::size_t j = 0; j < seasons.size(); ++j) {
            const auto& s = seasons[j];
            if (s.per_mille.size() != len)
                throw std::invalid_argument("fit_tvmc: season length mismatch for product '" +
                                            product_id + "' season " + std::to_string(j));
            int cum = 0;
            for (std::size_t t = 0; t < len; ++t) {
                const int q = s.per_mille[t];
                if (q < 0 || cum + q > kProgressScale)
                    throw std::invalid_argument("fit_tvmc: series not normalized for product '" +
                                                product_id + "' season " + std::to_string(j));
                counts[key(static_cast<int>(t) + 1, cum)][cum + q] += 1;
                cum += q;
            }
        }

        TvmcModel model;
        model.product_id_ = product_id;
        model.season_length_ = static_cast<int>(len);
        for (const auto& [k, targets] : counts) {
            long long total = 0;
            for (const auto& [_, c] : targets) total += c;
            Row row;
            row.reserve(targets.size());
            for (const auto& [state, c] : targets)
                row.push_back({state, static_cast<double>(c) / static_cast<double>(total)});
            model.rows_.emplace(k, std::move(row));
        }
        return model;
    }

    /// Draws the next state from row P_t(s, .); self-loop when (t, s) was
    /// never observed. Result is always >= s.
    int sample_transition(int t, int s, Rng& rng) const {
        check_query(t, s);
        const Row* r = row(t, s);
        if (r == nullptr) return s;
        const double u = rng.uniform();
        double acc = 0.0;
        for (const auto& e : *r) {
            acc += e.p;
            if (u < acc) return e.state;
        }
        return r->back().state;  // guard against accumulated float error
    }

    /// Full-season sample: T+1 states, index 0 is the virtual start at 0.
    std::vector<int> sample_trajectory(Rng& rng) const {
        std::vector<int> path(static_cast<std::size_t>(season_length_) + 1);
        path[0] = 0;
        for (int t = 1; t <= season_length_; ++t)
            path[static_cast<std::size_t>(t)] = sample_transition(t, path[static_cast<std::size_t>(t) - 1], rng);
        return path;
    }

    /// Stored source state at transition time t closest to s (|diff| ties go
    /// down). Used to re-anchor a live inventory level onto the fitted grid;
    /// falls back to s itself when time t has no rows.
    int nearest_source_state(int t, int s) const {
        check_query(t, s);
        int best = s;
        int best_dist = -1;
        for (const auto& [k, _] : rows_) {
            if (static_cast<int>(k / (kProgressScale + 1)) != t) continue;
            const int src = static_cast<int>(k % (kProgressScale + 1));
            const int dist = std::abs(src - s);
            if (best_dist < 0 || dist < best_dist || (dist == best_dist && src < best)) {
                best = src;
                best_dist = dist;
            }
        }
        return best;
    }

    /// Max L1 distance between a stored row and a reference distribution,
    /// considering rows whose source (t, s) appears in `ref`. Test hook for
    /// the estimator-consistency property.
    template <typename RefFn>
    double max_row_l1(RefFn&& ref) const {
        double worst = 0.0;
        for (const auto& [k, row] : rows_) {
            const int t = static_cast<int>(k / (kProgressScale + 1));
            const int s = static_cast<int>(k % (kProgressScale + 1));
            const auto refdist = ref(t, s);  // optional<map<int,double>>
            if (!refdist) continue;
            double l1 = 0.0;
            std::map<int, double> got;
            for (const auto& e : row) got[e.state] = e.p;
            for (const auto& [state, p] : *refdist) {
                const auto it = got.find(state);
                l1 += std::abs((it == got.end() ? 0.0 : it->second) - p);
                if (it != got.end()) got.erase(it);
            }
            for (const auto& [_, p] : got) l1 += p;
            worst = std::max(worst, l1);
        }
        return worst;
    }

    template <typename Fn>
    void for_each_row(Fn&& fn) const {
        for (const auto& [k, row] : rows_)
            fn(static_cast<int>(k / (kProgressScale + 1)), static_cast<int>(k % (kProgressScale + 1)), row);
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["product_id"] = product_id_;
        j["T"] = season_length_;
        auto rows = nlohmann::ordered_json::array();
        std::vector<std::uint32_t> keys;
        keys.reserve(rows_.size());
        for (const auto& [k, _] : rows_) keys.push_back(k);
        std::sort(keys.begin(), keys.end());
        for (const std::uint32_t k : keys) {
            nlohmann::ordered_json row;
            row["t"] = static_cast<int>(k / (kProgressScale + 1));
            row["s"] = static_cast<int>(k % (kProgressScale + 1));
            auto targets = nlohmann::ordered_json::array();
            for (const auto& e : rows_.at(k)) targets.push_back({{"s'", e.state}, {"p", e.p}});
            row["targets"] = std::move(targets);
            rows.push_back(std::move(row));
        }
        j["rows"] = std::move(rows);
        return j;
    }

    static TvmcModel from_json(const nlohmann::json& j) {
        TvmcModel model;
        model.product_id_ = j.at("product_id").get<std::string>();
        model.season_length_ = j.at("T").get<int>();
        for (const auto& row : j.at("rows")) {
            const int t = row.at("t").get<int>();
            const int s = row.at("s").get<int>();
            Row r;
            for (const auto& e : row.at("targets"))
                r.push_back({e.at("s'").get<int>(), e.at("p").get<double>()});
            std::sort(r.begin(), r.end(), [](const Entry& a, const Entry& b) { return a.state < b.state; });
            model.rows_.emplace(key(t, s), std::move(r));
        }
        return model;
    }

private:
    static std::uint32_t key(int t, int s) {
        return static_cast<std::uint32_t>(t) * (kProgressScale + 1) + static_cast<std::uint32_t>(s);
    }

    void check_query(int t, int s) const {
        if (s < 0 || s > kProgressScale)
            throw std::out_of_range("TVMC state " + std::to_string(s) + " outside [0, 1000]");
        if (t < 1 || t > season_length_)
            throw std::out_of_range("TVMC transition time " + std::to_string(t) + " outside [1, " +
                                    std::to_string(season_length_) + "]");
    }

    std::string product_id_;
    int season_length_ = 0;
    std::unordered_map<std::uint32_t, Row> rows_;
};

struct FitSummary {
    std::string product_id;
    int seasons = 0;
    std::size_t rows = 0;
    bool low_data = false;  // fitted from a single season; self-loop fallback will dominate
};

/// Normalize + fit for one product; season count below 2 is flagged, not rejected.
inline TvmcModel fit_product(const std::string& product_id,
                             const std::vector<HistoricalSeason>& seasons, FitSummary* summary = nullptr) {
    std::vector<NormalizedSeries> normalized;
    normalized.reserve(seasons.size());
    for (std::size_t i = 0; i < seasons.size(); ++i)
        normalized.push_back(normalize_season(seasons[i], static_cast<int>(i)));
    TvmcModel model = TvmcModel::fit(product_id, normalized);
    if (summary != nullptr) {
        summary->product_id = product_id;
        summary->seasons = static_cast<int>(seasons.size());
        summary->rows = model.row_count();
        summary->low_data = seasons.size() < 2;
    }
    return model;
}

/// History CSV: product_id, season_index, time_step, quantity. Missing
/// (product, season, t) rows mean quantity 0. Season length is the largest
/// time_step in the file plus one.
inline std::vector<HistoricalSeason> read_history_csv(const std::string& path) {
    const auto rows = csv::read_file(path);
    struct Key {
        std::string product;
        long long season;
        bool operator<(const Key& o) const {
            return product != o.product ? product < o.product : season < o.season;
        }
    };
    std::map<Key, std::map<long long, long long>> cells;
    long long max_t = -1;
    for (const auto& row : rows) {
        if (row.fields.size() != 4)
            throw std::runtime_error("CSV line " + std::to_string(row.line_no) +
                                     ": expected 4 fields (product_id,season_index,time_step,quantity)");
        if (row.fields[0] == "product_id") continue;  // header
        const long long season = csv::parse_int(row.fields[1], row.line_no, "season_index");
        const long long t = csv::parse_int(row.fields[2], row.line_no, "time_step");
        const long long q = csv::parse_int(row.fields[3], row.line_no, "quantity");
        if (t < 0 || season < 0 || q < 0)
            throw std::runtime_error("CSV line " + std::to_string(row.line_no) + ": negative value");
        max_t = std::max(max_t, t);
        cells[{row.fields[0], season}][t] += q;
    }
    if (max_t < 0) throw std::runtime_error("history CSV is empty: " + path);

    std::vector<HistoricalSeason> out;
    for (const auto& [k, sparse] : cells) {
        HistoricalSeason season;
        season.product_id = k.product;
        season.quantities.assign(static_cast<std::size_t>(max_t) + 1, 0);
        for (const auto& [t, q] : sparse) season.quantities[static_cast<std::size_t>(t)] = q;
        out.push_back(std::move(season));
    }
    return out;
}

}  // namespace waveplan
