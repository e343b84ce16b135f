#include "netlens/xai_metrics.hpp"

#include <algorithm>
#include <numeric>

#include "netlens/errors.hpp"
#include "netlens/io_util.hpp"
#include "netlens/prng.hpp"

namespace netlens {

std::size_t SegmentationMask::area() const {
    std::size_t n = 0;
    for (std::uint8_t v : grid) n += v;
    return n;
}

std::string pooling_name(Pooling p) {
    return p == Pooling::SumPos ? "sum_pos" : "l2_norm_sq";
}

Pooling pooling_from_name(const std::string& name) {
    if (name == "sum_pos") return Pooling::SumPos;
    if (name == "l2_norm_sq") return Pooling::L2NormSq;
    throw ContractError("unknown pooling '" + name + "'");
}

SegmentationMask mask_from_tensor(const Tensor& t, const std::string& image_id,
                                  const std::string& lesion) {
    if (t.shape.size() != 2)
        throw ContractError(image_id + "/" + lesion + ": mask must be (H,W), got " +
                            shape_to_string(t.shape));
    SegmentationMask mask;
    mask.image_id = image_id;
    mask.lesion = lesion;
    mask.h = t.shape[0];
    mask.w = t.shape[1];
    mask.grid.resize(t.data.size());
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        if (t.data[i] == 0.0f)
            mask.grid[i] = 0;
        else if (t.data[i] == 1.0f)
            mask.grid[i] = 1;
        else
            throw ContractError(image_id + "/" + lesion + ": mask entry " +
                                std::to_string(t.data[i]) + " is not 0 or 1");
    }
    return mask;
}

SegmentationMask combine_total(const std::vector<SegmentationMask>& lesions) {
    if (lesions.empty())
        throw ContractError("combine_total: no lesion masks");
    SegmentationMask total = lesions.front();
    total.lesion = "total";
    for (std::size_t i = 1; i < lesions.size(); ++i) {
        const SegmentationMask& m = lesions[i];
        if (m.h != total.h || m.w != total.w)
            throw ContractError(m.image_id + ": lesion mask shapes differ");
        for (std::size_t j = 0; j < total.grid.size(); ++j)
            total.grid[j] = total.grid[j] | m.grid[j];
    }
    return total;
}

PooledHeatmap pool(const Tensor& relevance_chw, Pooling mode) {
    if (relevance_chw.shape.size() != 3)
        throw ContractError("pool: relevance must be (C,H,W), got " +
                            shape_to_string(relevance_chw.shape));
    const std::size_t c = relevance_chw.shape[0];
    const std::size_t h = relevance_chw.shape[1];
    const std::size_t w = relevance_chw.shape[2];
    PooledHeatmap out;
    out.h = h;
    out.w = w;
    out.pooling = mode;
    out.grid.assign(h * w, 0.0);
    for (std::size_t p = 0; p < h * w; ++p) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
            double v = relevance_chw.data[ch * h * w + p];
            acc += mode == Pooling::SumPos ? v : v * v;
        }
        out.grid[p] = mode == Pooling::SumPos ? std::max(0.0, acc) : acc;
    }
    return out;
}

double rma(const PooledHeatmap& heat, const SegmentationMask& mask) {
    if (heat.h != mask.h || heat.w != mask.w)
        throw ContractError(mask.image_id + ": heatmap " + std::to_string(heat.h) + "x" +
                            std::to_string(heat.w) + " vs mask " + std::to_string(mask.h) +
                            "x" + std::to_string(mask.w));
    double inside = 0.0, total = 0.0;
    for (std::size_t i = 0; i < heat.grid.size(); ++i) {
        total += heat.grid[i];
        if (mask.grid[i]) inside += heat.grid[i];
    }
    if (total <= 0.0)
        throw UndefinedScoreError(mask.image_id + ": all-zero heatmap, RMA undefined");
    return inside / total;
}

double rra(const PooledHeatmap& heat, const SegmentationMask& mask) {
    if (heat.h != mask.h || heat.w != mask.w)
        throw ContractError(mask.image_id + ": heatmap/mask shape mismatch");
    const std::size_t k = mask.area();
    if (k == 0)
        throw ContractError(mask.image_id + "/" + mask.lesion + ": empty mask, RRA undefined");

    std::vector<std::size_t> order(heat.grid.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (heat.grid[a] != heat.grid[b]) return heat.grid[a] > heat.grid[b];
        return a < b;
    });

    std::size_t hits = 0;
    for (std::size_t i = 0; i < k; ++i)
        if (mask.grid[order[i]]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(k);
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty())
        throw ContractError("mean of empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double median_of(std::vector<double> xs) {
    if (xs.empty())
        throw ContractError("median of empty sample");
    std::sort(xs.begin(), xs.end());
    std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

BaselineStats random_baseline(const SegmentationMask& mask, Pooling pooling,
                              std::size_t channels, std::size_t trials, std::uint64_t seed) {
    if (trials < 1)
        throw ContractError("random_baseline: trials must be >= 1");
    if (channels < 1)
        throw ContractError("random_baseline: channels must be >= 1");

    SplitMix64 rng(seed);
    std::vector<double> rmas, rras;
    std::size_t excluded = 0;
    Tensor noise({channels, mask.h, mask.w}, Layout::Chw);
    for (std::size_t t = 0; t < trials; ++t) {
        for (float& v : noise.data) v = static_cast<float>(rng.next_gaussian());
        PooledHeatmap heat = pool(noise, pooling);
        try {
            double m = rma(heat, mask);
            rmas.push_back(m);
            rras.push_back(rra(heat, mask));
        } catch (const UndefinedScoreError&) {
            ++excluded;
        }
    }
    if (rmas.empty())
        throw UndefinedScoreError(mask.image_id + ": every baseline trial was undefined");

    BaselineStats stats;
    stats.rma_mean = mean_of(rmas);
    stats.rma_median = median_of(rmas);
    stats.rra_mean = mean_of(rras);
    stats.rra_median = median_of(rras);
    stats.trials_used = rmas.size();
    stats.trials_excluded = excluded;
    return stats;
}

XaiScoreTable score_set(
    const std::vector<std::pair<std::string, Tensor>>& heatmaps,
    const std::map<std::string, std::map<std::string, SegmentationMask>>& masks,
    const std::vector<Pooling>& poolings, const std::vector<std::string>& lesions,
    const std::string& method) {
    for (const auto& [id, t] : heatmaps)
        if (!masks.count(id))
            throw ContractError("score_set: no masks for image id '" + id + "'");

    XaiScoreTable table;
    for (const std::string& lesion : lesions) {
        for (Pooling pooling : poolings) {
            std::vector<double> rmas, rras;
            std::size_t excluded_rma = 0;
            for (const auto& [id, relevance] : heatmaps) {
                const auto& per_image = masks.at(id);
                auto it = per_image.find(lesion);
                if (it == per_image.end())
                    throw ContractError("score_set: image '" + id + "' has no '" + lesion +
                                        "' mask");
                PooledHeatmap heat = pool(relevance, pooling);
                try {
                    rmas.push_back(rma(heat, it->second));
                } catch (const UndefinedScoreError&) {
                    ++excluded_rma;
                }
                rras.push_back(rra(heat, it->second));
            }
            auto push = [&](const std::string& metric, const std::vector<double>& scores,
                            std::size_t excluded) {
                XaiScoreRow row;
                row.lesion = lesion;
                row.method = method;
                row.pooling = pooling;
                row.metric = metric;
                row.n_used = scores.size();
                row.n_excluded = excluded;
                if (!scores.empty()) {
                    row.mean = mean_of(scores);
                    row.median = median_of(std::vector<double>(scores));
                }
                table.rows.push_back(std::move(row));
            };
            push("RMA", rmas, excluded_rma);
            push("RRA", rras, 0);
        }
    }
    return table;
}

} // namespace netlens
