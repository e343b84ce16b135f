#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "netlens/errors.hpp"
#include "netlens/prng.hpp"
#include "netlens/xai_metrics.hpp"

using namespace netlens;

namespace {

SegmentationMask make_mask(std::size_t h, std::size_t w, const std::vector<std::uint8_t>& grid,
                           const std::string& lesion = "test") {
    SegmentationMask m;
    m.image_id = "img";
    m.lesion = lesion;
    m.h = h;
    m.w = w;
    m.grid = grid;
    return m;
}

PooledHeatmap heat_of(std::size_t h, std::size_t w, std::vector<double> grid) {
    PooledHeatmap heat;
    heat.h = h;
    heat.w = w;
    heat.grid = std::move(grid);
    return heat;
}

// exhaustive pixel-loop oracles, kept deliberately naive
double rma_bruteforce(const PooledHeatmap& heat, const SegmentationMask& mask) {
    double inside = 0.0, total = 0.0;
    for (std::size_t y = 0; y < heat.h; ++y)
        for (std::size_t x = 0; x < heat.w; ++x) {
            double v = heat.grid[y * heat.w + x];
            total += v;
            if (mask.grid[y * heat.w + x]) inside += v;
        }
    return inside / total;
}

std::size_t rra_hits_bruteforce(const PooledHeatmap& heat, const SegmentationMask& mask) {
    std::size_t k = 0;
    for (auto v : mask.grid) k += v;
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < heat.grid.size(); ++i) ranked.push_back({heat.grid[i], i});
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.first > b.first; // stable keeps ascending index on ties
    });
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k; ++i)
        if (mask.grid[ranked[i].second]) ++hits;
    return hits;
}

} // namespace

TEST_CASE("pooling formulas") {
    Tensor two({2, 1, 1}, {3.0f, -5.0f});
    CHECK(pool(two, Pooling::SumPos).grid[0] == doctest::Approx(0.0)); // max(0, -2)

    Tensor sq({2, 1, 1}, {3.0f, -4.0f});
    CHECK(pool(sq, Pooling::L2NormSq).grid[0] == doctest::Approx(25.0));

    Tensor single({1, 2, 2}, {0.1f, 0.2f, 0.3f, 0.4f});
    PooledHeatmap p = pool(single, Pooling::SumPos);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(p.grid[i] == doctest::Approx(single.data[i]));
}

TEST_CASE("rma on uniform heat equals mask area fraction") {
    PooledHeatmap heat = heat_of(2, 2, {1, 1, 1, 1});
    SegmentationMask top = make_mask(2, 2, {1, 1, 0, 0});
    CHECK(rma(heat, top) == doctest::Approx(0.5));

    PooledHeatmap point = heat_of(2, 2, {0, 7, 0, 0});
    CHECK(rma(point, top) == doctest::Approx(1.0));

    PooledHeatmap zero = heat_of(2, 2, {0, 0, 0, 0});
    CHECK_THROWS_AS(rma(zero, top), UndefinedScoreError);

    PooledHeatmap wrong = heat_of(3, 3, std::vector<double>(9, 1.0));
    CHECK_THROWS_AS(rma(wrong, top), ContractError);
}

TEST_CASE("rma matches the exhaustive oracle on seeded 8x8 pairs") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        SplitMix64 rng(seed);
        PooledHeatmap heat;
        heat.h = heat.w = 8;
        heat.grid.resize(64);
        for (double& v : heat.grid) v = rng.next_double();
        std::vector<std::uint8_t> grid(64);
        bool any = false, all = true;
        for (auto& g : grid) {
            g = rng.next_double() < 0.3 ? 1 : 0;
            any |= g;
            all &= g;
        }
        if (!any) grid[0] = 1;
        if (all) grid[63] = 0;
        SegmentationMask mask = make_mask(8, 8, grid);
        CHECK(std::abs(rma(heat, mask) - rma_bruteforce(heat, mask)) <= 1e-12);
    }
}

TEST_CASE("rra selects the top-|S| pixels") {
    PooledHeatmap heat = heat_of(2, 2, {4, 3, 2, 1});
    CHECK(rra(heat, make_mask(2, 2, {1, 1, 0, 0})) == doctest::Approx(1.0));
    CHECK(rra(heat, make_mask(2, 2, {0, 0, 1, 1})) == doctest::Approx(0.0));
    CHECK_THROWS_AS(rra(heat, make_mask(2, 2, {0, 0, 0, 0})), ContractError);
}

TEST_CASE("rra tie-breaking follows ascending flat index") {
    PooledHeatmap flat = heat_of(2, 2, {5, 5, 5, 5});
    // K=2 -> top set is {0, 1} by the declared rule
    CHECK(rra(flat, make_mask(2, 2, {1, 0, 1, 0})) == doctest::Approx(0.5));
    CHECK(rra(flat, make_mask(2, 2, {1, 1, 0, 0})) == doctest::Approx(1.0));
    CHECK(rra(flat, make_mask(2, 2, {0, 0, 1, 1})) == doctest::Approx(0.0));
}

TEST_CASE("rra matches the stable-sort oracle on seeded pairs with ties") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        SplitMix64 rng(seed + 7000);
        PooledHeatmap heat;
        heat.h = heat.w = 8;
        heat.grid.resize(64);
        // coarse quantization forces plenty of ties
        for (double& v : heat.grid) v = static_cast<double>(rng.next_u64() % 5);
        std::vector<std::uint8_t> grid(64);
        bool any = false;
        for (auto& g : grid) {
            g = rng.next_double() < 0.4 ? 1 : 0;
            any |= g;
        }
        if (!any) grid[10] = 1;
        SegmentationMask mask = make_mask(8, 8, grid);
        std::size_t k = mask.area();
        double expected =
            static_cast<double>(rra_hits_bruteforce(heat, mask)) / static_cast<double>(k);
        CHECK(rra(heat, mask) == expected);
    }
}

TEST_CASE("rma is invariant under positive scaling") {
    SplitMix64 rng(55);
    PooledHeatmap heat;
    heat.h = heat.w = 6;
    heat.grid.resize(36);
    for (double& v : heat.grid) v = rng.next_double();
    SegmentationMask mask = make_mask(6, 6, std::vector<std::uint8_t>(36, 0));
    for (std::size_t i = 0; i < 12; ++i) mask.grid[i * 3] = 1;

    double base = rma(heat, mask);
    for (double c : {0.25, 3.0, 1e6}) {
        PooledHeatmap scaled = heat;
        for (double& v : scaled.grid) v *= c;
        CHECK(rma(scaled, mask) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("rra is invariant under strictly increasing transforms") {
    SplitMix64 rng(66);
    PooledHeatmap heat;
    heat.h = heat.w = 6;
    heat.grid.resize(36);
    for (double& v : heat.grid) v = rng.next_double();
    SegmentationMask mask = make_mask(6, 6, std::vector<std::uint8_t>(36, 0));
    for (std::size_t i = 0; i < 10; ++i) mask.grid[i * 2 + 1] = 1;

    double base = rra(heat, mask);
    PooledHeatmap exp_t = heat, cube_t = heat;
    for (double& v : exp_t.grid) v = std::exp(v);
    for (double& v : cube_t.grid) v = v * v * v + 2.0;
    CHECK(rra(exp_t, mask) == base);
    CHECK(rra(cube_t, mask) == base);
}

TEST_CASE("full masks force both metrics to one") {
    SplitMix64 rng(77);
    PooledHeatmap heat;
    heat.h = heat.w = 5;
    heat.grid.resize(25);
    for (double& v : heat.grid) v = rng.next_double() + 0.01;
    SegmentationMask full = make_mask(5, 5, std::vector<std::uint8_t>(25, 1));
    CHECK(rma(heat, full) == doctest::Approx(1.0));
    CHECK(rra(heat, full) == doctest::Approx(1.0));
}

TEST_CASE("random baseline is deterministic and follows the mass law") {
    SegmentationMask mask = make_mask(8, 8, std::vector<std::uint8_t>(64, 0));
    for (std::size_t i = 0; i < 16; ++i) mask.grid[i] = 1; // f = 0.25

    BaselineStats a = random_baseline(mask, Pooling::L2NormSq, 3, 50, 42);
    BaselineStats b = random_baseline(mask, Pooling::L2NormSq, 3, 50, 42);
    CHECK(a.rma_mean == b.rma_mean);
    CHECK(a.rra_median == b.rra_median);

    // E[RMA] = |S|/(H*W) for iid non-negative pooled noise
    const std::size_t trials = 200;
    SplitMix64 rng(9);
    std::vector<double> scores;
    Tensor noise({3, 8, 8});
    for (std::size_t t = 0; t < trials; ++t) {
        for (float& v : noise.data) v = static_cast<float>(rng.next_gaussian());
        scores.push_back(rma(pool(noise, Pooling::L2NormSq), mask));
    }
    double mean = mean_of(scores);
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    var /= static_cast<double>(trials - 1);
    double se = std::sqrt(var / static_cast<double>(trials));
    CHECK(std::abs(mean - 0.25) <= 3.0 * se);

    BaselineStats stats = random_baseline(mask, Pooling::L2NormSq, 3, trials, 9);
    CHECK(std::abs(stats.rma_mean - 0.25) <= 3.0 * se);
    CHECK_THROWS_AS(random_baseline(mask, Pooling::L2NormSq, 3, 0, 1), ContractError);
}

TEST_CASE("score_set aggregates per-image scores") {
    SplitMix64 rng(111);
    auto heatmap = [&](std::uint64_t seed) {
        SplitMix64 r(seed);
        Tensor t({2, 4, 4});
        for (float& v : t.data) v = static_cast<float>(r.next_uniform(-1.0, 1.0));
        return t;
    };

    std::map<std::string, std::map<std::string, SegmentationMask>> masks;
    std::vector<std::pair<std::string, Tensor>> heatmaps;
    for (int i = 0; i < 5; ++i) {
        std::string id = "img" + std::to_string(i);
        heatmaps.emplace_back(id, heatmap(static_cast<std::uint64_t>(i)));
        std::vector<std::uint8_t> grid(16, 0);
        for (std::size_t j = 0; j < 16; ++j) grid[j] = rng.next_double() < 0.4 ? 1 : 0;
        grid[static_cast<std::size_t>(i) % 16] = 1; // keep non-empty
        SegmentationMask m = make_mask(4, 4, grid, "haemorrhages");
        m.image_id = id;
        masks[id]["haemorrhages"] = m;
    }

    XaiScoreTable table = score_set(heatmaps, masks, {Pooling::L2NormSq}, {"haemorrhages"},
                                    "lrp_a1b0");
    REQUIRE(table.rows.size() == 2);

    // independent aggregation oracle
    std::vector<double> rmas, rras;
    for (const auto& [id, t] : heatmaps) {
        PooledHeatmap h = pool(t, Pooling::L2NormSq);
        rmas.push_back(rma_bruteforce(h, masks[id]["haemorrhages"]));
        std::size_t k = masks[id]["haemorrhages"].area();
        rras.push_back(static_cast<double>(rra_hits_bruteforce(h, masks[id]["haemorrhages"])) /
                       static_cast<double>(k));
    }
    CHECK(table.rows[0].metric == "RMA");
    CHECK(table.rows[0].mean == doctest::Approx(mean_of(rmas)).epsilon(1e-12));
    CHECK(table.rows[0].median == doctest::Approx(median_of(rmas)).epsilon(1e-12));
    CHECK(table.rows[1].metric == "RRA");
    CHECK(table.rows[1].mean == doctest::Approx(mean_of(rras)).epsilon(1e-12));

    // single image: mean == median == the score
    XaiScoreTable one = score_set({heatmaps[0]}, masks, {Pooling::L2NormSq},
                                  {"haemorrhages"}, "m");
    CHECK(one.rows[0].mean == one.rows[0].median);

    CHECK_THROWS_AS(score_set({{"ghost", heatmap(1)}}, masks, {Pooling::SumPos},
                              {"haemorrhages"}, "m"),
                    ContractError);
}

TEST_CASE("two scores average as expected") {
    std::vector<double> xs = {0.2, 0.4};
    CHECK(mean_of(xs) == doctest::Approx(0.3));
    CHECK(median_of(xs) == doctest::Approx(0.3));
}

TEST_CASE("mask validation accepts only 0/1 grids") {
    Tensor good({2, 2}, {0.0f, 1.0f, 1.0f, 0.0f});
    SegmentationMask m = mask_from_tensor(good, "img", "total");
    CHECK(m.area() == 2);

    Tensor bad({2, 2}, {0.0f, 0.5f, 1.0f, 0.0f});
    CHECK_THROWS_AS(mask_from_tensor(bad, "img", "total"), ContractError);

    Tensor not2d({4}, {0, 1, 0, 1});
    CHECK_THROWS_AS(mask_from_tensor(not2d, "img", "total"), ContractError);
}

TEST_CASE("combine_total is the pixelwise OR") {
    SegmentationMask a = make_mask(2, 2, {1, 0, 0, 0}, "microaneurysms");
    SegmentationMask b = make_mask(2, 2, {0, 1, 0, 0}, "hard_exudates");
    SegmentationMask total = combine_total({a, b});
    CHECK(total.grid == std::vector<std::uint8_t>{1, 1, 0, 0});
    CHECK(total.lesion == "total");
}

TEST_CASE("undefined scores are excluded from aggregates, not zero-filled") {
    // image 0 has an all-zero sum_pos heatmap (all channels negative)
    Tensor dead({2, 2, 2});
    for (float& v : dead.data) v = -1.0f;
    Tensor alive({2, 2, 2});
    for (std::size_t i = 0; i < alive.data.size(); ++i)
        alive.data[i] = static_cast<float>(i + 1);

    std::map<std::string, std::map<std::string, SegmentationMask>> masks;
    for (const std::string& id : {"a", "b"}) {
        SegmentationMask m = make_mask(2, 2, {1, 0, 0, 0}, "total");
        m.image_id = id;
        masks[id]["total"] = m;
    }
    XaiScoreTable table = score_set({{"a", dead}, {"b", alive}}, masks, {Pooling::SumPos},
                                    {"total"}, "m");
    CHECK(table.rows[0].metric == "RMA");
    CHECK(table.rows[0].n_used == 1);
    CHECK(table.rows[0].n_excluded == 1);
    CHECK(table.rows[1].metric == "RRA");
    CHECK(table.rows[1].n_used == 2);
}
