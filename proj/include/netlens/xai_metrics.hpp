#ifndef NETLENS_XAI_METRICS_HPP
#define NETLENS_XAI_METRICS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "netlens/tensor.hpp"

namespace netlens {

inline const std::vector<std::string> kLesionKinds = {"microaneurysms", "haemorrhages",
                                                      "hard_exudates", "total"};

struct SegmentationMask {
    std::string image_id;
    std::string lesion;
    std::size_t h = 0, w = 0;
    std::vector<std::uint8_t> grid; // row-major 0/1

    std::size_t area() const;
};

enum class Pooling { SumPos, L2NormSq };

std::string pooling_name(Pooling p);
Pooling pooling_from_name(const std::string& name);

struct PooledHeatmap {
    std::size_t h = 0, w = 0;
    std::vector<double> grid; // non-negative
    Pooling pooling = Pooling::SumPos;
};

struct XaiScoreRow {
    std::string lesion;
    std::string method;
    Pooling pooling = Pooling::SumPos;
    std::string metric; // RMA | RRA
    double mean = 0.0;
    double median = 0.0;
    std::size_t n_used = 0;
    std::size_t n_excluded = 0;
};

struct XaiScoreTable {
    std::vector<XaiScoreRow> rows;
};

// Validates a 0/1 float grid loaded from NPY.
SegmentationMask mask_from_tensor(const Tensor& t, const std::string& image_id,
                                  const std::string& lesion);

// Pixelwise OR of the lesion masks present for one image.
SegmentationMask combine_total(const std::vector<SegmentationMask>& lesions);

// sum_pos: max(0, sum_c R_c); l2_norm_sq: sum_c R_c^2. Input is (C,H,W).
PooledHeatmap pool(const Tensor& relevance_chw, Pooling mode);

// Relevance mass accuracy: fraction of total pooled relevance inside the mask.
double rma(const PooledHeatmap& heat, const SegmentationMask& mask);

// Relevance rank accuracy: fraction of the top-|S| pixels (descending value,
// ties by ascending flat index) that fall inside the mask.
double rra(const PooledHeatmap& heat, const SegmentationMask& mask);

struct BaselineStats {
    double rma_mean = 0.0, rma_median = 0.0;
    double rra_mean = 0.0, rra_median = 0.0;
    std::size_t trials_used = 0;
    std::size_t trials_excluded = 0;
};

// Gaussian-heatmap control: channel-resolved standard-normal noise pooled and
// scored per trial.
BaselineStats random_baseline(const SegmentationMask& mask, Pooling pooling,
                              std::size_t channels, std::size_t trials, std::uint64_t seed);

double mean_of(const std::vector<double>& xs);
double median_of(std::vector<double> xs);

// Aggregates per-image RMA/RRA into Table-shaped rows for each requested
// (lesion, pooling) cell. Undefined scores are excluded and counted.
XaiScoreTable score_set(const std::vector<std::pair<std::string, Tensor>>& heatmaps,
                        const std::map<std::string, std::map<std::string, SegmentationMask>>& masks,
                        const std::vector<Pooling>& poolings,
                        const std::vector<std::string>& lesions, const std::string& method);

} // namespace netlens

#endif
