#include "netlens/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "netlens/errors.hpp"
#include "netlens/io_util.hpp"

namespace netlens {

int to_referable(int grade, const std::set<int>& healthy_grades) {
    if (grade < 0 || grade > 4)
        throw ContractError("grade " + std::to_string(grade) + " outside the ICDR scale 0..4");
    return healthy_grades.count(grade) ? 0 : 1;
}

double disease_score(const std::vector<double>& probs, const std::set<int>& healthy_grades) {
    if (probs.size() != 5)
        throw ContractError("disease_score: expected 5 class probabilities, got " +
                            std::to_string(probs.size()));
    double sum = 0.0;
    for (double p : probs) {
        if (p < -1e-9)
            throw ContractError("disease_score: negative probability " + std::to_string(p));
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw ContractError("disease_score: probabilities sum to " + std::to_string(sum) +
                            ", not a simplex");
    double score = 0.0;
    for (int g = 0; g < 5; ++g)
        if (!healthy_grades.count(g)) score += probs[static_cast<std::size_t>(g)];
    return score;
}

AucResult auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ContractError("auc: scores and labels differ in length");
    AucResult result;
    for (int l : labels) {
        if (l == 1)
            ++result.n_pos;
        else if (l == 0)
            ++result.n_neg;
        else
            throw ContractError("auc: label must be 0 or 1, got " + std::to_string(l));
    }
    if (result.n_pos == 0 || result.n_neg == 0)
        throw ContractError("auc: undefined, both classes must be present (n_pos=" +
                            std::to_string(result.n_pos) + ", n_neg=" +
                            std::to_string(result.n_neg) + ")");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midranks over tie runs, then the rank-sum statistic
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        double midrank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += midrank;
        i = j + 1;
    }
    double n_pos = static_cast<double>(result.n_pos);
    double n_neg = static_cast<double>(result.n_neg);
    double u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
    result.auc = u / (n_pos * n_neg);
    return result;
}

std::vector<PredictionRecord> read_predictions_csv(const std::filesystem::path& path,
                                                   const std::set<int>& healthy_grades) {
    std::ifstream in(path);
    if (!in)
        throw IoError(path.string() + ": cannot open predictions CSV");

    std::string line;
    if (!std::getline(in, line))
        throw FormatError(path.string() + ": empty predictions CSV");
    std::vector<std::string> header = csv_split(line);
    const std::vector<std::string> expected = {"image_id", "p0", "p1", "p2",
                                               "p3",       "p4", "grade"};
    if (header != expected)
        throw FormatError(path.string() + ": header must be '" + csv_join(expected) + "'");

    std::vector<PredictionRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> f = csv_split(line);
        if (f.size() != 7)
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": expected 7 fields, got " + std::to_string(f.size()));
        PredictionRecord rec;
        rec.image_id = f[0];
        try {
            for (int i = 0; i < 5; ++i) rec.probs.push_back(std::stod(f[static_cast<std::size_t>(i) + 1]));
            rec.grade = std::stoi(f[6]);
        } catch (const std::exception&) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": non-numeric field");
        }
        rec.disease_score = disease_score(rec.probs, healthy_grades);
        rec.label = to_referable(rec.grade, healthy_grades);
        records.push_back(std::move(rec));
    }
    if (records.empty())
        throw FormatError(path.string() + ": no prediction rows");
    return records;
}

} // namespace netlens
