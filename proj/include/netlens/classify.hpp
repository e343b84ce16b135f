#ifndef NETLENS_CLASSIFY_HPP
#define NETLENS_CLASSIFY_HPP

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace netlens {

// ICDR grades 0..4; referable disease is the 3-4 band.
inline const std::set<int> kDefaultHealthyGrades = {0, 1, 2};

struct PredictionRecord {
    std::string image_id;
    std::vector<double> probs; // length 5, simplex
    int grade = -1;            // ICDR label
    double disease_score = 0.0;
    int label = 0; // binary referable label
};

int to_referable(int grade, const std::set<int>& healthy_grades = kDefaultHealthyGrades);

// Softmax mass on the non-healthy grades (p3 + p4 by default).
double disease_score(const std::vector<double>& probs,
                     const std::set<int>& healthy_grades = kDefaultHealthyGrades);

struct AucResult {
    double auc = 0.0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
};

// Mann-Whitney AUC via rank sums with midrank tie correction; ties between a
// positive and a negative score count 0.5.
AucResult auc(const std::vector<double>& scores, const std::vector<int>& labels);

// CSV with header image_id,p0,p1,p2,p3,p4,grade.
std::vector<PredictionRecord> read_predictions_csv(const std::filesystem::path& path,
                                                   const std::set<int>& healthy_grades =
                                                       kDefaultHealthyGrades);

} // namespace netlens

#endif
