#ifndef DCNN_METRICS_HPP
#define DCNN_METRICS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dcnn/errors.hpp"

// Classification metrics built on a confusion matrix: accuracy, Cohen's
// kappa, per-class precision/recall/F1 and their macro averages.

namespace dcnn {

class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t num_classes);

    void add(std::size_t truth, std::size_t predicted, std::uint64_t count = 1);

    std::size_t num_classes() const { return k_; }
    std::uint64_t at(std::size_t truth, std::size_t predicted) const;
    std::uint64_t total() const { return total_; }
    std::uint64_t row_total(std::size_t truth) const;
    std::uint64_t col_total(std::size_t predicted) const;

    // Fraction of `truth` samples predicted as `predicted`; 0 when the
    // truth row is empty.
    double rate(std::size_t truth, std::size_t predicted) const;

    double accuracy() const;

    // Cohen's kappa = (p_o - p_e) / (1 - p_e) with p_e from the row and
    // column marginals. Defined as 1 when p_e == 1 (total agreement on a
    // single class) and 0 on an empty matrix.
    double kappa() const;

    double precision(std::size_t cls) const;  // 0 when the class is never predicted
    double recall(std::size_t cls) const;     // 0 when the class never occurs
    double f1(std::size_t cls) const;
    double macro_precision() const;
    double macro_recall() const;
    double macro_f1() const;

    // Aligned text table, rows = truth, columns = predicted.
    std::string table(const std::vector<std::string>& class_names = {}) const;

private:
    std::size_t k_;
    std::vector<std::uint64_t> cells_;
    std::uint64_t total_ = 0;
};

// Builds the matrix from parallel label arrays.
ConfusionMatrix confusion_from_labels(const std::vector<std::size_t>& truth,
                                      const std::vector<std::size_t>& predicted,
                                      std::size_t num_classes);

// Rows divided by their row sums; a class with no true samples makes the
// normalization undefined and throws DataError naming it.
std::vector<std::vector<double>> normalize_rows(const ConfusionMatrix& cm,
                                                const std::vector<std::string>& class_names = {});

// Raw counts / row-normalized rates as CSV with a `truth\pred` corner
// header and one row per true class.
std::string counts_csv(const ConfusionMatrix& cm,
                       const std::vector<std::string>& class_names = {});
std::string rates_csv(const ConfusionMatrix& cm,
                      const std::vector<std::string>& class_names = {});

struct ClassReportRow {
    std::string name;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::uint64_t support = 0;  // true samples of the class
};

struct ClassificationReport {
    std::vector<ClassReportRow> per_class;
    double accuracy = 0;
    double kappa = 0;
    double mean_loss = 0;
    double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
    // Support-weighted averages; weighted recall equals accuracy.
    double weighted_precision = 0, weighted_recall = 0, weighted_f1 = 0;
    std::uint64_t total = 0;

    // One class row each plus accuracy / macro avg / weighted avg rows,
    // full precision: class,precision,recall,f1,support
    std::string csv() const;

    // Human-readable table, two decimals, with kappa and mean loss in a
    // footer below the aggregate rows.
    std::string table() const;
};

// Rates from the matrix plus the mean of `per_sample_losses` (0 when the
// loss list is empty). Requires a non-empty matrix.
ClassificationReport classification_report(const ConfusionMatrix& cm,
                                           const std::vector<double>& per_sample_losses = {},
                                           const std::vector<std::string>& class_names = {});

} // namespace dcnn

#endif
