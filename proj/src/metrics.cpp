#include "dcnn/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace dcnn {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : k_(num_classes) {
    if (k_ == 0) throw ConfigError("confusion matrix needs at least one class");
    cells_.assign(k_ * k_, 0);
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t count) {
    if (truth >= k_ || predicted >= k_)
        throw ConfigError("confusion matrix label out of range: truth " + std::to_string(truth) +
                          ", predicted " + std::to_string(predicted) + ", classes " +
                          std::to_string(k_));
    cells_[truth * k_ + predicted] += count;
    total_ += count;
}

std::uint64_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
    if (truth >= k_ || predicted >= k_) throw ConfigError("confusion matrix index out of range");
    return cells_[truth * k_ + predicted];
}

std::uint64_t ConfusionMatrix::row_total(std::size_t truth) const {
    std::uint64_t sum = 0;
    for (std::size_t j = 0; j < k_; ++j) sum += at(truth, j);
    return sum;
}

std::uint64_t ConfusionMatrix::col_total(std::size_t predicted) const {
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < k_; ++i) sum += at(i, predicted);
    return sum;
}

double ConfusionMatrix::rate(std::size_t truth, std::size_t predicted) const {
    const std::uint64_t row = row_total(truth);
    return row == 0 ? 0.0 : double(at(truth, predicted)) / double(row);
}

double ConfusionMatrix::accuracy() const {
    if (total_ == 0) return 0.0;
    std::uint64_t agree = 0;
    for (std::size_t i = 0; i < k_; ++i) agree += at(i, i);
    return double(agree) / double(total_);
}

double ConfusionMatrix::kappa() const {
    if (total_ == 0) return 0.0;
    const double n = double(total_);
    double p_o = accuracy();
    double p_e = 0;
    for (std::size_t i = 0; i < k_; ++i)
        p_e += (double(row_total(i)) / n) * (double(col_total(i)) / n);
    if (p_e >= 1.0) return 1.0;
    return (p_o - p_e) / (1.0 - p_e);
}

double ConfusionMatrix::precision(std::size_t cls) const {
    const std::uint64_t col = col_total(cls);
    return col == 0 ? 0.0 : double(at(cls, cls)) / double(col);
}

double ConfusionMatrix::recall(std::size_t cls) const {
    const std::uint64_t row = row_total(cls);
    return row == 0 ? 0.0 : double(at(cls, cls)) / double(row);
}

double ConfusionMatrix::f1(std::size_t cls) const {
    const double p = precision(cls);
    const double r = recall(cls);
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

double ConfusionMatrix::macro_precision() const {
    double sum = 0;
    for (std::size_t c = 0; c < k_; ++c) sum += precision(c);
    return sum / double(k_);
}

double ConfusionMatrix::macro_recall() const {
    double sum = 0;
    for (std::size_t c = 0; c < k_; ++c) sum += recall(c);
    return sum / double(k_);
}

double ConfusionMatrix::macro_f1() const {
    double sum = 0;
    for (std::size_t c = 0; c < k_; ++c) sum += f1(c);
    return sum / double(k_);
}

std::string ConfusionMatrix::table(const std::vector<std::string>& class_names) const {
    std::vector<std::string> names(k_);
    for (std::size_t i = 0; i < k_; ++i)
        names[i] = i < class_names.size() ? class_names[i] : "class" + std::to_string(i);

    std::size_t label_width = 10;  // "truth\\pred"
    for (const std::string& n : names) label_width = std::max(label_width, n.size());
    std::size_t cell_width = 6;
    for (std::size_t i = 0; i < k_; ++i) {
        cell_width = std::max(cell_width, names[i].size());
        for (std::size_t j = 0; j < k_; ++j)
            cell_width = std::max(cell_width, std::to_string(at(i, j)).size());
    }

    std::ostringstream out;
    out << std::left << std::setw(int(label_width)) << "truth\\pred";
    for (std::size_t j = 0; j < k_; ++j)
        out << "  " << std::right << std::setw(int(cell_width)) << names[j];
    out << '\n';
    for (std::size_t i = 0; i < k_; ++i) {
        out << std::left << std::setw(int(label_width)) << names[i];
        for (std::size_t j = 0; j < k_; ++j)
            out << "  " << std::right << std::setw(int(cell_width)) << at(i, j);
        out << '\n';
    }
    return out.str();
}

ConfusionMatrix confusion_from_labels(const std::vector<std::size_t>& truth,
                                      const std::vector<std::size_t>& predicted,
                                      std::size_t num_classes) {
    if (truth.size() != predicted.size())
        throw ConfigError("label arrays differ in length: " + std::to_string(truth.size()) +
                          " vs " + std::to_string(predicted.size()));
    ConfusionMatrix cm(num_classes);
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
    return cm;
}

namespace {

std::vector<std::string> resolve_names(std::size_t k, const std::vector<std::string>& given) {
    std::vector<std::string> names(k);
    for (std::size_t i = 0; i < k; ++i)
        names[i] = i < given.size() ? given[i] : "class" + std::to_string(i);
    return names;
}

std::string full_precision(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

} // namespace

std::vector<std::vector<double>> normalize_rows(const ConfusionMatrix& cm,
                                                const std::vector<std::string>& class_names) {
    const std::size_t k = cm.num_classes();
    const std::vector<std::string> names = resolve_names(k, class_names);
    std::vector<std::vector<double>> rows(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i) {
        const std::uint64_t row = cm.row_total(i);
        if (row == 0)
            throw DataError("cannot normalize confusion row for " + names[i] +
                            ": no true samples");
        for (std::size_t j = 0; j < k; ++j) rows[i][j] = double(cm.at(i, j)) / double(row);
    }
    return rows;
}

std::string counts_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    const std::size_t k = cm.num_classes();
    const std::vector<std::string> names = resolve_names(k, class_names);
    std::ostringstream out;
    out << "truth\\pred";
    for (std::size_t j = 0; j < k; ++j) out << ',' << names[j];
    out << '\n';
    for (std::size_t i = 0; i < k; ++i) {
        out << names[i];
        for (std::size_t j = 0; j < k; ++j) out << ',' << cm.at(i, j);
        out << '\n';
    }
    return out.str();
}

std::string rates_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    const std::size_t k = cm.num_classes();
    const std::vector<std::string> names = resolve_names(k, class_names);
    const std::vector<std::vector<double>> rows = normalize_rows(cm, class_names);
    std::ostringstream out;
    out << "truth\\pred";
    for (std::size_t j = 0; j < k; ++j) out << ',' << names[j];
    out << '\n';
    for (std::size_t i = 0; i < k; ++i) {
        out << names[i];
        for (std::size_t j = 0; j < k; ++j) out << ',' << full_precision(rows[i][j]);
        out << '\n';
    }
    return out.str();
}

ClassificationReport classification_report(const ConfusionMatrix& cm,
                                           const std::vector<double>& per_sample_losses,
                                           const std::vector<std::string>& class_names) {
    if (cm.total() == 0) throw ConfigError("classification report needs a non-empty matrix");
    const std::size_t k = cm.num_classes();
    const std::vector<std::string> names = resolve_names(k, class_names);

    ClassificationReport rep;
    rep.total = cm.total();
    rep.accuracy = cm.accuracy();
    rep.kappa = cm.kappa();
    rep.macro_precision = cm.macro_precision();
    rep.macro_recall = cm.macro_recall();
    rep.macro_f1 = cm.macro_f1();
    for (std::size_t c = 0; c < k; ++c) {
        const ClassReportRow row{names[c], cm.precision(c), cm.recall(c), cm.f1(c),
                                 cm.row_total(c)};
        rep.weighted_precision += row.precision * double(row.support);
        rep.weighted_recall += row.recall * double(row.support);
        rep.weighted_f1 += row.f1 * double(row.support);
        rep.per_class.push_back(row);
    }
    rep.weighted_precision /= double(rep.total);
    rep.weighted_recall /= double(rep.total);
    rep.weighted_f1 /= double(rep.total);
    if (!per_sample_losses.empty()) {
        double sum = 0;
        for (double l : per_sample_losses) sum += l;
        rep.mean_loss = sum / double(per_sample_losses.size());
    }
    return rep;
}

std::string ClassificationReport::csv() const {
    std::ostringstream out;
    out << "class,precision,recall,f1,support\n";
    for (const ClassReportRow& row : per_class)
        out << row.name << ',' << full_precision(row.precision) << ','
            << full_precision(row.recall) << ',' << full_precision(row.f1) << ',' << row.support
            << '\n';
    out << "accuracy,,," << full_precision(accuracy) << ',' << total << '\n';
    out << "macro avg," << full_precision(macro_precision) << ',' << full_precision(macro_recall)
        << ',' << full_precision(macro_f1) << ',' << total << '\n';
    out << "weighted avg," << full_precision(weighted_precision) << ','
        << full_precision(weighted_recall) << ',' << full_precision(weighted_f1) << ',' << total
        << '\n';
    return out.str();
}

std::string ClassificationReport::table() const {
    std::size_t label_width = 12;  // "weighted avg"
    for (const ClassReportRow& row : per_class) label_width = std::max(label_width, row.name.size());

    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    auto label = [&](const std::string& name) -> std::ostringstream& {
        out << std::right << std::setw(int(label_width)) << name;
        return out;
    };
    label("") << std::setw(11) << "precision" << std::setw(9) << "recall" << std::setw(10)
              << "f1-score" << std::setw(10) << "support" << '\n';
    for (const ClassReportRow& row : per_class)
        label(row.name) << std::setw(11) << row.precision << std::setw(9) << row.recall
                        << std::setw(10) << row.f1 << std::setw(10) << row.support << '\n';
    out << '\n';
    label("accuracy") << std::setw(30) << accuracy << std::setw(10) << total << '\n';
    label("macro avg") << std::setw(11) << macro_precision << std::setw(9) << macro_recall
                       << std::setw(10) << macro_f1 << std::setw(10) << total << '\n';
    label("weighted avg") << std::setw(11) << weighted_precision << std::setw(9) << weighted_recall
                          << std::setw(10) << weighted_f1 << std::setw(10) << total << '\n';
    out << '\n';
    out << "cohen kappa: " << kappa << '\n';
    out << "mean loss:   " << std::setprecision(4) << mean_loss << '\n';
    return out.str();
}

} // namespace dcnn
