#include "dcnn/data.hpp"

#include <algorithm>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace dcnn {

namespace fs = std::filesystem;

const std::string& class_name(std::size_t label) {
    static const std::string names[kNumClasses] = {"Normal", "Pneumonia", "COVID-19"};
    if (label >= kNumClasses) throw ConfigError("class label out of range");
    return names[label];
}

int class_index(const std::string& name) {
    for (std::size_t i = 0; i < kNumClasses; ++i)
        if (class_name(i) == name) return int(i);
    return -1;
}

// ---------------------------------------------------------------------
// Metadata

namespace {

constexpr const char* kHeader = "filename,class,split,xmin,ymin,xmax,ymax,country,sex,age";

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string trimmed(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

bool parse_long(const std::string& s, long& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stol(s, &pos);
    } catch (const std::exception&) {
        return false;
    }
    return pos == s.size();
}

} // namespace

std::string MetadataFile::rejects_csv() const {
    std::ostringstream out;
    out << "row,reason\n";
    for (const RejectedRow& r : rejects) out << r.row << ',' << r.reason << '\n';
    return out.str();
}

MetadataFile parse_metadata(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw DataError("cannot open metadata file: " + csv_path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("metadata file is empty: " + csv_path);

    const std::vector<std::string> want = split_csv_row(kHeader);
    const std::vector<std::string> got = split_csv_row(line);
    for (const std::string& col : want)
        if (std::find(got.begin(), got.end(), col) == got.end())
            throw DataError("metadata header is missing required column '" + col +
                            "' (expected '" + kHeader + "')");
    if (got != want)
        throw DataError("metadata header must be exactly '" + std::string(kHeader) + "', got '" +
                        line + "'");

    MetadataFile result;
    std::set<std::pair<std::string, std::string>> seen;  // (split, filename)
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trimmed(line).empty()) continue;
        const std::vector<std::string> f = split_csv_row(line);
        if (f.size() != want.size()) {
            result.rejects.push_back({row, "expected " + std::to_string(want.size()) +
                                               " fields but found " + std::to_string(f.size())});
            continue;
        }
        SampleRecord rec;
        rec.filename = trimmed(f[0]);
        const std::string cls = trimmed(f[1]);
        rec.split = trimmed(f[2]);
        rec.country = trimmed(f[7]);
        rec.sex = trimmed(f[8]);

        if (rec.filename.empty()) {
            result.rejects.push_back({row, "empty filename"});
            continue;
        }
        if (cls != "0" && cls != "1" && cls != "2") {
            result.rejects.push_back({row, "unknown class '" + cls + "'"});
            continue;
        }
        rec.label = cls[0] - '0';
        if (rec.split != "train" && rec.split != "valid" && rec.split != "test") {
            result.rejects.push_back({row, "unknown split '" + rec.split + "'"});
            continue;
        }
        long xmin, ymin, xmax, ymax;
        if (!parse_long(trimmed(f[3]), xmin) || !parse_long(trimmed(f[4]), ymin) ||
            !parse_long(trimmed(f[5]), xmax) || !parse_long(trimmed(f[6]), ymax)) {
            result.rejects.push_back({row, "unparseable bbox"});
            continue;
        }
        rec.bbox = {xmin, ymin, xmax, ymax};
        if (xmin < 0 || ymin < 0 || xmax <= xmin || ymax <= ymin) {
            result.rejects.push_back(
                {row, "bbox violates 0 <= min < max (" + std::to_string(xmin) + "," +
                          std::to_string(ymin) + "," + std::to_string(xmax) + "," +
                          std::to_string(ymax) + ")"});
            continue;
        }
        const std::string age = trimmed(f[9]);
        long parsed_age;
        rec.age = (parse_long(age, parsed_age) && parsed_age >= 0) ? int(parsed_age) : -1;

        if (!seen.insert({rec.split, rec.filename}).second)
            throw DataError("duplicate filename '" + rec.filename + "' in split '" + rec.split +
                            "' (metadata row " + std::to_string(row) + ")");
        result.records.push_back(std::move(rec));
    }
    return result;
}

Image preprocess_image(const std::string& src_png, const BBox& bbox, std::size_t target) {
    Image img = read_png(src_png);
    return resize_bilinear(crop(img, bbox), target, target);
}

// ---------------------------------------------------------------------
// Balanced splits

std::vector<SampleRecord> BalancedSplit::all() const {
    std::vector<SampleRecord> out;
    for (const auto& cls : per_class) out.insert(out.end(), cls.begin(), cls.end());
    return out;
}

const BalancedSplit& SplitPlan::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "valid") return valid;
    if (name == "test") return test;
    throw ConfigError("unknown split '" + name + "' (train, valid or test)");
}

SplitPlan build_balanced_splits(const std::vector<SampleRecord>& records, std::uint64_t seed) {
    SplitPlan plan;
    const std::string split_names[3] = {"train", "valid", "test"};
    BalancedSplit* splits[3] = {&plan.train, &plan.valid, &plan.test};
    SeededRng base(seed);

    for (int s = 0; s < 3; ++s) {
        std::array<std::vector<SampleRecord>, kNumClasses> pool;
        for (const SampleRecord& rec : records)
            if (rec.split == split_names[s]) pool[std::size_t(rec.label)].push_back(rec);

        const bool any = std::any_of(pool.begin(), pool.end(),
                                     [](const auto& v) { return !v.empty(); });
        if (!any) continue;  // split absent from this dataset

        std::size_t smallest = std::size_t(-1);
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            if (pool[c].empty())
                throw DataError("split '" + split_names[s] + "' has no records of class " +
                                class_name(c));
            smallest = std::min(smallest, pool[c].size());
        }

        for (std::size_t c = 0; c < kNumClasses; ++c) {
            // Seeded sample without replacement, emitted in file order.
            std::vector<std::size_t> idx(pool[c].size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            SeededRng rng = base.derive(std::uint64_t(s) * kNumClasses + c);
            rng.shuffle(idx);
            idx.resize(smallest);
            std::sort(idx.begin(), idx.end());
            for (std::size_t i : idx) splits[s]->per_class[c].push_back(pool[c][i]);
        }
    }
    return plan;
}

// ---------------------------------------------------------------------
// Batch stream

// Bounded reorder window: workers claim batch indices, decode out of
// order, and park results in `done`; the consumer drains strictly by
// index. Workers stall while their claim is more than `window` batches
// ahead of the consumer, which bounds memory.
struct BatchStream::Prefetcher {
    const BatchStream& stream;
    std::size_t total;
    std::size_t window;

    std::mutex mu;
    std::condition_variable produced;
    std::condition_variable consumed;
    std::map<std::size_t, Batch> done;
    std::map<std::size_t, std::string> failed;  // batch index -> error
    std::size_t next_claim = 0;
    std::size_t next_read = 0;
    bool stopping = false;
    std::vector<std::thread> workers;

    Prefetcher(const BatchStream& s, std::size_t total_batches, std::size_t depth)
        : stream(s), total(total_batches), window(depth) {
        const std::size_t n = std::min(depth, total_batches);
        workers.reserve(n);
        for (std::size_t i = 0; i < n; ++i) workers.emplace_back([this] { run(); });
    }

    ~Prefetcher() {
        {
            std::lock_guard<std::mutex> lock(mu);
            stopping = true;
        }
        consumed.notify_all();
        produced.notify_all();
        for (std::thread& t : workers) t.join();
    }

    void run() {
        for (;;) {
            std::size_t k;
            {
                std::unique_lock<std::mutex> lock(mu);
                consumed.wait(lock, [&] { return stopping || next_claim < next_read + window; });
                if (stopping || next_claim >= total) return;
                k = next_claim++;
            }
            try {
                Batch b = stream.load_batch(k);
                std::lock_guard<std::mutex> lock(mu);
                done.emplace(k, std::move(b));
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu);
                failed.emplace(k, e.what());
            }
            produced.notify_all();
        }
    }

    bool pop(Batch& out) {
        std::unique_lock<std::mutex> lock(mu);
        if (next_read >= total) return false;
        produced.wait(lock, [&] {
            return done.count(next_read) > 0 || failed.count(next_read) > 0;
        });
        auto bad = failed.find(next_read);
        if (bad != failed.end()) throw DataError(bad->second);
        auto it = done.find(next_read);
        out = std::move(it->second);
        done.erase(it);
        ++next_read;
        consumed.notify_all();
        return true;
    }
};

BatchStream::BatchStream(std::vector<StreamItem> items, StreamOptions options)
    : items_(std::move(items)), options_(options) {
    if (options_.batch_size == 0) throw ConfigError("batch size must be > 0");
    if (options_.image_size == 0) throw ConfigError("image size must be > 0");
    if (options_.channels != 3)
        throw ConfigError("channel count must be 3 (gray images are broadcast)");
    if (items_.empty()) throw DataError("batch stream has no items");
    for (const StreamItem& item : items_)
        if (item.label < 0 || item.label >= int(kNumClasses))
            throw ConfigError("stream item '" + item.path + "' has label " +
                              std::to_string(item.label));
    // Usable without start_epoch: one unshuffled pass, no prefetch.
    order_.resize(items_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
}

BatchStream::~BatchStream() = default;

std::size_t BatchStream::batches_per_epoch() const {
    return (items_.size() + options_.batch_size - 1) / options_.batch_size;
}

void BatchStream::start_epoch(std::uint64_t epoch) {
    prefetcher_.reset();
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    SeededRng rng = SeededRng(options_.seed).derive(epoch);
    rng.shuffle(order_);
    next_batch_ = 0;
    if (options_.prefetch > 0)
        prefetcher_ = std::make_unique<Prefetcher>(*this, batches_per_epoch(), options_.prefetch);
}

Batch BatchStream::load_batch(std::size_t batch_index) const {
    const std::size_t begin = batch_index * options_.batch_size;
    const std::size_t end = std::min(begin + options_.batch_size, items_.size());
    const std::size_t s = options_.image_size;

    Batch batch;
    batch.images = TensorF(Shape4{end - begin, 3, s, s});
    batch.labels.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        const StreamItem& item = items_[order_[i]];
        TensorF one;
        try {
            one = image_to_tensor(resize_bilinear(read_png(item.path), s, s));
        } catch (const std::exception& e) {
            throw DataError("failed to load '" + item.path + "': " + e.what());
        }
        std::copy(one.data(), one.data() + one.size(),
                  batch.images.data() + (i - begin) * 3 * s * s);
        batch.labels[i - begin] = item.label;
    }
    return batch;
}

bool BatchStream::next(Batch& out) {
    if (prefetcher_) return prefetcher_->pop(out);
    if (next_batch_ >= batches_per_epoch()) return false;
    out = load_batch(next_batch_++);
    return true;
}

std::vector<StreamItem> scan_class_tree(const std::string& root) {
    std::vector<StreamItem> items;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const fs::path dir = fs::path(root) / class_name(c);
        if (!fs::is_directory(dir))
            throw DataError("missing class directory: " + dir.string());
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().extension() == ".png")
                files.push_back(entry.path().string());
        std::sort(files.begin(), files.end());
        for (std::string& f : files) items.push_back({std::move(f), int(c)});
    }
    if (items.empty()) throw DataError("no PNG files under " + root);
    return items;
}

// ---------------------------------------------------------------------
// Statistics

namespace {

std::string age_bucket(int age) {
    if (age < 0) return "unknown";
    if (age <= 20) return "0-20";
    if (age <= 40) return "21-40";
    if (age <= 60) return "41-60";
    if (age <= 80) return "61-80";
    return "81+";
}

std::string percent(std::size_t count, std::size_t total) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", total == 0 ? 0.0 : 100.0 * double(count) / double(total));
    return buf;
}

} // namespace

std::string dataset_stats(const std::vector<SampleRecord>& records) {
    const std::size_t total = records.size();
    std::ostringstream out;
    out << "table,row,col,count,percent\n";

    auto emit = [&](const std::string& table,
                    const std::vector<std::pair<std::string, std::string>>& keys_in_order,
                    const std::map<std::pair<std::string, std::string>, std::size_t>& counts) {
        for (const auto& key : keys_in_order) {
            auto it = counts.find(key);
            const std::size_t n = it == counts.end() ? 0 : it->second;
            out << table << ',' << key.first << ',' << key.second << ',' << n << ','
                << percent(n, total) << '\n';
        }
    };

    const std::string splits[] = {"train", "valid", "test"};

    std::map<std::pair<std::string, std::string>, std::size_t> by_split;
    std::map<std::pair<std::string, std::string>, std::size_t> by_country;
    std::set<std::string> countries;
    std::map<std::pair<std::string, std::string>, std::size_t> by_sex;
    std::map<std::pair<std::string, std::string>, std::size_t> by_age;
    for (const SampleRecord& r : records) {
        const std::string cls = class_name(std::size_t(r.label));
        ++by_split[{cls, r.split}];
        const std::string country = r.country.empty() ? "unknown" : r.country;
        countries.insert(country);
        ++by_country[{cls, country}];
        const std::string sex = r.sex.empty() ? "unknown" : r.sex;
        ++by_sex[{sex, "all"}];
        ++by_age[{cls, age_bucket(r.age)}];
    }

    std::vector<std::pair<std::string, std::string>> keys;
    for (std::size_t c = 0; c < kNumClasses; ++c)
        for (const std::string& s : splits) keys.push_back({class_name(c), s});
    emit("class_by_split", keys, by_split);

    keys.clear();
    for (std::size_t c = 0; c < kNumClasses; ++c)
        for (const std::string& country : countries) keys.push_back({class_name(c), country});
    emit("class_by_country", keys, by_country);

    keys = {{"F", "all"}, {"M", "all"}, {"unknown", "all"}};
    emit("sex", keys, by_sex);

    keys.clear();
    for (std::size_t c = 0; c < kNumClasses; ++c)
        for (const char* bucket : {"0-20", "21-40", "41-60", "61-80", "81+", "unknown"})
            keys.push_back({class_name(c), bucket});
    emit("class_by_age", keys, by_age);

    return out.str();
}

} // namespace dcnn
