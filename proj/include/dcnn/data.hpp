#ifndef DCNN_DATA_HPP
#define DCNN_DATA_HPP

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dcnn/image.hpp"
#include "dcnn/tensor.hpp"

// Dataset plumbing: metadata CSV ingestion, bbox-crop preprocessing,
// class-balanced split plans, per-epoch shuffled batch streaming with
// optional prefetch workers, and dataset summary statistics.

namespace dcnn {

inline constexpr std::size_t kNumClasses = 3;

// 0=Normal, 1=Pneumonia, 2=COVID-19
const std::string& class_name(std::size_t label);
int class_index(const std::string& name);  // -1 when unknown

struct SampleRecord {
    std::string filename;
    int label = 0;      // 0, 1 or 2
    std::string split;  // train, valid or test
    BBox bbox;
    std::string country;
    std::string sex;  // F, M or empty
    int age = -1;     // -1 = unknown

    bool operator==(const SampleRecord&) const = default;
};

struct RejectedRow {
    std::size_t row = 0;  // 1-based data row number (header not counted)
    std::string reason;
};

struct MetadataFile {
    std::vector<SampleRecord> records;
    std::vector<RejectedRow> rejects;

    std::string rejects_csv() const;  // header row,reason
};

// Reads the canonical schema
//   filename,class,split,xmin,ymin,xmax,ymax,country,sex,age
// Structural problems (missing file, wrong header, duplicate filename
// within a split) throw DataError; bad rows (malformed bbox, unknown
// class or split) land in `rejects` with their row numbers. Empty
// country/sex/age fields are allowed.
MetadataFile parse_metadata(const std::string& csv_path);

// Crop to the bbox, then bilinear-resize to target x target.
Image preprocess_image(const std::string& src_png, const BBox& bbox, std::size_t target = 224);

// Records of one split, balanced by seeded down-sampling to the split's
// smallest class; per_class[label] preserves the original file order.
struct BalancedSplit {
    std::array<std::vector<SampleRecord>, kNumClasses> per_class;

    std::size_t per_class_count() const { return per_class[0].size(); }
    std::vector<SampleRecord> all() const;
};

struct SplitPlan {
    BalancedSplit train;
    BalancedSplit valid;
    BalancedSplit test;

    const BalancedSplit& split(const std::string& name) const;
};

// Down-samples every class of every split (seeded, without replacement)
// to that split's smallest class count. A split with no records at all
// stays empty; a split missing only some classes is an error.
SplitPlan build_balanced_splits(const std::vector<SampleRecord>& records, std::uint64_t seed);

// ---------------------------------------------------------------------
// Batch stream

struct StreamItem {
    std::string path;  // PNG on disk
    int label = 0;
};

struct StreamOptions {
    std::size_t batch_size = 128;
    std::size_t image_size = 128;
    std::size_t channels = 3;  // gray sources are broadcast to 3 planes
    std::uint64_t seed = 0;
    std::size_t prefetch = 0;  // decode workers; 0 = decode on demand
};

struct Batch {
    TensorF images;           // (b, 3, s, s), values in [0, 1]
    std::vector<int> labels;  // length b
};

// One pass per epoch over a seeded shuffle of the items. Each epoch
// yields ceil(N/batch) batches covering every item exactly once, the
// last one possibly short. With prefetch > 0, worker threads decode
// ahead into a bounded reorder window; delivery order and content are
// bitwise identical to prefetch == 0.
class BatchStream {
public:
    BatchStream(std::vector<StreamItem> items, StreamOptions options);
    ~BatchStream();

    BatchStream(const BatchStream&) = delete;
    BatchStream& operator=(const BatchStream&) = delete;

    std::size_t size() const { return items_.size(); }
    std::size_t batches_per_epoch() const;

    // Reshuffles with the stream seed and the epoch number, then makes
    // the epoch's batches available; cancels any pending prefetch work.
    void start_epoch(std::uint64_t epoch);

    // Pops the next batch of the current epoch. Returns false once the
    // epoch is exhausted. Decoder failures surface here as DataError
    // naming the file.
    bool next(Batch& out);

private:
    struct Prefetcher;

    Batch load_batch(std::size_t batch_index) const;

    std::vector<StreamItem> items_;
    StreamOptions options_;
    std::vector<std::size_t> order_;  // current epoch's permutation
    std::size_t next_batch_ = 0;
    std::unique_ptr<Prefetcher> prefetcher_;
};

// Lists <root>/<ClassName>/*.png for all three classes, sorted by
// filename within each class. Missing class directory throws DataError.
std::vector<StreamItem> scan_class_tree(const std::string& root);

// ---------------------------------------------------------------------
// Dataset statistics
//
// Long-form CSV, header table,row,col,count,percent. Tables:
//   class_by_split  (row class name, col split)
//   class_by_country(row class name, col country or "unknown")
//   sex             (row F/M/unknown, col "all")
//   class_by_age    (row class name, col 0-20,21-40,41-60,61-80,81+,unknown)
// Percent is of the whole record count, printed with two decimals.
std::string dataset_stats(const std::vector<SampleRecord>& records);

} // namespace dcnn

#endif
