#ifndef DCNN_COMMANDS_HPP
#define DCNN_COMMANDS_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dcnn/data.hpp"
#include "dcnn/interpret.hpp"
#include "dcnn/metrics.hpp"
#include "dcnn/network.hpp"
#include "dcnn/optim.hpp"

// The command layer behind the CLI: training with checkpoint resume,
// evaluation reports, dataset preprocessing and statistics, Grad-CAM
// and activation-map rendering, and the LR range test. Every command
// validates its inputs fully before writing anything.

namespace dcnn {

// Everything `train` and `lr-range` need. Field names double as the
// long flag / config-file key names (see snapshot()).
struct RunConfig {
    std::string data_dir;  // processed tree with train/ and valid/
    std::string run_dir;   // output directory for this run

    std::size_t image_size = 128;
    std::size_t batch_size = 128;
    int epochs = 0;  // total target; resume trains (ckpt.epoch, epochs]
    std::uint64_t seed = 0;
    std::size_t prefetch = 2;  // stream decode workers

    std::string optimizer = "adabelief";  // or "sgd"
    double lr = 1e-3;                     // base rate when CLR is off
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-14;
    double weight_decay = 0;

    std::string activation = "mish";
    double dropout = 0.3;

    bool clr = true;  // triangular cyclical learning rate
    double clr_min = 1e-4;
    double clr_max = 1e-2;
    std::int64_t clr_step = 0;  // steps per half cycle; 0 = 4 epochs' worth

    double plateau_factor = 0.1;
    int plateau_patience = 10;
    double plateau_floor = 0;
    double plateau_threshold = 1e-4;

    std::string resume;  // checkpoint path; empty = fresh start

    // Throws ConfigError naming the first bad field.
    void validate() const;

    // key=value lines, one per field, reusable as a --config file.
    std::string snapshot() const;
};

struct EpochRow {
    int epoch = 0;  // 1-based
    double lr = 0;  // rate applied at the epoch's first optimizer step
    double train_loss = 0;
    double train_acc = 0;
    double train_kappa = 0;
    double val_loss = 0;
    double val_acc = 0;
    double val_kappa = 0;
    double seconds = 0;
};

extern const char* const kLogHeader;  // epoch,lr,train_loss,...

std::string log_row(const EpochRow& row);

struct TrainResult {
    std::vector<EpochRow> rows;  // this invocation's epochs only
    std::string log_path;
    std::string best_path;
    std::string last_path;
    int best_epoch = 0;
    double best_val_loss = 0;
};

// Trains per the config and fills <run_dir>/{config.snapshot, log.csv,
// best.ckpt, last.ckpt}. best.ckpt tracks the lowest validation loss;
// last.ckpt the newest epoch. Resume restores model, optimizer state
// and epoch counter from the checkpoint (batch size may differ), drops
// any log rows beyond that epoch, and replays the surviving validation
// losses into the plateau policy so the schedule continues seamlessly.
// Fixed seed, fixed config: identical results at any prefetch depth.
// on_epoch, when set, fires after each epoch's log row is written.
TrainResult cmd_train(const RunConfig& config,
                      const std::function<void(const EpochRow&)>& on_epoch = {});

struct EvalResult {
    ClassificationReport report;
    std::string report_txt_path;
    std::string report_csv_path;
    std::string counts_csv_path;
    std::string rates_csv_path;
};

// Runs the checkpoint over <data_dir>/<split> in one unshuffled pass
// and writes the report (text + CSV) and confusion matrices (counts +
// row rates) to out_dir.
EvalResult cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
                    const std::string& split, const std::string& out_dir,
                    std::size_t batch_size = 128);

struct PreprocessResult {
    std::size_t written = 0;
    std::size_t rejected = 0;  // metadata rejects + unreadable images
    std::string rejects_path;  // empty when nothing was rejected
    // (split, class name) -> files written, for the summary printout.
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
};

// Crops, resizes and files every usable metadata row into
// <out_dir>/<split>/<ClassName>/<filename>. Bad rows and unreadable
// images are logged to <out_dir>/rejects.csv (row 0 marks a failure
// outside the metadata file, i.e. a broken image) and never abort the
// run. With balance_seed >= 0, splits are first down-sampled to each
// split's smallest class with build_balanced_splits(seed).
PreprocessResult cmd_preprocess(const std::string& metadata_csv, const std::string& images_dir,
                                const std::string& out_dir, std::size_t size = 224,
                                long long balance_seed = -1);

// Writes the dataset_stats table for the metadata file to out_csv and
// returns it.
std::string cmd_stats(const std::string& metadata_csv, const std::string& out_csv);

struct GradcamResult {
    int class_index = 0;  // requested, or argmax when the request was -1
    std::string overlay_path;
    std::string heatmap_path;
};

// Renders <out_prefix>_overlay.png and <out_prefix>_heatmap.csv for one
// image. class_index -1 targets the network's own prediction.
GradcamResult cmd_gradcam(const std::string& checkpoint_path, const std::string& image_path,
                          const std::string& out_prefix, int class_index = -1,
                          double alpha = 0.4);

struct ActivationsResult {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t channels = 0;
    std::string grid_path;
};

// Renders the layer's per-channel activation grid to out_png.
ActivationsResult cmd_activations(const std::string& checkpoint_path,
                                  const std::string& image_path, std::size_t layer_index,
                                  const std::string& out_png);

// Sweeps the learning rate geometrically from lr_low to lr_high over
// `steps` fresh-model training steps on config.data_dir's train split
// and writes the loss curve CSV to out_csv.
LrRangeResult cmd_lr_range(const RunConfig& config, double lr_low, double lr_high,
                           std::int64_t steps, const std::string& out_csv);

} // namespace dcnn

#endif
