#include "dcnn/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace fs = std::filesystem;

namespace dcnn {
namespace {

// Model rng tags start far above any epoch number so they never collide
// with the batch stream's derive(epoch) streams on the same seed.
constexpr std::uint64_t kEpochRngBase = 0x100000000ull;

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out.flush()) throw DataError("cannot write " + path);
}

void ensure_parent_dir(const std::string& path) {
    const fs::path dir = fs::path(path).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
}

std::vector<std::string> class_names_vec() {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < kNumClasses; ++c) names.push_back(class_name(c));
    return names;
}

NetworkSpec spec_for(const RunConfig& cfg) {
    return NetworkSpec::reference(cfg.image_size, parse_activation(cfg.activation), cfg.dropout);
}

std::size_t argmax_row(const TensorF& probs, std::size_t sample) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.shape().c; ++c)
        if (probs.at(sample, c, 0, 0) > probs.at(sample, best, 0, 0)) best = c;
    return best;
}

struct SplitEval {
    std::vector<std::size_t> truth;
    std::vector<std::size_t> pred;
    std::vector<double> losses;  // per-sample -ln p(true class)
};

// The stream emits [0,1] pixels while the model family opens with a
// rescale(1/255) layer, so the commands feed models raw 0..255 values
// and let the network do the one normalization itself. Without this the
// batch-norm moving variances start six orders of magnitude above the
// real activation spread and inference stays uncalibrated for hundreds
// of epochs.
void to_pixel_range(TensorF& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] *= 255.0f;
}

// One unshuffled inference pass over the items.
SplitEval run_inference(NetworkF& net, const std::vector<StreamItem>& items,
                        std::size_t batch_size) {
    StreamOptions so;
    so.batch_size = batch_size;
    so.image_size = net.spec.in_size;
    BatchStream stream(items, so);

    const Mode saved = net.mode;
    net.mode = Mode::inference;
    SplitEval ev;
    try {
        Batch batch;
        while (stream.next(batch)) {
            to_pixel_range(batch.images);
            const ForwardResult<float> fwd = forward(net, batch.images);
            const SoftmaxXentResult<float> sm = softmax_cross_entropy(fwd.logits, batch.labels);
            for (std::size_t i = 0; i < batch.images.shape().n; ++i) {
                ev.truth.push_back(std::size_t(batch.labels[i]));
                ev.pred.push_back(argmax_row(sm.probs, i));
                const double p = std::max(
                    double(sm.probs.at(i, std::size_t(batch.labels[i]), 0, 0)), 1e-300);
                ev.losses.push_back(-std::log(p));
            }
        }
    } catch (...) {
        net.mode = saved;
        throw;
    }
    net.mode = saved;
    return ev;
}

// Log rows surviving a resume, plus their validation losses for the
// plateau replay.
struct LogState {
    std::vector<std::string> rows;
    std::vector<int> epochs;
    std::vector<double> val_losses;
};

LogState load_log(const std::string& path, int keep_up_to) {
    LogState state;
    std::ifstream in(path);
    if (!in) return state;
    std::string line;
    if (!std::getline(in, line)) return state;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream row(line);
        for (std::string f; std::getline(row, f, ',');) fields.push_back(f);
        if (fields.size() != 9) throw DataError("malformed row in " + path + ": " + line);
        int epoch = 0;
        double val_loss = 0;
        try {
            epoch = std::stoi(fields[0]);
            val_loss = std::stod(fields[5]);
        } catch (const std::exception&) {
            throw DataError("malformed row in " + path + ": " + line);
        }
        if (epoch > keep_up_to) continue;  // stale rows from a later run
        state.rows.push_back(line);
        state.epochs.push_back(epoch);
        state.val_losses.push_back(val_loss);
    }
    return state;
}

Checkpoint load_for_inference(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    const std::vector<Shape4> shapes = ckpt.net.spec.output_shapes(1);
    if (shapes.empty() || shapes.back().c != kNumClasses)
        throw ConfigError("checkpoint emits " + std::to_string(shapes.back().c) +
                          " classes, expected " + std::to_string(kNumClasses));
    return ckpt;
}

TensorF load_model_input(const NetworkF& net, const std::string& image_path, Image* resized_out) {
    const std::size_t s = net.spec.in_size;
    Image resized = resize_bilinear(read_png(image_path), s, s);
    TensorF input = image_to_tensor(resized);
    to_pixel_range(input);
    if (resized_out) *resized_out = std::move(resized);
    return input;
}

} // namespace

void RunConfig::validate() const {
    if (data_dir.empty()) throw ConfigError("data directory must be set");
    if (run_dir.empty()) throw ConfigError("run directory must be set");
    if (image_size < 64) throw ConfigError("image-size must be >= 64");
    if (batch_size == 0) throw ConfigError("batch must be > 0");
    if (epochs <= 0) throw ConfigError("epochs must be > 0");
    if (optimizer != "adabelief" && optimizer != "sgd")
        throw ConfigError("optimizer must be adabelief or sgd, got '" + optimizer + "'");
    if (lr <= 0) throw ConfigError("lr must be > 0");
    if (beta1 < 0 || beta1 >= 1) throw ConfigError("beta1 must be in [0, 1)");
    if (beta2 < 0 || beta2 >= 1) throw ConfigError("beta2 must be in [0, 1)");
    if (epsilon <= 0) throw ConfigError("epsilon must be > 0");
    if (weight_decay < 0) throw ConfigError("weight-decay must be >= 0");
    parse_activation(activation);
    if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must be in [0, 1)");
    if (clr) {
        if (clr_min <= 0) throw ConfigError("clr-min must be > 0");
        if (clr_max < clr_min) throw ConfigError("clr-max must be >= clr-min");
        if (clr_step < 0) throw ConfigError("clr-step must be >= 0 (0 picks 4 epochs)");
    }
    if (plateau_factor <= 0 || plateau_factor > 1)
        throw ConfigError("plateau-factor must be in (0, 1]");
    if (plateau_patience < 1) throw ConfigError("plateau-patience must be >= 1");
    if (plateau_floor < 0) throw ConfigError("plateau-floor must be >= 0");
    if (plateau_threshold < 0) throw ConfigError("plateau-threshold must be >= 0");
}

std::string RunConfig::snapshot() const {
    std::ostringstream out;
    out.precision(17);
    out << "data=" << data_dir << '\n'
        << "run=" << run_dir << '\n'
        << "image-size=" << image_size << '\n'
        << "batch=" << batch_size << '\n'
        << "epochs=" << epochs << '\n'
        << "seed=" << seed << '\n'
        << "prefetch=" << prefetch << '\n'
        << "optimizer=" << optimizer << '\n'
        << "lr=" << lr << '\n'
        << "beta1=" << beta1 << '\n'
        << "beta2=" << beta2 << '\n'
        << "epsilon=" << epsilon << '\n'
        << "weight-decay=" << weight_decay << '\n'
        << "activation=" << activation << '\n'
        << "dropout=" << dropout << '\n'
        << "clr=" << (clr ? "true" : "false") << '\n'
        << "clr-min=" << clr_min << '\n'
        << "clr-max=" << clr_max << '\n'
        << "clr-step=" << clr_step << '\n'
        << "plateau-factor=" << plateau_factor << '\n'
        << "plateau-patience=" << plateau_patience << '\n'
        << "plateau-floor=" << plateau_floor << '\n'
        << "plateau-threshold=" << plateau_threshold << '\n';
    if (!resume.empty()) out << "resume=" << resume << '\n';
    return out.str();
}

const char* const kLogHeader =
    "epoch,lr,train_loss,train_acc,train_kappa,val_loss,val_acc,val_kappa,seconds";

std::string log_row(const EpochRow& r) {
    std::ostringstream out;
    out.precision(10);
    out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.train_acc << ','
        << r.train_kappa << ',' << r.val_loss << ',' << r.val_acc << ',' << r.val_kappa << ','
        << std::fixed << std::setprecision(3) << r.seconds;
    return out.str();
}

TrainResult cmd_train(const RunConfig& cfg, const std::function<void(const EpochRow&)>& on_epoch) {
    cfg.validate();

    // Everything fallible happens before the run directory is touched.
    const std::vector<StreamItem> train_items =
        scan_class_tree((fs::path(cfg.data_dir) / "train").string());
    const std::vector<StreamItem> valid_items =
        scan_class_tree((fs::path(cfg.data_dir) / "valid").string());

    NetworkF net;
    AdaBelief<float> opt(AdaBeliefConfig<float>{float(cfg.lr), float(cfg.beta1), float(cfg.beta2),
                                                float(cfg.epsilon), float(cfg.weight_decay)});
    std::int64_t sgd_steps = 0;
    int start_epoch = 0;

    if (!cfg.resume.empty()) {
        Checkpoint ckpt = load_checkpoint(cfg.resume);
        if (ckpt.net.spec.in_size != cfg.image_size)
            throw ConfigError("image-size " + std::to_string(cfg.image_size) +
                              " does not match the checkpoint's " +
                              std::to_string(ckpt.net.spec.in_size));
        if (ckpt.optim.kind != cfg.optimizer)
            throw ConfigError("optimizer '" + cfg.optimizer + "' does not match the checkpoint's '" +
                              ckpt.optim.kind + "'");
        net = std::move(ckpt.net);
        if (cfg.optimizer == "adabelief") opt = ckpt.optim.restore();
        sgd_steps = ckpt.optim.step;
        start_epoch = ckpt.epoch;
    } else {
        SeededRng init_rng(cfg.seed);
        net = build_network<float>(spec_for(cfg), init_rng);
    }
    if (start_epoch >= cfg.epochs)
        throw ConfigError("epochs (" + std::to_string(cfg.epochs) +
                          ") must exceed the resume checkpoint's epoch (" +
                          std::to_string(start_epoch) + ")");

    fs::create_directories(cfg.run_dir);
    TrainResult result;
    result.log_path = (fs::path(cfg.run_dir) / "log.csv").string();
    result.best_path = (fs::path(cfg.run_dir) / "best.ckpt").string();
    result.last_path = (fs::path(cfg.run_dir) / "last.ckpt").string();
    write_text((fs::path(cfg.run_dir) / "config.snapshot").string(), cfg.snapshot());

    // A fresh run starts a fresh log; a resume keeps rows up to the
    // checkpoint epoch and drops anything later, keeping epochs monotone.
    LogState history;
    if (!cfg.resume.empty()) history = load_log(result.log_path, start_epoch);
    {
        std::ostringstream out;
        out << kLogHeader << '\n';
        for (const std::string& row : history.rows) out << row << '\n';
        write_text(result.log_path, out.str());
    }

    PlateauScheduler plateau(
        {cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_floor, cfg.plateau_threshold});
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    for (std::size_t i = 0; i < history.val_losses.size(); ++i) {
        plateau.observe(history.val_losses[i]);
        if (history.val_losses[i] < best_val) {
            best_val = history.val_losses[i];
            best_epoch = history.epochs[i];
        }
    }

    StreamOptions so;
    so.batch_size = cfg.batch_size;
    so.image_size = cfg.image_size;
    so.seed = cfg.seed;
    so.prefetch = cfg.prefetch;
    BatchStream train_stream(train_items, so);

    const ClrSchedule clr{cfg.clr_min, cfg.clr_max,
                          cfg.clr_step > 0 ? cfg.clr_step
                                           : std::int64_t(4 * train_stream.batches_per_epoch())};
    const auto opt_steps = [&] {
        return cfg.optimizer == "adabelief" ? opt.step_count() : sgd_steps;
    };
    const auto lr_now = [&] {
        const double base = cfg.clr ? clr_lr(clr, opt_steps()) : cfg.lr;
        return std::max(base * plateau.scale(), cfg.plateau_floor);
    };

    net.mode = Mode::training;
    std::ofstream log(result.log_path, std::ios::app);
    for (int epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        train_stream.start_epoch(std::uint64_t(epoch));
        SeededRng epoch_rng = SeededRng(cfg.seed).derive(kEpochRngBase + std::uint64_t(epoch));

        double first_lr = lr_now();
        double loss_sum = 0;
        std::size_t seen = 0;
        std::vector<std::size_t> truth, pred;
        Batch batch;
        bool first_step = true;
        while (train_stream.next(batch)) {
            const double lr = lr_now();
            if (first_step) {
                first_lr = lr;
                first_step = false;
            }
            to_pixel_range(batch.images);
            BackwardResult<float> back = backward(net, batch.images, batch.labels, epoch_rng);
            const std::vector<ParamView<float>> views = param_views(net, back);
            if (cfg.optimizer == "adabelief") {
                opt.step(views, float(lr));
            } else {
                sgd_step(views, float(lr));
                ++sgd_steps;
            }
            const std::size_t n = batch.images.shape().n;
            loss_sum += back.loss * double(n);
            seen += n;
            for (std::size_t i = 0; i < n; ++i) {
                truth.push_back(std::size_t(batch.labels[i]));
                pred.push_back(argmax_row(back.probs, i));
            }
        }
        const ConfusionMatrix train_cm = confusion_from_labels(truth, pred, kNumClasses);

        const SplitEval ev = run_inference(net, valid_items, cfg.batch_size);
        const ConfusionMatrix val_cm = confusion_from_labels(ev.truth, ev.pred, kNumClasses);
        double val_loss = 0;
        for (double l : ev.losses) val_loss += l;
        val_loss /= double(ev.losses.size());

        EpochRow row;
        row.epoch = epoch;
        row.lr = first_lr;
        row.train_loss = loss_sum / double(seen);
        row.train_acc = train_cm.accuracy();
        row.train_kappa = train_cm.kappa();
        row.val_loss = val_loss;
        row.val_acc = val_cm.accuracy();
        row.val_kappa = val_cm.kappa();
        row.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        log << log_row(row) << '\n' << std::flush;
        result.rows.push_back(row);
        if (on_epoch) on_epoch(row);

        plateau.observe(val_loss);

        OptimizerSnapshot snap;
        if (cfg.optimizer == "adabelief") {
            snap = OptimizerSnapshot::of(opt);
        } else {
            snap.kind = "sgd";
            snap.lr = cfg.lr;
            snap.step = sgd_steps;
        }
        save_checkpoint(net, snap, epoch, cfg.seed, result.last_path);
        if (val_loss < best_val) {
            best_val = val_loss;
            best_epoch = epoch;
            save_checkpoint(net, snap, epoch, cfg.seed, result.best_path);
        }
    }
    net.mode = Mode::inference;

    result.best_epoch = best_epoch;
    result.best_val_loss = best_val;
    return result;
}

EvalResult cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
                    const std::string& split, const std::string& out_dir,
                    std::size_t batch_size) {
    if (split != "train" && split != "valid" && split != "test")
        throw ConfigError("split must be train, valid or test, got '" + split + "'");
    if (batch_size == 0) throw ConfigError("batch must be > 0");
    if (out_dir.empty()) throw ConfigError("output directory must be set");

    Checkpoint ckpt = load_for_inference(checkpoint_path);
    const std::vector<StreamItem> items =
        scan_class_tree((fs::path(data_dir) / split).string());

    const SplitEval ev = run_inference(ckpt.net, items, batch_size);
    const ConfusionMatrix cm = confusion_from_labels(ev.truth, ev.pred, kNumClasses);
    const std::vector<std::string> names = class_names_vec();

    EvalResult res;
    res.report = classification_report(cm, ev.losses, names);
    fs::create_directories(out_dir);
    res.report_txt_path = (fs::path(out_dir) / "report.txt").string();
    res.report_csv_path = (fs::path(out_dir) / "report.csv").string();
    res.counts_csv_path = (fs::path(out_dir) / "confusion_counts.csv").string();
    res.rates_csv_path = (fs::path(out_dir) / "confusion_rates.csv").string();
    write_text(res.report_txt_path, res.report.table());
    write_text(res.report_csv_path, res.report.csv());
    write_text(res.counts_csv_path, counts_csv(cm, names));
    write_text(res.rates_csv_path, rates_csv(cm, names));
    return res;
}

PreprocessResult cmd_preprocess(const std::string& metadata_csv, const std::string& images_dir,
                                const std::string& out_dir, std::size_t size,
                                long long balance_seed) {
    if (size == 0) throw ConfigError("size must be > 0");
    if (out_dir.empty()) throw ConfigError("output directory must be set");
    if (!fs::is_directory(images_dir))
        throw DataError("images directory does not exist: " + images_dir);

    const MetadataFile md = parse_metadata(metadata_csv);
    std::vector<SampleRecord> records = md.records;
    if (balance_seed >= 0) {
        const SplitPlan plan = build_balanced_splits(records, std::uint64_t(balance_seed));
        records.clear();
        for (const BalancedSplit* part : {&plan.train, &plan.valid, &plan.test}) {
            const std::vector<SampleRecord> keep = part->all();
            records.insert(records.end(), keep.begin(), keep.end());
        }
    }

    fs::create_directories(out_dir);
    PreprocessResult res;
    std::vector<std::string> failures;
    for (const SampleRecord& rec : records) {
        const std::string cls = class_name(std::size_t(rec.label));
        const fs::path dst = fs::path(out_dir) / rec.split / cls / rec.filename;
        try {
            const Image img =
                preprocess_image((fs::path(images_dir) / rec.filename).string(), rec.bbox, size);
            fs::create_directories(dst.parent_path());
            write_png(img, dst.string());
        } catch (const std::exception& e) {
            failures.push_back("cannot process '" + rec.split + "/" + rec.filename +
                               "': " + e.what());
            continue;
        }
        ++res.written;
        ++res.counts[{rec.split, cls}];
    }

    res.rejected = md.rejects.size() + failures.size();
    if (res.rejected > 0) {
        std::string csv = md.rejects_csv();
        for (const std::string& reason : failures) csv += "0," + reason + '\n';
        res.rejects_path = (fs::path(out_dir) / "rejects.csv").string();
        write_text(res.rejects_path, csv);
    }
    return res;
}

std::string cmd_stats(const std::string& metadata_csv, const std::string& out_csv) {
    const MetadataFile md = parse_metadata(metadata_csv);
    const std::string table = dataset_stats(md.records);
    if (!out_csv.empty()) {
        ensure_parent_dir(out_csv);
        write_text(out_csv, table);
    }
    return table;
}

GradcamResult cmd_gradcam(const std::string& checkpoint_path, const std::string& image_path,
                          const std::string& out_prefix, int class_index, double alpha) {
    if (out_prefix.empty()) throw ConfigError("output prefix must be set");
    Checkpoint ckpt = load_for_inference(checkpoint_path);
    Image resized;
    const TensorF input = load_model_input(ckpt.net, image_path, &resized);

    if (class_index < 0) {
        const Mode saved = ckpt.net.mode;
        ckpt.net.mode = Mode::inference;
        const ForwardResult<float> fwd = forward(ckpt.net, input);
        ckpt.net.mode = saved;
        class_index = int(argmax_row(fwd.logits, 0));
    }

    const Heatmap heat = grad_cam(ckpt.net, input, class_index);
    const Image blended = overlay(resized, heat, alpha);

    GradcamResult res;
    res.class_index = class_index;
    res.overlay_path = out_prefix + "_overlay.png";
    res.heatmap_path = out_prefix + "_heatmap.csv";
    ensure_parent_dir(res.overlay_path);
    write_png(blended, res.overlay_path);
    write_text(res.heatmap_path, heat.csv());
    return res;
}

ActivationsResult cmd_activations(const std::string& checkpoint_path,
                                  const std::string& image_path, std::size_t layer_index,
                                  const std::string& out_png) {
    if (out_png.empty()) throw ConfigError("output path must be set");
    Checkpoint ckpt = load_for_inference(checkpoint_path);
    const TensorF input = load_model_input(ckpt.net, image_path, nullptr);

    const ActivationGrid grid = activation_grid(ckpt.net, input, layer_index);
    ensure_parent_dir(out_png);
    write_png(grid.image, out_png);

    ActivationsResult res;
    res.rows = grid.rows;
    res.cols = grid.cols;
    res.channels = grid.channels;
    res.grid_path = out_png;
    return res;
}

LrRangeResult cmd_lr_range(const RunConfig& config, double lr_low, double lr_high,
                           std::int64_t steps, const std::string& out_csv) {
    if (out_csv.empty()) throw ConfigError("output path must be set");
    RunConfig cfg = config;
    if (cfg.epochs <= 0) cfg.epochs = 1;     // the sweep ignores epochs
    if (cfg.run_dir.empty()) cfg.run_dir = "-";  // and the run directory
    cfg.validate();

    const std::vector<StreamItem> items =
        scan_class_tree((fs::path(cfg.data_dir) / "train").string());
    StreamOptions so;
    so.batch_size = cfg.batch_size;
    so.image_size = cfg.image_size;
    so.seed = cfg.seed;
    so.prefetch = cfg.prefetch;
    BatchStream stream(items, so);

    SeededRng init_rng(cfg.seed);
    NetworkF net = build_network<float>(spec_for(cfg), init_rng);
    net.mode = Mode::training;
    AdaBelief<float> opt(AdaBeliefConfig<float>{float(cfg.lr), float(cfg.beta1), float(cfg.beta2),
                                                float(cfg.epsilon), float(cfg.weight_decay)});
    SeededRng rng = SeededRng(cfg.seed).derive(kEpochRngBase);

    std::uint64_t epoch = 0;
    stream.start_epoch(epoch);
    Batch batch;
    const auto train_step = [&](double lr) {
        if (!stream.next(batch)) {
            stream.start_epoch(++epoch);
            stream.next(batch);
        }
        to_pixel_range(batch.images);
        BackwardResult<float> back = backward(net, batch.images, batch.labels, rng);
        const std::vector<ParamView<float>> views = param_views(net, back);
        if (cfg.optimizer == "adabelief")
            opt.step(views, float(lr));
        else
            sgd_step(views, float(lr));
        return back.loss;
    };

    const LrRangeResult result = lr_range_test(lr_low, lr_high, steps, train_step);
    ensure_parent_dir(out_csv);
    write_text(out_csv, result.to_csv());
    return result;
}

} // namespace dcnn
