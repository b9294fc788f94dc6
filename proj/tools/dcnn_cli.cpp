#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "dcnn/commands.hpp"

using namespace dcnn;

namespace {

std::string strip(const std::string& s) {
    const std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// key=value files for `train`, applied only where no explicit flag was
// given so the command line always wins. Keys mirror the long flag
// names; a run's config.snapshot loads back unchanged.
void apply_train_config(const CLI::App& tr, const std::string& path, RunConfig& cfg) {
    const auto num = [&](const std::string& v, const std::string& key) {
        std::size_t pos = 0;
        double d = 0;
        try {
            d = std::stod(v, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != v.size() || v.empty())
            throw ConfigError("config key '" + key + "' has non-numeric value '" + v + "'");
        return d;
    };
    std::map<std::string, std::function<void(const std::string&)>> set;
    set["data"] = [&](const std::string& v) { cfg.data_dir = v; };
    set["run"] = [&](const std::string& v) { cfg.run_dir = v; };
    set["image-size"] = [&](const std::string& v) { cfg.image_size = std::size_t(num(v, "image-size")); };
    set["batch"] = [&](const std::string& v) { cfg.batch_size = std::size_t(num(v, "batch")); };
    set["epochs"] = [&](const std::string& v) { cfg.epochs = int(num(v, "epochs")); };
    set["seed"] = [&](const std::string& v) { cfg.seed = std::uint64_t(num(v, "seed")); };
    set["prefetch"] = [&](const std::string& v) { cfg.prefetch = std::size_t(num(v, "prefetch")); };
    set["optimizer"] = [&](const std::string& v) { cfg.optimizer = v; };
    set["lr"] = [&](const std::string& v) { cfg.lr = num(v, "lr"); };
    set["beta1"] = [&](const std::string& v) { cfg.beta1 = num(v, "beta1"); };
    set["beta2"] = [&](const std::string& v) { cfg.beta2 = num(v, "beta2"); };
    set["epsilon"] = [&](const std::string& v) { cfg.epsilon = num(v, "epsilon"); };
    set["weight-decay"] = [&](const std::string& v) { cfg.weight_decay = num(v, "weight-decay"); };
    set["activation"] = [&](const std::string& v) { cfg.activation = v; };
    set["dropout"] = [&](const std::string& v) { cfg.dropout = num(v, "dropout"); };
    set["clr"] = [&](const std::string& v) {
        if (v == "true" || v == "1") cfg.clr = true;
        else if (v == "false" || v == "0") cfg.clr = false;
        else throw ConfigError("config key 'clr' must be true or false, got '" + v + "'");
    };
    set["clr-min"] = [&](const std::string& v) { cfg.clr_min = num(v, "clr-min"); };
    set["clr-max"] = [&](const std::string& v) { cfg.clr_max = num(v, "clr-max"); };
    set["clr-step"] = [&](const std::string& v) { cfg.clr_step = std::int64_t(num(v, "clr-step")); };
    set["plateau-factor"] = [&](const std::string& v) { cfg.plateau_factor = num(v, "plateau-factor"); };
    set["plateau-patience"] = [&](const std::string& v) { cfg.plateau_patience = int(num(v, "plateau-patience")); };
    set["plateau-floor"] = [&](const std::string& v) { cfg.plateau_floor = num(v, "plateau-floor"); };
    set["plateau-threshold"] = [&](const std::string& v) { cfg.plateau_threshold = num(v, "plateau-threshold"); };
    set["resume"] = [&](const std::string& v) { cfg.resume = v; };

    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip(line);
        if (line.empty() || line[0] == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        const auto it = set.find(key);
        if (it == set.end())
            throw ConfigError("unknown config key '" + key + "' in " + path);
        if (tr.count("--" + key) == 0) it->second(value);
    }
}

int run(int argc, char** argv) {
    CLI::App app{"CT-scan classifier toolchain: preprocess, train, evaluate, interpret"};
    app.require_subcommand(1);

    // preprocess ---------------------------------------------------
    std::string pp_metadata, pp_images, pp_out;
    std::size_t pp_size = 224;
    long long pp_balance = -1;
    CLI::App* pp =
        app.add_subcommand("preprocess", "Crop, resize and file images into a split/class tree");
    pp->add_option("--metadata", pp_metadata, "metadata CSV")->required();
    pp->add_option("--images", pp_images, "directory holding the source images")->required();
    pp->add_option("--out", pp_out, "output tree root")->required();
    pp->add_option("--size", pp_size, "output width and height (default 224)");
    pp->add_option("--balance-seed", pp_balance,
                   "down-sample every split to its smallest class with this seed");

    // stats --------------------------------------------------------
    std::string st_metadata, st_out;
    CLI::App* st = app.add_subcommand("stats", "Dataset distribution tables from a metadata CSV");
    st->add_option("--metadata", st_metadata, "metadata CSV")->required();
    st->add_option("--out", st_out, "also write the table to this file");

    // train ----------------------------------------------------------
    RunConfig cfg;
    std::string tr_config;
    CLI::App* tr = app.add_subcommand("train", "Train the classifier");
    tr->add_option("--config", tr_config, "key=value file; explicit flags win");
    tr->add_option("--data", cfg.data_dir, "processed tree with train/ and valid/");
    tr->add_option("--run", cfg.run_dir, "run directory for checkpoints and logs");
    tr->add_option("--epochs", cfg.epochs, "total target epoch count");
    tr->add_option("--image-size", cfg.image_size, "network input size (default 128)");
    tr->add_option("--batch", cfg.batch_size, "batch size (default 128)");
    tr->add_option("--seed", cfg.seed, "seed for init, shuffling and dropout");
    tr->add_option("--prefetch", cfg.prefetch, "decode worker threads (default 2)");
    tr->add_option("--optimizer", cfg.optimizer, "adabelief or sgd");
    tr->add_option("--lr", cfg.lr, "base rate when CLR is off");
    tr->add_option("--beta1", cfg.beta1);
    tr->add_option("--beta2", cfg.beta2);
    tr->add_option("--epsilon", cfg.epsilon);
    tr->add_option("--weight-decay", cfg.weight_decay);
    tr->add_option("--activation", cfg.activation, "relu|gelu|selu|mish|swish|lisht");
    tr->add_option("--dropout", cfg.dropout, "rate for the classifier head");
    tr->add_flag("--clr,!--no-clr", cfg.clr, "triangular cyclical learning rate (default on)");
    tr->add_option("--clr-min", cfg.clr_min);
    tr->add_option("--clr-max", cfg.clr_max);
    tr->add_option("--clr-step", cfg.clr_step, "steps per half cycle; 0 = 4 epochs' worth");
    tr->add_option("--plateau-factor", cfg.plateau_factor);
    tr->add_option("--plateau-patience", cfg.plateau_patience);
    tr->add_option("--plateau-floor", cfg.plateau_floor);
    tr->add_option("--plateau-threshold", cfg.plateau_threshold);
    tr->add_option("--resume", cfg.resume, "checkpoint to continue from");

    // eval -----------------------------------------------------------
    std::string ev_ckpt, ev_data, ev_split = "test", ev_out;
    std::size_t ev_batch = 128;
    CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint over a split");
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--data", ev_data, "processed tree root")->required();
    ev->add_option("--split", ev_split, "train, valid or test (default test)");
    ev->add_option("--out", ev_out, "directory for the report files")->required();
    ev->add_option("--batch", ev_batch, "inference batch size");

    // gradcam --------------------------------------------------------
    std::string gc_ckpt, gc_image, gc_prefix;
    int gc_class = -1;
    double gc_alpha = 0.4;
    CLI::App* gc = app.add_subcommand("gradcam", "Class-evidence heatmap for one image");
    gc->add_option("--checkpoint", gc_ckpt, "model checkpoint")->required();
    gc->add_option("--image", gc_image, "input PNG")->required();
    gc->add_option("--out-prefix", gc_prefix, "writes <prefix>_overlay.png and <prefix>_heatmap.csv")
        ->required();
    gc->add_option("--class", gc_class, "class index 0..2; -1 = the model's prediction");
    gc->add_option("--alpha", gc_alpha, "overlay opacity in [0, 1]");

    // activations ------------------------------------------------------
    std::string ac_ckpt, ac_image, ac_out;
    std::size_t ac_layer = 0;
    CLI::App* ac = app.add_subcommand("activations", "Per-channel activation grid for one layer");
    ac->add_option("--checkpoint", ac_ckpt, "model checkpoint")->required();
    ac->add_option("--image", ac_image, "input PNG")->required();
    ac->add_option("--layer", ac_layer, "conv or pool layer index")->required();
    ac->add_option("--out", ac_out, "output PNG")->required();

    // lr-range ---------------------------------------------------------
    RunConfig lr_cfg;
    double lr_low = 1e-6, lr_high = 1.0;
    std::int64_t lr_steps = 100;
    std::string lr_out;
    CLI::App* lrr = app.add_subcommand("lr-range", "Loss curve while the rate sweeps up");
    lrr->add_option("--data", lr_cfg.data_dir, "processed tree with train/")->required();
    lrr->add_option("--out", lr_out, "output CSV")->required();
    lrr->add_option("--low", lr_low, "starting rate");
    lrr->add_option("--high", lr_high, "final rate");
    lrr->add_option("--steps", lr_steps, "sweep length in optimizer steps");
    lrr->add_option("--image-size", lr_cfg.image_size);
    lrr->add_option("--batch", lr_cfg.batch_size);
    lrr->add_option("--seed", lr_cfg.seed);
    lrr->add_option("--prefetch", lr_cfg.prefetch);
    lrr->add_option("--optimizer", lr_cfg.optimizer);
    lrr->add_option("--activation", lr_cfg.activation);
    lrr->add_option("--dropout", lr_cfg.dropout);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage problems are exit 1
    }

    if (pp->parsed()) {
        const PreprocessResult res = cmd_preprocess(pp_metadata, pp_images, pp_out, pp_size,
                                                    pp_balance);
        for (const auto& [key, count] : res.counts)
            std::printf("%s/%s: %zu\n", key.first.c_str(), key.second.c_str(), count);
        std::printf("written: %zu\n", res.written);
        if (res.rejected > 0)
            std::printf("rejected: %zu (see %s)\n", res.rejected, res.rejects_path.c_str());
        return 0;
    }
    if (st->parsed()) {
        const std::string table = cmd_stats(st_metadata, st_out);
        std::fputs(table.c_str(), stdout);
        if (!st_out.empty()) std::printf("wrote %s\n", st_out.c_str());
        return 0;
    }
    if (tr->parsed()) {
        if (!tr_config.empty()) apply_train_config(*tr, tr_config, cfg);
        const TrainResult res = cmd_train(cfg, [](const EpochRow& row) {
            std::printf("epoch %d: lr %.6g train loss %.4f acc %.4f | val loss %.4f acc %.4f "
                        "kappa %.4f (%.1fs)\n",
                        row.epoch, row.lr, row.train_loss, row.train_acc, row.val_loss,
                        row.val_acc, row.val_kappa, row.seconds);
            std::fflush(stdout);
        });
        std::printf("best epoch %d (val loss %.6f)\n", res.best_epoch, res.best_val_loss);
        std::printf("log: %s\nbest: %s\nlast: %s\n", res.log_path.c_str(), res.best_path.c_str(),
                    res.last_path.c_str());
        return 0;
    }
    if (ev->parsed()) {
        const EvalResult res = cmd_eval(ev_ckpt, ev_data, ev_split, ev_out, ev_batch);
        std::fputs(res.report.table().c_str(), stdout);
        std::printf("report: %s\n        %s\nconfusion: %s\n           %s\n",
                    res.report_txt_path.c_str(), res.report_csv_path.c_str(),
                    res.counts_csv_path.c_str(), res.rates_csv_path.c_str());
        return 0;
    }
    if (gc->parsed()) {
        const GradcamResult res = cmd_gradcam(gc_ckpt, gc_image, gc_prefix, gc_class, gc_alpha);
        std::printf("class %d (%s)\noverlay: %s\nheatmap: %s\n", res.class_index,
                    class_name(std::size_t(res.class_index)).c_str(), res.overlay_path.c_str(),
                    res.heatmap_path.c_str());
        return 0;
    }
    if (ac->parsed()) {
        const ActivationsResult res = cmd_activations(ac_ckpt, ac_image, ac_layer, ac_out);
        std::printf("%zu channels in a %zux%zu grid\ngrid: %s\n", res.channels, res.rows, res.cols,
                    res.grid_path.c_str());
        return 0;
    }
    if (lrr->parsed()) {
        const LrRangeResult res = cmd_lr_range(lr_cfg, lr_low, lr_high, lr_steps, lr_out);
        if (res.diverged)
            std::printf("diverged at step %lld\n", static_cast<long long>(res.diverged_at));
        std::printf("curve: %s\n", lr_out.c_str());
        return 0;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
}
