#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dcnn/network.hpp"

// Checkpoint reader/writer. Layout is documented in network.hpp and
// docs/checkpoint-format.md; the manifest is compact JSON so the file
// stays inspectable with standard tools (skip 14 bytes, read
// manifest_len bytes).

namespace dcnn {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'D', 'C', 'N', 'N'};
constexpr std::uint16_t kVersion = 1;

json spec_to_json(const NetworkSpec& spec) {
    json layers = json::array();
    for (const LayerSpec& ls : spec.layers) {
        json j{{"kind", layer_kind_name(ls.kind)}};
        switch (ls.kind) {
            case LayerKind::rescale: j["scale"] = ls.scale; break;
            case LayerKind::conv:
                j["channels"] = ls.channels;
                j["kernel"] = ls.kernel;
                j["stride"] = ls.stride;
                j["padding"] = ls.padding;
                break;
            case LayerKind::activation: j["activation"] = activation_name(ls.activation); break;
            case LayerKind::maxpool: j["window"] = ls.window; break;
            case LayerKind::dropout: j["rate"] = ls.rate; break;
            case LayerKind::dense: j["units"] = ls.channels; break;
            default: break;
        }
        layers.push_back(std::move(j));
    }
    return json{{"in_channels", spec.in_channels},
                {"in_size", spec.in_size},
                {"layers", std::move(layers)}};
}

NetworkSpec spec_from_json(const json& j) {
    NetworkSpec spec;
    spec.in_channels = j.at("in_channels").get<std::size_t>();
    spec.in_size = j.at("in_size").get<std::size_t>();
    for (const json& lj : j.at("layers")) {
        const std::string kind = lj.at("kind").get<std::string>();
        if (kind == "rescale") {
            spec.layers.push_back(LayerSpec::rescale(lj.at("scale").get<double>()));
        } else if (kind == "conv") {
            spec.layers.push_back(LayerSpec::conv(
                lj.at("channels").get<int>(), lj.at("kernel").get<int>(),
                lj.at("stride").get<int>(), lj.at("padding").get<int>()));
        } else if (kind == "batchnorm") {
            spec.layers.push_back(LayerSpec::batchnorm());
        } else if (kind == "activation") {
            spec.layers.push_back(
                LayerSpec::act(parse_activation(lj.at("activation").get<std::string>())));
        } else if (kind == "maxpool") {
            spec.layers.push_back(LayerSpec::maxpool(lj.at("window").get<int>()));
        } else if (kind == "dropout") {
            spec.layers.push_back(LayerSpec::dropout(lj.at("rate").get<double>()));
        } else if (kind == "flatten") {
            spec.layers.push_back(LayerSpec::flatten());
        } else if (kind == "dense") {
            spec.layers.push_back(LayerSpec::dense(lj.at("units").get<int>()));
        } else {
            throw CheckpointLayerKindError("checkpoint names unknown layer kind '" + kind + "'");
        }
    }
    return spec;
}

struct NamedTensor {
    std::string name;
    float* data;
    std::size_t size;
};

// Every stored tensor of the network, in the canonical directory order.
std::vector<NamedTensor> network_tensors(NetworkF& net) {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        Layer<float>& layer = net.layers[i];
        const std::string prefix = "layer" + std::to_string(i) + ".";
        switch (layer.spec.kind) {
            case LayerKind::conv:
                out.push_back({prefix + "kernels", layer.conv.kernels.data(),
                               layer.conv.kernels.size()});
                out.push_back({prefix + "bias", layer.conv.bias.data(), layer.conv.bias.size()});
                break;
            case LayerKind::batchnorm:
                out.push_back({prefix + "gamma", layer.bn.gamma.data(), layer.bn.gamma.size()});
                out.push_back({prefix + "beta", layer.bn.beta.data(), layer.bn.beta.size()});
                out.push_back({prefix + "moving_mean", layer.bn.moving_mean.data(),
                               layer.bn.moving_mean.size()});
                out.push_back({prefix + "moving_var", layer.bn.moving_var.data(),
                               layer.bn.moving_var.size()});
                break;
            case LayerKind::dense:
                out.push_back({prefix + "weights", layer.weights.data(), layer.weights.size()});
                out.push_back({prefix + "bias", layer.bias.data(), layer.bias.size()});
                break;
            default:
                break;
        }
    }
    return out;
}

void write_vector_blob(std::ostream& out, const float* data, std::size_t size) {
    TensorF t(Shape4{1, size, 1, 1});
    std::memcpy(t.data(), data, size * sizeof(float));
    write_tensor_blob(out, t);
}

void read_exact(std::istream& in, char* buf, std::size_t len, const std::string& what) {
    in.read(buf, std::streamsize(len));
    if (std::size_t(in.gcount()) != len)
        throw CheckpointTruncatedError("checkpoint ends inside " + what);
}

} // namespace

OptimizerSnapshot OptimizerSnapshot::of(const AdaBelief<float>& opt) {
    OptimizerSnapshot snap;
    snap.kind = "adabelief";
    snap.lr = opt.config().lr;
    snap.beta1 = opt.config().beta1;
    snap.beta2 = opt.config().beta2;
    snap.epsilon = opt.config().epsilon;
    snap.weight_decay = opt.config().weight_decay;
    snap.step = opt.step_count();
    snap.m = opt.first_moments();
    snap.s = opt.second_moments();
    return snap;
}

AdaBelief<float> OptimizerSnapshot::restore() const {
    AdaBeliefConfig<float> cfg;
    cfg.lr = float(lr);
    cfg.beta1 = float(beta1);
    cfg.beta2 = float(beta2);
    cfg.epsilon = float(epsilon);
    cfg.weight_decay = float(weight_decay);
    AdaBelief<float> opt(cfg);
    opt.restore(m, s, step);
    return opt;
}

void save_checkpoint(const NetworkF& net, const OptimizerSnapshot& optim, int epoch,
                     std::uint64_t seed, const std::string& path) {
    // The directory order is fixed: network tensors, then optimizer
    // moments m then s per trainable slot. Offsets are relative to the
    // end of the manifest.
    NetworkF& mutable_net = const_cast<NetworkF&>(net);
    std::vector<NamedTensor> tensors = network_tensors(mutable_net);
    std::vector<std::string> trainable_names;
    for (const ParamView<float>& v : param_views(mutable_net)) trainable_names.push_back(v.name);

    if (!optim.m.empty() && optim.m.size() != trainable_names.size())
        throw ConfigError("optimizer snapshot has " + std::to_string(optim.m.size()) +
                          " moment slots for " + std::to_string(trainable_names.size()) +
                          " trainable parameters");

    std::ostringstream blobs(std::ios::binary);
    json directory = json::array();
    auto append = [&](const std::string& name, const float* data, std::size_t size) {
        directory.push_back({{"name", name}, {"offset", std::uint64_t(blobs.tellp())}});
        write_vector_blob(blobs, data, size);
    };
    for (const NamedTensor& t : tensors) append(t.name, t.data, t.size);
    for (std::size_t i = 0; i < optim.m.size(); ++i) {
        append("optim.m." + trainable_names[i], optim.m[i].data(), optim.m[i].size());
        append("optim.s." + trainable_names[i], optim.s[i].data(), optim.s[i].size());
    }

    json manifest{{"spec", spec_to_json(net.spec)},
                  {"epoch", epoch},
                  {"seed", seed},
                  {"optimizer",
                   {{"kind", optim.kind},
                    {"lr", optim.lr},
                    {"beta1", optim.beta1},
                    {"beta2", optim.beta2},
                    {"epsilon", optim.epsilon},
                    {"weight_decay", optim.weight_decay},
                    {"step", optim.step}}},
                  {"tensors", std::move(directory)}};
    const std::string manifest_text = manifest.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    const std::uint16_t version = kVersion;
    const std::uint64_t manifest_len = manifest_text.size();
    char hdr[10];
    for (int b = 0; b < 2; ++b) hdr[b] = char((version >> (8 * b)) & 0xFF);
    for (int b = 0; b < 8; ++b) hdr[2 + b] = char((manifest_len >> (8 * b)) & 0xFF);
    out.write(hdr, 10);
    out.write(manifest_text.data(), std::streamsize(manifest_text.size()));
    const std::string blob_bytes = blobs.str();
    out.write(blob_bytes.data(), std::streamsize(blob_bytes.size()));
    if (!out) throw DataError("short write while saving checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);

    char magic[4];
    read_exact(in, magic, 4, "the magic bytes");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointFormatError("not a checkpoint file (bad magic): " + path);

    char hdr[10];
    read_exact(in, hdr, 10, "the header");
    std::uint16_t version = 0;
    for (int b = 0; b < 2; ++b) version |= std::uint16_t(std::uint8_t(hdr[b])) << (8 * b);
    if (version != kVersion)
        throw CheckpointVersionError("checkpoint format version " + std::to_string(version) +
                                     " is not supported (expected " + std::to_string(kVersion) +
                                     ")");
    std::uint64_t manifest_len = 0;
    for (int b = 0; b < 8; ++b) manifest_len |= std::uint64_t(std::uint8_t(hdr[2 + b])) << (8 * b);

    std::string manifest_text(manifest_len, '\0');
    read_exact(in, manifest_text.data(), manifest_len, "the manifest");

    json manifest;
    try {
        manifest = json::parse(manifest_text);
    } catch (const json::exception& e) {
        throw CheckpointFormatError(std::string("checkpoint manifest is not valid JSON: ") +
                                    e.what());
    }

    Checkpoint ckpt;
    try {
        ckpt.epoch = manifest.at("epoch").get<int>();
        ckpt.seed = manifest.at("seed").get<std::uint64_t>();

        const NetworkSpec spec = spec_from_json(manifest.at("spec"));
        SeededRng scratch(0);
        ckpt.net = build_network<float>(spec, scratch);  // storage; overwritten below

        const json& oj = manifest.at("optimizer");
        ckpt.optim.kind = oj.at("kind").get<std::string>();
        ckpt.optim.lr = oj.at("lr").get<double>();
        ckpt.optim.beta1 = oj.at("beta1").get<double>();
        ckpt.optim.beta2 = oj.at("beta2").get<double>();
        ckpt.optim.epsilon = oj.at("epsilon").get<double>();
        ckpt.optim.weight_decay = oj.at("weight_decay").get<double>();
        ckpt.optim.step = oj.at("step").get<std::int64_t>();

        const std::streampos blob_base = in.tellg();
        std::vector<NamedTensor> tensors = network_tensors(ckpt.net);
        std::vector<ParamView<float>> trainable = param_views(ckpt.net);

        std::map<std::string, std::uint64_t> offsets;
        for (const json& entry : manifest.at("tensors"))
            offsets[entry.at("name").get<std::string>()] = entry.at("offset").get<std::uint64_t>();

        auto load_into = [&](const std::string& name, float* dst, std::size_t size) {
            auto it = offsets.find(name);
            if (it == offsets.end())
                throw CheckpointFormatError("checkpoint is missing tensor '" + name + "'");
            in.clear();
            in.seekg(blob_base + std::streamoff(it->second));
            TensorF t = read_tensor_blob(in);
            if (t.size() != size)
                throw CheckpointFormatError("tensor '" + name + "' has " +
                                            std::to_string(t.size()) + " elements, expected " +
                                            std::to_string(size));
            std::memcpy(dst, t.data(), size * sizeof(float));
            offsets.erase(it);
        };

        for (const NamedTensor& t : tensors) load_into(t.name, t.data, t.size);

        // Whatever remains must be the optimizer moments, all or nothing.
        if (!offsets.empty()) {
            ckpt.optim.m.resize(trainable.size());
            ckpt.optim.s.resize(trainable.size());
            for (std::size_t i = 0; i < trainable.size(); ++i) {
                ckpt.optim.m[i].resize(trainable[i].size);
                ckpt.optim.s[i].resize(trainable[i].size);
                load_into("optim.m." + trainable[i].name, ckpt.optim.m[i].data(),
                          trainable[i].size);
                load_into("optim.s." + trainable[i].name, ckpt.optim.s[i].data(),
                          trainable[i].size);
            }
        }
        if (!offsets.empty())
            throw CheckpointFormatError("checkpoint holds unexpected tensor '" +
                                        offsets.begin()->first + "'");
    } catch (const json::exception& e) {
        throw CheckpointFormatError(std::string("checkpoint manifest field error: ") + e.what());
    }
    return ckpt;
}

} // namespace dcnn
