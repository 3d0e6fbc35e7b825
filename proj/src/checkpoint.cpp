#include "subnetcl/checkpoint.hpp"

#include <string>

#include "subnetcl/binio.hpp"

namespace subnetcl::checkpoint {

namespace {

constexpr char kMagic[] = "SMCK";

void put_reals(binio::ByteWriter& out, const std::vector<double>& values)
{
    out.put(static_cast<std::uint64_t>(values.size()));
    for (double v : values) {
        out.put_f64(v);
    }
}

void get_reals(binio::ByteReader& in, std::vector<double>& values, const std::string& what)
{
    const auto n = in.get<std::uint64_t>();
    if (n != values.size()) {
        throw CheckpointError("checkpoint " + what + " has " + std::to_string(n) + " values, model expects "
                              + std::to_string(values.size()));
    }
    for (auto& v : values) {
        v = in.get_f64();
    }
}

void put_matrix(binio::ByteWriter& out, const evalkit::AccuracyMatrix& r)
{
    out.put(static_cast<std::uint64_t>(r.size()));
    for (std::size_t t = 0; t < r.size(); ++t) {
        for (std::size_t j = 0; j <= t; ++j) {
            const bool filled = r.has(t, j);
            out.put(static_cast<std::uint8_t>(filled ? 1 : 0));
            out.put_f64(filled ? r.at(t, j) : 0.0);
        }
    }
}

evalkit::AccuracyMatrix get_matrix(binio::ByteReader& in)
{
    const auto n = in.get<std::uint64_t>();
    if (n * (n + 1) / 2 * 9 > in.remaining()) {
        throw binio::TruncatedError("truncated container");
    }
    evalkit::AccuracyMatrix r(static_cast<std::size_t>(n));
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t j = 0; j <= t; ++j) {
            const auto filled = in.get<std::uint8_t>();
            const double v = in.get_f64();
            if (filled != 0) {
                r.set(t, j, v);
            }
        }
    }
    return r;
}

}  // namespace

std::vector<std::byte> encode(const evalkit::Experiment& experiment)
{
    const auto& learner = experiment.learner();
    const auto& model = learner.model();
    binio::ByteWriter out;
    out.put_tag(std::string_view(kMagic, 4));
    out.put(kCheckpointVersion);
    out.put_string(experiment.config().to_flat().to_text());
    out.put(static_cast<std::uint64_t>(learner.tasks_done()));

    out.put(static_cast<std::uint32_t>(model.maskable_count()));
    for (const auto& layer : model.layers()) {
        put_reals(out, layer.weights);
        put_reals(out, layer.bias);
    }
    out.put(static_cast<std::uint32_t>(model.norm_count()));
    for (std::size_t n = 0; n < model.norm_count(); ++n) {
        const auto& norm = model.norm(n);
        put_reals(out, norm.running_mean);
        put_reals(out, norm.running_var);
        put_reals(out, norm.scale);
        put_reals(out, norm.shift);
    }
    out.put(static_cast<std::uint32_t>(model.head_count()));
    for (std::size_t h = 0; h < model.head_count(); ++h) {
        put_reals(out, model.head(h).weights);
        put_reals(out, model.head(h).bias);
    }
    out.put(static_cast<std::uint8_t>(model.normalization_frozen() ? 1 : 0));
    out.put(static_cast<std::uint8_t>(model.head_frozen() ? 1 : 0));

    out.put(static_cast<std::uint32_t>(learner.scores().size()));
    for (const auto& s : learner.scores()) {
        put_reals(out, s);
    }
    out.put_blob(maskstore::serialize(learner.masks()));
    out.put_blob(taskid::serialize(learner.statistics()));

    put_matrix(out, experiment.oracle());
    put_matrix(out, experiment.inferred());
    put_matrix(out, experiment.latest());

    out.put(static_cast<std::uint64_t>(experiment.epochs().size()));
    for (const auto& task_epochs : experiment.epochs()) {
        out.put(static_cast<std::uint64_t>(task_epochs.size()));
        for (const auto& e : task_epochs) {
            out.put(static_cast<std::uint64_t>(e.epoch));
            out.put_f64(e.lr);
            out.put_f64(e.train_loss);
            out.put_f64(e.train_accuracy);
            out.put_f64(e.val_accuracy);
        }
    }
    for (const auto& audit : experiment.audits()) {
        std::uint8_t flags = 0;
        flags |= audit.normalization_checked ? 1u : 0u;
        flags |= audit.normalization_unchanged ? 2u : 0u;
        flags |= audit.biases_checked ? 4u : 0u;
        flags |= audit.biases_unchanged ? 8u : 0u;
        flags |= audit.prior_weights_unchanged ? 16u : 0u;
        flags |= audit.head_checked ? 32u : 0u;
        flags |= audit.head_unchanged ? 64u : 0u;
        out.put(flags);
        out.put(static_cast<std::uint64_t>(audit.free_weights_changed));
    }
    return out.take();
}

evalkit::Experiment decode(std::span<const std::byte> bytes)
{
    try {
        binio::ByteReader in(bytes);
        const auto magic = in.get_bytes(4);
        if (std::string(reinterpret_cast<const char*>(magic.data()), 4) != std::string_view(kMagic, 4)) {
            throw CheckpointError("not a checkpoint file");
        }
        const auto version = in.get<std::uint16_t>();
        if (version != kCheckpointVersion) {
            throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
        }
        const ExperimentConfig config = ExperimentConfig::from_flat(FlatConfig::parse(in.get_string()));
        const auto tasks_done = in.get<std::uint64_t>();

        Backbone model(config.backbone, 0);
        if (in.get<std::uint32_t>() != model.maskable_count()) {
            throw CheckpointError("checkpoint layer count does not match its configuration");
        }
        for (std::size_t l = 0; l < model.maskable_count(); ++l) {
            get_reals(in, model.layer(l).weights, model.layer(l).name + " weights");
            get_reals(in, model.layer(l).bias, model.layer(l).name + " bias");
        }
        if (in.get<std::uint32_t>() != model.norm_count()) {
            throw CheckpointError("checkpoint normalization count does not match its configuration");
        }
        for (std::size_t n = 0; n < model.norm_count(); ++n) {
            auto& norm = model.norm(n);
            get_reals(in, norm.running_mean, "normalization running mean");
            get_reals(in, norm.running_var, "normalization running variance");
            get_reals(in, norm.scale, "normalization scale");
            get_reals(in, norm.shift, "normalization shift");
        }
        if (in.get<std::uint32_t>() != model.head_count()) {
            throw CheckpointError("checkpoint head count does not match its configuration");
        }
        for (std::size_t h = 0; h < model.head_count(); ++h) {
            get_reals(in, model.head(h).weights, "head weights");
            get_reals(in, model.head(h).bias, "head bias");
        }
        FreezePolicy policy;
        policy.normalization = in.get<std::uint8_t>() != 0;
        policy.classifier_head = in.get<std::uint8_t>() != 0;
        model.set_frozen(policy);

        ScoreSet scores(in.get<std::uint32_t>());
        if (!scores.empty() && scores.size() != model.maskable_count()) {
            throw CheckpointError("checkpoint score layers do not match the model");
        }
        for (std::size_t l = 0; l < scores.size(); ++l) {
            scores[l].resize(model.layer(l).size());
            get_reals(in, scores[l], model.layer(l).name + " scores");
        }
        auto masks = maskstore::deserialize(in.get_blob());
        auto statistics = taskid::deserialize(in.get_blob());
        if (masks.task_count() != tasks_done) {
            throw CheckpointError("checkpoint mask bank holds " + std::to_string(masks.task_count())
                                  + " tasks, header says " + std::to_string(tasks_done));
        }
        auto oracle = get_matrix(in);
        auto inferred = get_matrix(in);
        auto latest = get_matrix(in);

        std::vector<std::vector<trainer::EpochMetrics>> epochs(in.get<std::uint64_t>());
        if (epochs.size() != tasks_done) {
            throw CheckpointError("checkpoint epoch logs do not match the task count");
        }
        for (auto& task_epochs : epochs) {
            const auto count = in.get<std::uint64_t>();
            if (count * 40 > in.remaining()) {
                throw binio::TruncatedError("truncated container");
            }
            task_epochs.resize(count);
            for (auto& e : task_epochs) {
                e.epoch = static_cast<std::size_t>(in.get<std::uint64_t>());
                e.lr = in.get_f64();
                e.train_loss = in.get_f64();
                e.train_accuracy = in.get_f64();
                e.val_accuracy = in.get_f64();
            }
        }
        std::vector<trainer::FrozenAudit> audits(tasks_done);
        for (auto& audit : audits) {
            const auto flags = in.get<std::uint8_t>();
            audit.normalization_checked = (flags & 1u) != 0;
            audit.normalization_unchanged = (flags & 2u) != 0;
            audit.biases_checked = (flags & 4u) != 0;
            audit.biases_unchanged = (flags & 8u) != 0;
            audit.prior_weights_unchanged = (flags & 16u) != 0;
            audit.head_checked = (flags & 32u) != 0;
            audit.head_unchanged = (flags & 64u) != 0;
            audit.free_weights_changed = static_cast<std::size_t>(in.get<std::uint64_t>());
        }
        if (!in.at_end()) {
            throw CheckpointError("trailing bytes after checkpoint");
        }
        trainer::ContinualLearner learner(config.train, std::move(model), std::move(scores), std::move(masks),
                                          std::move(statistics));
        return evalkit::Experiment(config, std::move(learner), std::move(oracle), std::move(inferred),
                                   std::move(latest), std::move(epochs), std::move(audits));
    } catch (const binio::TruncatedError&) {
        throw CheckpointError("truncated checkpoint");
    } catch (const maskstore::ContainerError& err) {
        throw CheckpointError(std::string("checkpoint mask bank: ") + err.what());
    } catch (const ConfigError& err) {
        throw CheckpointError(std::string("checkpoint config echo: ") + err.what());
    } catch (const std::invalid_argument& err) {
        throw CheckpointError(std::string("inconsistent checkpoint: ") + err.what());
    }
}

void save(const evalkit::Experiment& experiment, const std::filesystem::path& path)
{
    binio::write_file(path, encode(experiment));
}

evalkit::Experiment load(const std::filesystem::path& path)
{
    return decode(binio::read_file(path));
}

}  // namespace subnetcl::checkpoint
