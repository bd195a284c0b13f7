#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "fad/adapter.hpp"
#include "fad/autograd.hpp"
#include "fad/backbone.hpp"
#include "fad/episodes.hpp"
#include "fad/ncc.hpp"
#include "fad/optimizer.hpp"

// Pretraining on a source domain and meta-test adaptation of adapters on one
// episode. Only adapter parameters ever receive gradients; backbone weights
// enter every graph as constants.

namespace fad {

struct StopRule {
    double support_acc_threshold = 0.99;
    std::size_t patience_after_threshold = 0;
    std::size_t max_steps = 40;

    void validate() const {
        if (!(support_acc_threshold > 0.0 && support_acc_threshold <= 1.0))
            throw std::invalid_argument("stop rule: threshold must be in (0, 1]");
        if (max_steps < 1) throw std::invalid_argument("stop rule: max_steps must be >= 1");
    }
};

struct PretrainResult {
    BackboneParams backbone;
    double train_accuracy = 0.0;
    std::size_t epochs_run = 0;
};

// Full-batch gradient descent on backbone plus a throwaway linear head,
// softmax cross-entropy loss. Deterministic given the seed; epochs = 0
// returns the seeded initialization untouched.
inline PretrainResult pretrain(const BackboneConfig& config, const Dataset& dataset,
                               std::size_t epochs, double lr, std::uint64_t seed) {
    if (dataset.empty()) throw std::invalid_argument("pretrain: empty dataset");
    config.validate();

    // contiguous label remap
    std::map<int, int> remap;
    for (const auto& ex : dataset) remap.emplace(ex.label, 0);
    int next = 0;
    for (auto& [label, idx] : remap) idx = next++;
    const std::size_t n_classes = remap.size();
    std::vector<int> labels;
    labels.reserve(dataset.size());
    for (const auto& ex : dataset) labels.push_back(remap.at(ex.label));

    BackboneParams params = init_backbone(config, seed);
    const std::size_t dim = config.embedding_dim();
    Tensor head_w({n_classes, dim}, 0.0);
    Tensor head_b({n_classes}, 0.0);

    PretrainResult result;
    double last_acc = 0.0;
    for (std::size_t epoch = 0; epoch <= epochs; ++epoch) {
        Tape tape;
        std::vector<Tape::NodeId> block_w(config.num_blocks), block_b(config.num_blocks);
        for (std::size_t b = 0; b < config.num_blocks; ++b) {
            Tensor w({params.blocks[b].out_channels, params.blocks[b].in_channels, 3, 3});
            w.values = params.blocks[b].weights;
            block_w[b] = tape.leaf(std::move(w), true);
            Tensor bias({params.blocks[b].out_channels});
            bias.values = params.blocks[b].bias;
            block_b[b] = tape.leaf(std::move(bias), true);
        }
        const Tape::NodeId w_id = tape.leaf(head_w, true);
        const Tape::NodeId b_id = tape.leaf(head_b, true);

        std::vector<Tape::NodeId> rows;
        rows.reserve(dataset.size());
        for (const auto& ex : dataset) {
            Tape::NodeId h = tape.constant(ex.image);
            for (std::size_t b = 0; b < config.num_blocks; ++b)
                h = tape.avg_pool2(tape.relu(tape.conv2d(h, block_w[b], block_b[b])));
            Tape::NodeId emb = tape.l2_normalize(tape.flatten(h));
            rows.push_back(tape.linear(emb, w_id, b_id));
        }
        const Tape::NodeId loss = tape.cross_entropy(rows, labels);

        std::size_t correct = 0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const Tensor& row = tape.value(rows[i]);
            std::size_t best = 0;
            for (std::size_t j = 1; j < row.size(); ++j)
                if (row.values[j] > row.values[best]) best = j;
            if (static_cast<int>(best) == labels[i]) ++correct;
        }
        last_acc = static_cast<double>(correct) / static_cast<double>(rows.size());

        if (epoch == epochs) break;  // final pass only measures accuracy

        tape.backward(loss);
        for (std::size_t b = 0; b < config.num_blocks; ++b) {
            const Tensor gw = tape.grad(block_w[b]);
            const Tensor gb = tape.grad(block_b[b]);
            for (std::size_t i = 0; i < params.blocks[b].weights.size(); ++i)
                params.blocks[b].weights[i] -= lr * gw.values[i];
            for (std::size_t i = 0; i < params.blocks[b].bias.size(); ++i)
                params.blocks[b].bias[i] -= lr * gb.values[i];
        }
        const Tensor gw = tape.grad(w_id);
        const Tensor gb = tape.grad(b_id);
        for (std::size_t i = 0; i < head_w.size(); ++i) head_w.values[i] -= lr * gw.values[i];
        for (std::size_t i = 0; i < head_b.size(); ++i) head_b.values[i] -= lr * gb.values[i];
    }

    params.frozen = true;
    result.backbone = std::move(params);
    result.train_accuracy = last_acc;
    result.epochs_run = epochs;
    return result;
}

// ---- episode adaptation ----

struct EpisodeRunConfig {
    AdapterVariant variant = AdapterVariant::Fad;
    FadConfig fad;
    InsertionMask insertion;
    StopRule stop;
    double rho = 0.9;
    double eps = 1e-6;
    double lr = 1.0;
};

struct FinetuneResult {
    std::vector<AdapterParams> adapters;  // indexed by block; meaningful where enabled
    std::vector<double> support_acc_trace;
    double query_accuracy = 0.0;
    std::size_t steps_taken = 0;
};

namespace detail {

inline Tensor weights_as_tensor(const ConvKernelSet& ks) {
    Tensor w({ks.out_channels, ks.in_channels, ks.k, ks.k});
    w.values = ks.weights;
    return w;
}

// Everything about one episode's support graph that stays fixed across
// optimizer steps: cached activations below the first adapted block, band
// masks per adapted block, labels.
struct SupportGraphContext {
    const BackboneParams* backbone = nullptr;
    const EpisodeRunConfig* run = nullptr;
    std::size_t way = 0;
    std::size_t first_enabled = 0;
    std::vector<Tensor> prefix;  // per support image
    std::vector<int> labels;
    std::vector<std::vector<std::shared_ptr<const BandMask>>> masks;  // per block

    struct Built {
        Tape::NodeId loss = -1;
        std::vector<Tape::NodeId> leaves;  // flat order over enabled blocks
        std::vector<Tape::NodeId> rows;    // per-support logit rows
    };

    static SupportGraphContext create(const Episode& ep, const BackboneParams& backbone,
                                      const EpisodeRunConfig& run) {
        const BackboneConfig& cfg = backbone.config;
        SupportGraphContext ctx;
        ctx.backbone = &backbone;
        ctx.run = &run;
        ctx.way = ep.way;
        ctx.first_enabled = cfg.num_blocks;
        for (std::size_t b = 0; b < cfg.num_blocks; ++b)
            if (run.insertion.enabled[b]) {
                ctx.first_enabled = std::min(ctx.first_enabled, b);
            }
        ctx.masks.resize(cfg.num_blocks);
        if (run.variant == AdapterVariant::Fad)
            for (std::size_t b = 0; b < cfg.num_blocks; ++b)
                if (run.insertion.enabled[b]) {
                    const std::size_t side = cfg.block_input_size(b);
                    BandMaskSet set = band_masks(side, side, run.fad.thresholds);
                    ctx.masks[b] = {std::make_shared<BandMask>(std::move(set.low)),
                                    std::make_shared<BandMask>(std::move(set.mid)),
                                    std::make_shared<BandMask>(std::move(set.high))};
                }
        for (const auto& ex : ep.support) {
            Tensor h = ex.image;
            for (std::size_t b = 0; b < ctx.first_enabled; ++b)
                h = avg_pool2(relu(conv2d_same(h, backbone.blocks[b])));
            ctx.prefix.push_back(std::move(h));
            ctx.labels.push_back(ex.label);
        }
        return ctx;
    }

    Tape::NodeId adapter_graph(Tape& tape, Tape::NodeId input, std::size_t block,
                               const std::vector<Tape::NodeId>& weight_nodes,
                               const std::vector<Tape::NodeId>& bias_nodes) const {
        auto branch_bias = [&](std::size_t i) {
            return bias_nodes.empty() ? -1 : bias_nodes[i];
        };
        switch (run->variant) {
            case AdapterVariant::Linear1x1:
                return tape.conv2d(input, weight_nodes[0], branch_bias(0));
            case AdapterVariant::BandwiseSpatial: {
                Tape::NodeId out = tape.conv2d(input, weight_nodes[0], branch_bias(0));
                out = tape.add(out, tape.conv2d(input, weight_nodes[1], branch_bias(1)));
                out = tape.add(out, tape.conv2d(input, weight_nodes[2], branch_bias(2)));
                return out;
            }
            case AdapterVariant::Fad:
            default: {
                const Tape::NodeId spectrum = tape.dft2(input);
                Tape::NodeId out = -1;
                for (std::size_t i = 0; i < 3; ++i) {
                    const Tape::NodeId band =
                        tape.idft2(tape.apply_mask(spectrum, masks[block][i]));
                    const Tape::NodeId conv = tape.conv2d(band, weight_nodes[i], branch_bias(i));
                    out = i == 0 ? conv : tape.add(out, conv);
                }
                return out;
            }
        }
    }

    // Builds the full support-loss graph for the given adapter parameters.
    Built build(Tape& tape, const std::vector<AdapterParams>& adapters) const {
        const BackboneConfig& cfg = backbone->config;
        Built out;

        std::vector<Tape::NodeId> bw(cfg.num_blocks, -1), bb(cfg.num_blocks, -1);
        for (std::size_t b = first_enabled; b < cfg.num_blocks; ++b) {
            bw[b] = tape.constant(weights_as_tensor(backbone->blocks[b]));
            Tensor bias({backbone->blocks[b].out_channels});
            bias.values = backbone->blocks[b].bias;
            bb[b] = tape.constant(std::move(bias));
        }

        std::vector<std::vector<Tape::NodeId>> weight_nodes(cfg.num_blocks);
        std::vector<std::vector<Tape::NodeId>> bias_nodes(cfg.num_blocks);
        for (std::size_t b = 0; b < cfg.num_blocks; ++b)
            if (run->insertion.enabled[b]) {
                for (const auto& branch : adapters[b].branches) {
                    const Tape::NodeId id = tape.leaf(weights_as_tensor(branch), true);
                    weight_nodes[b].push_back(id);
                    out.leaves.push_back(id);
                }
                if (run->fad.use_bias)
                    for (const auto& branch : adapters[b].branches) {
                        Tensor bias({branch.out_channels});
                        bias.values = branch.bias;
                        const Tape::NodeId id = tape.leaf(std::move(bias), true);
                        bias_nodes[b].push_back(id);
                        out.leaves.push_back(id);
                    }
            }

        std::vector<Tape::NodeId> emb;
        emb.reserve(prefix.size());
        for (const Tensor& act : prefix) {
            Tape::NodeId h = tape.constant(act);
            for (std::size_t b = first_enabled; b < cfg.num_blocks; ++b) {
                Tape::NodeId conv = tape.conv2d(h, bw[b], bb[b]);
                if (run->insertion.enabled[b])
                    conv = tape.add(conv,
                                    adapter_graph(tape, h, b, weight_nodes[b], bias_nodes[b]));
                h = tape.avg_pool2(tape.relu(conv));
            }
            emb.push_back(tape.l2_normalize(tape.flatten(h)));
        }

        std::vector<Tape::NodeId> centroid(way);
        for (std::size_t c = 0; c < way; ++c) {
            std::vector<Tape::NodeId> members;
            for (std::size_t i = 0; i < emb.size(); ++i)
                if (labels[i] == static_cast<int>(c)) members.push_back(emb[i]);
            if (members.empty())
                throw std::invalid_argument("support graph: class " + std::to_string(c) +
                                            " absent from support");
            centroid[c] = tape.l2_normalize(tape.mean(members));
        }

        out.rows.reserve(emb.size());
        for (std::size_t i = 0; i < emb.size(); ++i) {
            std::vector<Tape::NodeId> logits;
            for (std::size_t c = 0; c < way; ++c)
                logits.push_back(tape.scale(tape.cosine(emb[i], centroid[c]), kNccTemperature));
            out.rows.push_back(tape.concat(logits));
        }
        out.loss = tape.cross_entropy(out.rows, labels);
        return out;
    }
};

inline double rows_accuracy(const Tape& tape, const std::vector<Tape::NodeId>& rows,
                            const std::vector<int>& labels) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Tensor& row = tape.value(rows[i]);
        std::size_t best = 0;
        for (std::size_t j = 1; j < row.size(); ++j)
            if (row.values[j] > row.values[best]) best = j;
        if (static_cast<int>(best) == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace detail

// Plain (gradient-free) embedding of one image through the adapted backbone.
inline Tensor adapted_embedding(const Tensor& image, const BackboneParams& backbone,
                                const std::vector<AdapterParams>* adapters,
                                const InsertionMask* mask, const FadConfig* fad_config) {
    return backbone_forward(image, backbone, adapters, mask, fad_config);
}

// Query accuracy of an episode under the given (possibly absent) adapters.
inline double evaluate_episode(const Episode& ep, const BackboneParams& backbone,
                               const std::vector<AdapterParams>* adapters = nullptr,
                               const InsertionMask* mask = nullptr,
                               const FadConfig* fad_config = nullptr) {
    std::vector<Tensor> support_emb, query_emb;
    std::vector<int> support_labels, query_labels;
    for (const auto& ex : ep.support) {
        support_emb.push_back(backbone_forward(ex.image, backbone, adapters, mask, fad_config));
        support_labels.push_back(ex.label);
    }
    for (const auto& ex : ep.query) {
        query_emb.push_back(backbone_forward(ex.image, backbone, adapters, mask, fad_config));
        query_labels.push_back(ex.label);
    }
    const Tensor logits =
        ncc_logits(support_emb, support_labels, query_emb, static_cast<int>(ep.way));
    return accuracy(logits, query_labels);
}

// Support-set loss under explicit adapter parameters, with optional analytic
// gradients in flatten_params order over the enabled blocks. Used by the
// finite-difference gradient checks.
inline double support_loss(const Episode& ep, const BackboneParams& backbone,
                           const std::vector<AdapterParams>& adapters,
                           const EpisodeRunConfig& run,
                           std::vector<double>* grads_out = nullptr) {
    auto ctx = detail::SupportGraphContext::create(ep, backbone, run);
    Tape tape;
    auto built = ctx.build(tape, adapters);
    const double loss = tape.value(built.loss).values[0];
    if (grads_out) {
        tape.backward(built.loss);
        grads_out->clear();
        for (const Tape::NodeId id : built.leaves) {
            const Tensor g = tape.grad(id);
            grads_out->insert(grads_out->end(), g.values.begin(), g.values.end());
        }
    }
    return loss;
}

// Adapts the enabled adapters on the episode support set with Adadelta until
// the support accuracy rule fires or max_steps optimizer steps have run, then
// classifies the queries with the adapted embeddings.
inline FinetuneResult finetune_episode(const Episode& ep, const BackboneParams& backbone,
                                       const EpisodeRunConfig& run, std::uint64_t seed) {
    run.stop.validate();
    run.fad.validate();
    if (!backbone.frozen)
        throw std::invalid_argument("finetune_episode: backbone must be frozen");
    const BackboneConfig& cfg = backbone.config;
    if (run.insertion.enabled.size() != cfg.num_blocks)
        throw std::invalid_argument("finetune_episode: insertion mask length mismatch");
    std::vector<std::size_t> class_count(ep.way, 0);
    for (const auto& ex : ep.support) {
        if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= ep.way)
            throw std::invalid_argument("finetune_episode: support label out of range");
        ++class_count[ex.label];
    }
    for (std::size_t c = 0; c < ep.way; ++c)
        if (class_count[c] == 0)
            throw std::invalid_argument("finetune_episode: class " + std::to_string(c) +
                                        " absent from support");

    FinetuneResult result;
    result.adapters.resize(cfg.num_blocks);
    for (std::size_t b = 0; b < cfg.num_blocks; ++b)
        if (run.insertion.enabled[b])
            result.adapters[b] = init_adapter(cfg.block_in_channels(b), cfg.block_out_channels(b),
                                              run.fad, run.variant, mix_seed(seed, b));

    if (!run.insertion.any()) {
        // nothing to adapt; report the frozen-backbone result
        result.query_accuracy = evaluate_episode(ep, backbone);
        return result;
    }

    auto ctx = detail::SupportGraphContext::create(ep, backbone, run);

    std::vector<double> flat;
    for (std::size_t b = 0; b < cfg.num_blocks; ++b)
        if (run.insertion.enabled[b]) {
            const auto part = flatten_params(result.adapters[b]);
            flat.insert(flat.end(), part.begin(), part.end());
        }
    AdadeltaState opt(flat.size(), run.rho, run.eps, run.lr);

    std::size_t patience_left = run.stop.patience_after_threshold;
    bool threshold_reached = false;

    for (;;) {
        Tape tape;
        auto built = ctx.build(tape, result.adapters);
        const double support_acc = detail::rows_accuracy(tape, built.rows, ctx.labels);
        result.support_acc_trace.push_back(support_acc);

        if (support_acc >= run.stop.support_acc_threshold) threshold_reached = true;
        if (threshold_reached) {
            if (patience_left == 0) break;
            --patience_left;
        }
        if (result.steps_taken >= run.stop.max_steps) break;

        tape.backward(built.loss);
        std::vector<double> grads;
        grads.reserve(flat.size());
        for (const Tape::NodeId id : built.leaves) {
            const Tensor g = tape.grad(id);
            grads.insert(grads.end(), g.values.begin(), g.values.end());
        }

        adadelta_step(flat, grads, opt);
        std::size_t offset = 0;
        for (std::size_t b = 0; b < cfg.num_blocks; ++b)
            if (run.insertion.enabled[b]) {
                const std::size_t n = param_count(result.adapters[b]);
                std::vector<double> part(flat.begin() + offset, flat.begin() + offset + n);
                unflatten_params(part, result.adapters[b]);
                offset += n;
            }
        ++result.steps_taken;
    }

    result.query_accuracy =
        evaluate_episode(ep, backbone, &result.adapters, &run.insertion, &run.fad);
    return result;
}

}  // namespace fad
